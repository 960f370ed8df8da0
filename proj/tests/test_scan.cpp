#include "flowstate/scan.hpp"

#include <random>
#include <stdexcept>

#include "doctest.h"
#include "support/oracles.hpp"

using namespace flowstate;

TEST_CASE("scan_op identity transition reduces to prefix sum") {
  ScanElement l{ComplexVec({1.0}, {0.0}), ComplexVec({2.0}, {0.0})};
  ScanElement r{ComplexVec({1.0}, {0.0}), ComplexVec({3.0}, {0.0})};
  const ScanElement out = scan_op(l, r);
  CHECK(out.a.re[0] == 1.0);
  CHECK(out.a.im[0] == 0.0);
  CHECK(out.b.re[0] == 5.0);
}

TEST_CASE("scan_op zero transition forgets history") {
  ScanElement l{ComplexVec({0.4}, {0.2}), ComplexVec({2.5}, {-1.0})};
  ScanElement r{ComplexVec({0.0}, {0.0}), ComplexVec({7.0}, {0.0})};
  const ScanElement out = scan_op(l, r);
  CHECK(out.a.re[0] == 0.0);
  CHECK(out.b.re[0] == 7.0);
  CHECK(out.b.im[0] == 0.0);
}

TEST_CASE("scan_op equals direct double substitution of the recurrence") {
  std::mt19937_64 rng(7);
  auto elems = oracles::random_elements(rng, 2, 4);
  const ScanElement composed = scan_op(elems[0], elems[1]);
  // apply both elements to a random start state and compare
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<std::complex<double>> s(4);
    for (auto& v : s) v = {u(rng), u(rng)};
    for (std::size_t p = 0; p < 4; ++p) {
      std::complex<double> cur = s[p];
      for (const auto& e : elems) {
        cur = std::complex<double>(e.a.re[p], e.a.im[p]) * cur +
              std::complex<double>(e.b.re[p], e.b.im[p]);
      }
      const std::complex<double> via =
          std::complex<double>(composed.a.re[p], composed.a.im[p]) * s[p] +
          std::complex<double>(composed.b.re[p], composed.b.im[p]);
      CHECK(oracles::rel_err(via.real(), cur.real()) < 1e-12);
      CHECK(oracles::rel_err(via.imag(), cur.imag()) < 1e-12);
    }
  }
}

TEST_CASE("scan_op length mismatch is an error") {
  ScanElement l{ComplexVec({1.0, 2.0}, {0.0, 0.0}), ComplexVec({1.0, 1.0}, {0.0, 0.0})};
  ScanElement r{ComplexVec({1.0}, {0.0}), ComplexVec({1.0}, {0.0})};
  CHECK_THROWS_AS((void)scan_op(l, r), std::invalid_argument);
}

TEST_CASE("scan_op associativity property") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    auto e = oracles::random_elements(rng, 3, 5);
    const ScanElement left = scan_op(scan_op(e[0], e[1]), e[2]);
    const ScanElement right = scan_op(e[0], scan_op(e[1], e[2]));
    for (std::size_t p = 0; p < 5; ++p) {
      CHECK(std::fabs(left.a.re[p] - right.a.re[p]) < 1e-12);
      CHECK(std::fabs(left.a.im[p] - right.a.im[p]) < 1e-12);
      CHECK(std::fabs(left.b.re[p] - right.b.re[p]) < 1e-12);
      CHECK(std::fabs(left.b.im[p] - right.b.im[p]) < 1e-12);
    }
  }
}

TEST_CASE("parallel_scan prefix sum base cases") {
  std::vector<ScanElement> elems;
  for (int t = 0; t < 3; ++t) {
    elems.push_back({ComplexVec({1.0}, {0.0}), ComplexVec({1.0}, {0.0})});
  }
  const auto states = parallel_scan(elems);
  REQUIRE(states.size() == 3);
  CHECK(states[0].re[0] == 1.0);
  CHECK(states[1].re[0] == 2.0);
  CHECK(states[2].re[0] == 3.0);

  const auto single = parallel_scan({elems[0]});
  REQUIRE(single.size() == 1);
  CHECK(single[0].re[0] == 1.0);

  CHECK(parallel_scan({}).empty());
}

TEST_CASE("parallel_scan matches the sequential recurrence") {
  std::mt19937_64 rng(21);
  auto elems = oracles::random_elements(rng, 64, 8);
  const auto got = parallel_scan(elems);
  const auto want = oracles::sequential_scan(elems);
  REQUIRE(got.size() == want.size());
  for (std::size_t t = 0; t < got.size(); ++t) {
    for (std::size_t p = 0; p < 8; ++p) {
      CHECK(oracles::rel_err(got[t].re[p], want[t].re[p]) < 1e-10);
      CHECK(oracles::rel_err(got[t].im[p], want[t].im[p]) < 1e-10);
    }
  }
}

TEST_CASE("parallel_scan is deterministic across runs") {
  std::mt19937_64 rng(33);
  auto elems = oracles::random_elements(rng, 100, 4);
  const auto a = parallel_scan(elems);
  const auto b = parallel_scan(elems);
  for (std::size_t t = 0; t < a.size(); ++t) {
    for (std::size_t p = 0; p < 4; ++p) {
      CHECK(a[t].re[p] == b[t].re[p]);
      CHECK(a[t].im[p] == b[t].im[p]);
    }
  }
}

TEST_CASE("parallel_scan prefix results do not depend on the suffix") {
  // Identity padding composes exactly, so prefixes must be bit-identical
  // between a short scan and the same prefix inside a longer scan.
  std::mt19937_64 rng(55);
  for (long L : {5L, 17L, 63L, 100L}) {
    auto elems = oracles::random_elements(rng, L, 3);
    const auto full = parallel_scan(elems);
    const long cut = L / 2 + 1;
    const auto part = parallel_scan(
        std::vector<ScanElement>(elems.begin(), elems.begin() + cut));
    for (long t = 0; t < cut; ++t) {
      for (std::size_t p = 0; p < 3; ++p) {
        CHECK(full[t].re[p] == part[t].re[p]);
        CHECK(full[t].im[p] == part[t].im[p]);
      }
    }
  }
}

TEST_CASE("cumulative_sum basics") {
  CHECK(cumulative_sum({1.0, 2.0, 3.0}) == std::vector<double>{1.0, 3.0, 6.0});
  CHECK(cumulative_sum({}).empty());
}

TEST_CASE("cumulative_sum matches pairwise-summation oracle") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(100);
  for (auto& v : x) v = u(rng);
  const auto got = cumulative_sum(x);
  const auto want = oracles::pairwise_prefix_sums(x);
  for (std::size_t t = 0; t < x.size(); ++t) {
    CHECK(std::fabs(got[t] - want[t]) < 1e-12);
  }
}
