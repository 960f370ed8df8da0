#include "flowstate/causal_norm.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "doctest.h"

using namespace flowstate;

TEST_CASE("constant series normalizes to zeros with clamped sigma") {
  const std::vector<double> x(16, 2.5);  // exactly representable sums
  const auto out = causal_normalize(x);
  for (std::size_t t = 0; t < x.size(); ++t) {
    CHECK(out.x_norm[t] == 0.0);
    CHECK(out.stats.sigma_r[t] == kNormEps);
    CHECK(out.stats.mu_r[t] == 2.5);
  }
}

TEST_CASE("hand-evaluated statistics for x = [1, 3]") {
  SUBCASE("elementwise-cumsum mode") {
    const auto out = causal_normalize({1.0, 3.0}, VarianceMode::kElementwiseCumsum);
    CHECK(out.stats.mu_r[0] == 1.0);
    CHECK(out.stats.mu_r[1] == 2.0);
    CHECK(out.stats.sigma_r[1] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(out.x_norm[1] == doctest::Approx(1.0 / std::sqrt(0.5)).epsilon(1e-12));
    CHECK(out.x_norm[1] == doctest::Approx(1.41421356).epsilon(1e-8));
  }
  SUBCASE("exact-prefix-variance mode") {
    const auto out = causal_normalize({1.0, 3.0}, VarianceMode::kExactPrefixVariance);
    CHECK(out.stats.sigma_r[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.x_norm[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("modes coincide at L = 1") {
    const auto a = causal_normalize({4.2}, VarianceMode::kElementwiseCumsum);
    const auto b = causal_normalize({4.2}, VarianceMode::kExactPrefixVariance);
    CHECK(a.stats.sigma_r[0] == b.stats.sigma_r[0]);
    CHECK(a.x_norm[0] == 0.0);
    CHECK(b.x_norm[0] == 0.0);
  }
}

TEST_CASE("sigma at the first step is clamped and x_norm[0] is 0") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x{u(rng), u(rng), u(rng)};
    const auto out = causal_normalize(x);
    CHECK(out.stats.sigma_r[0] == kNormEps);
    CHECK(out.x_norm[0] == 0.0);
    CHECK(out.stats.mu_r[0] == x[0]);
  }
}

TEST_CASE("non-finite input is rejected") {
  CHECK_THROWS_AS((void)causal_normalize({1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS((void)causal_normalize({}), std::invalid_argument);
  CHECK_THROWS_AS((void)causal_normalize({1.0, INFINITY}), std::invalid_argument);
}

TEST_CASE("strict causality: prefixes are invariant under suffix mutation") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> x(40);
    for (auto& v : x) v = u(rng);
    std::vector<double> y = x;
    for (std::size_t t = 20; t < y.size(); ++t) y[t] = u(rng) * 10.0;
    for (auto mode : {VarianceMode::kElementwiseCumsum, VarianceMode::kExactPrefixVariance}) {
      const auto a = causal_normalize(x, mode);
      const auto b = causal_normalize(y, mode);
      for (std::size_t t = 0; t < 20; ++t) {
        CHECK(a.x_norm[t] == b.x_norm[t]);
        CHECK(a.stats.mu_r[t] == b.stats.mu_r[t]);
        CHECK(a.stats.sigma_r[t] == b.stats.sigma_r[t]);
      }
    }
  }
}

TEST_CASE("prefix mean telescopes to zero") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(64);
  for (auto& v : x) v = u(rng);
  const auto out = causal_normalize(x);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i <= t; ++i) acc += x[i] - out.stats.mu_r[t];
    CHECK(std::fabs(acc / static_cast<double>(t + 1)) < 1e-12);
  }
}

TEST_CASE("denormalize round trip and hand value") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::vector<double> x(32);
  for (auto& v : x) v = u(rng);
  const auto out = causal_normalize(x);
  for (std::size_t t = 0; t < x.size(); ++t) {
    const auto rt = denormalize_forecast({out.x_norm[t]}, out.stats, t + 1);
    CHECK(std::fabs(rt[0] - x[t]) < 1e-12);
  }

  CausalStats stats;
  stats.mu_r = {0.0, 2.0};
  stats.sigma_r = {1.0, std::sqrt(0.5)};
  const auto v = denormalize_forecast({1.0}, stats, 2);
  CHECK(v[0] == doctest::Approx(2.7071067811865475).epsilon(1e-12));

  const auto zeros = denormalize_forecast({0.0, 0.0, 0.0}, stats, 2);
  for (double z : zeros) CHECK(z == 2.0);

  CHECK_THROWS_AS((void)denormalize_forecast({1.0}, stats, 0), std::out_of_range);
  CHECK_THROWS_AS((void)denormalize_forecast({1.0}, stats, 3), std::out_of_range);
}

TEST_CASE("variance modes differ beyond L = 1 (documented ambiguity)") {
  const auto a = causal_normalize({1.0, 3.0}, VarianceMode::kElementwiseCumsum);
  const auto b = causal_normalize({1.0, 3.0}, VarianceMode::kExactPrefixVariance);
  CHECK(a.stats.sigma_r[1] != b.stats.sigma_r[1]);
}

TEST_CASE("masked normalization freezes statistics on placeholder steps") {
  const std::vector<double> x = {1.0, 3.0, 0.0, 0.0, 5.0};
  const std::vector<std::uint8_t> observed = {1, 1, 0, 0, 1};
  const auto out = causal_normalize_masked(x, observed);
  CHECK(out.stats.mu_r[1] == 2.0);
  CHECK(out.stats.mu_r[2] == 2.0);  // frozen
  CHECK(out.stats.mu_r[3] == 2.0);
  CHECK(out.stats.sigma_r[2] == out.stats.sigma_r[1]);
  CHECK(out.x_norm[2] == 0.0);
  CHECK(out.x_norm[3] == 0.0);
  CHECK(out.stats.mu_r[4] == 3.0);  // (1+3+5)/3, placeholder values never enter

  // all-observed mask reduces to the plain path
  const auto plain = causal_normalize({1.0, 3.0, 5.0});
  const auto masked = causal_normalize_masked({1.0, 3.0, 5.0}, {1, 1, 1});
  for (int t = 0; t < 3; ++t) {
    CHECK(plain.x_norm[t] == masked.x_norm[t]);
    CHECK(plain.stats.mu_r[t] == masked.stats.mu_r[t]);
    CHECK(plain.stats.sigma_r[t] == masked.stats.sigma_r[t]);
  }
}
