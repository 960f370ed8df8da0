#include "flowstate/basis.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <functional>

#include "doctest.h"
#include "support/oracles.hpp"

using namespace flowstate;

namespace {

// Quadrature projection of f onto the orthonormal basis (test-side oracle).
std::vector<double> project(const BasisSpec& spec, const std::function<double(double)>& f) {
  const auto q = oracles::gauss_legendre(256);
  std::vector<double> coeffs(static_cast<std::size_t>(spec.n), 0.0);
  const double mid = 0.5 * (spec.a + spec.b);
  const double half = 0.5 * (spec.b - spec.a);
  for (int k = 0; k < 256; ++k) {
    const double u = mid + half * q.nodes[k];
    const double w = half * q.weights[k];
    const auto p = eval_basis(spec, u);
    for (long i = 0; i < spec.n; ++i) coeffs[static_cast<std::size_t>(i)] += w * f(u) * p[static_cast<std::size_t>(i)];
  }
  return coeffs;
}

}  // namespace

TEST_CASE("legendre endpoint and symmetry identities") {
  const BasisSpec spec = BasisSpec::make(BasisFamily::kLegendre, 5);
  const auto at1 = eval_basis(spec, 1.0);
  CHECK(at1[0] == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
  CHECK(at1[1] == doctest::Approx(std::sqrt(1.5)).epsilon(1e-14));
  CHECK(at1[2] == doctest::Approx(std::sqrt(2.5)).epsilon(1e-14));

  const auto at0 = eval_basis(spec, 0.0);
  CHECK(at0[1] == 0.0);  // odd degrees vanish at the origin
  CHECK(at0[3] == 0.0);
}

TEST_CASE("domain validation") {
  const BasisSpec spec = BasisSpec::make(BasisFamily::kLegendre, 3);
  CHECK_THROWS_AS((void)eval_basis(spec, 1.5), std::domain_error);
  const BasisSpec half = BasisSpec::make(BasisFamily::kHalfLegendre, 3);
  CHECK_THROWS_AS((void)eval_basis(half, -0.1), std::domain_error);
  CHECK(half.a == 0.0);
  CHECK(half.b == 1.0);

  BasisSpec bad = spec;
  bad.a = 0.0;  // legendre must live on [-1,1]
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("orthonormality of all three families under 256-point quadrature") {
  const auto q = oracles::gauss_legendre(256);
  for (auto family : {BasisFamily::kLegendre, BasisFamily::kHalfLegendre, BasisFamily::kFourier}) {
    const BasisSpec spec = BasisSpec::make(family, 8);
    const double mid = 0.5 * (spec.a + spec.b);
    const double half = 0.5 * (spec.b - spec.a);
    std::vector<std::vector<double>> gram(8, std::vector<double>(8, 0.0));
    for (int k = 0; k < 256; ++k) {
      const double u = mid + half * q.nodes[k];
      const double w = half * q.weights[k];
      const auto p = eval_basis(spec, u);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) gram[i][j] += w * p[i] * p[j];
    }
    for (int i = 0; i < 8; ++i) {
      for (int j = 0; j < 8; ++j) {
        CHECK(std::fabs(gram[i][j] - (i == j ? 1.0 : 0.0)) < 1e-8);
      }
    }
  }
}

TEST_CASE("decode_readout base cases and dense oracle") {
  SUBCASE("identity readout reproduces the encoder output") {
    const long h = 6;
    Tensor w(h, h);
    for (long i = 0; i < h; ++i) w.at(i, i) = 1.0;
    std::vector<double> o(h);
    for (long i = 0; i < h; ++i) o[static_cast<std::size_t>(i)] = 0.3 * static_cast<double>(i) - 1.0;
    const Tensor coeffs = decode_readout(o, w, 1, h);
    CHECK(coeffs.rows == 1);
    CHECK(coeffs.cols == h);
    for (long i = 0; i < h; ++i) CHECK(coeffs.at(0, i) == o[static_cast<std::size_t>(i)]);
  }
  SUBCASE("zero input gives zero coefficients") {
    Tensor w(6, 4, 0.5);
    const Tensor coeffs = decode_readout(std::vector<double>(4, 0.0), w, 2, 3);
    for (long i = 0; i < coeffs.size(); ++i) CHECK(coeffs[i] == 0.0);
  }
  SUBCASE("random readout matches the naive triple loop") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const long K = 3, n = 4, H = 7;
    Tensor w(K * n, H);
    for (long i = 0; i < w.size(); ++i) w[i] = u(rng);
    std::vector<double> o(H);
    for (auto& v : o) v = u(rng);
    const Tensor got = decode_readout(o, w, K, n);
    Tensor ocol(H, 1);
    ocol.v = o;
    const Tensor want = oracles::naive_matmul(w, ocol);
    for (long q = 0; q < K; ++q)
      for (long i = 0; i < n; ++i)
        CHECK(std::fabs(got.at(q, i) - want.at(q * n + i, 0)) < 1e-12);
  }
  SUBCASE("shape mismatch is an error") {
    Tensor w(5, 4);
    CHECK_THROWS_AS((void)decode_readout(std::vector<double>(4, 0.0), w, 2, 3),
                    std::invalid_argument);
  }
}

namespace {
ContinuousForecast make_fc(const Tensor& coeffs, BasisFamily family, double s_delta, long t_base) {
  ContinuousForecast fc;
  fc.coeffs = coeffs;
  fc.basis = BasisSpec::make(family, coeffs.cols);
  fc.quantile_levels.resize(static_cast<std::size_t>(coeffs.rows));
  for (long q = 0; q < coeffs.rows; ++q) {
    fc.quantile_levels[static_cast<std::size_t>(q)] =
        (static_cast<double>(q) + 1.0) / (static_cast<double>(coeffs.rows) + 1.0);
  }
  fc.s_delta = s_delta;
  fc.t_base = t_base;
  return fc;
}
}  // namespace

TEST_CASE("constant coefficient samples to a constant forecast") {
  Tensor coeffs(1, 4);
  coeffs.at(0, 0) = std::sqrt(2.0);  // sqrt(2) * (1/sqrt(2)) = 1
  const auto fc = make_fc(coeffs, BasisFamily::kLegendre, 1.0, 24);
  const Tensor out = sample_forecast(fc);
  CHECK(out.rows == 24);
  for (long k = 0; k < out.rows; ++k) CHECK(out.at(k, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("all-zero coefficients sample to zero") {
  Tensor coeffs(2, 5);
  const auto fc = make_fc(coeffs, BasisFamily::kFourier, 1.0, 24);
  const Tensor out = sample_forecast(fc);
  for (long i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("projected cubic polynomial is reproduced exactly on the grid") {
  const BasisSpec spec = BasisSpec::make(BasisFamily::kLegendre, 6);
  auto cube = [](double u) { return u * u * u; };
  const auto c = project(spec, cube);
  Tensor coeffs(1, spec.n);
  for (long i = 0; i < spec.n; ++i) coeffs.at(0, i) = c[static_cast<std::size_t>(i)];
  auto fc = make_fc(coeffs, BasisFamily::kLegendre, 1.0, 24);
  const Tensor out = sample_forecast(fc);
  const auto grid = sample_grid(spec, 1.0, 24, 24);
  for (long k = 0; k < out.rows; ++k) {
    CHECK(std::fabs(out.at(k, 0) - cube(grid[static_cast<std::size_t>(k)])) < 1e-10);
  }
}

TEST_CASE("polynomial reproduction for every degree below n") {
  const BasisSpec spec = BasisSpec::make(BasisFamily::kLegendre, 7);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int deg = 0; deg < 7; ++deg) {
    std::vector<double> poly(static_cast<std::size_t>(deg) + 1);
    for (auto& p : poly) p = u(rng);
    auto f = [&](double x) {
      double acc = 0.0, xp = 1.0;
      for (double p : poly) {
        acc += p * xp;
        xp *= x;
      }
      return acc;
    };
    const auto c = project(spec, f);
    Tensor coeffs(1, spec.n);
    for (long i = 0; i < spec.n; ++i) coeffs.at(0, i) = c[static_cast<std::size_t>(i)];
    auto fc = make_fc(coeffs, BasisFamily::kLegendre, 1.0, 12);
    const Tensor out = sample_forecast(fc);
    const auto grid = sample_grid(spec, 1.0, 12, 12);
    for (long k = 0; k < out.rows; ++k) {
      CHECK(std::fabs(out.at(k, 0) - f(grid[static_cast<std::size_t>(k)])) < 1e-10);
    }
  }
}

TEST_CASE("resolution consistency: coarse samples lie on the continuous curve") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor coeffs(3, 6);
  for (long i = 0; i < coeffs.size(); ++i) coeffs[i] = u(rng);
  auto coarse = make_fc(coeffs, BasisFamily::kLegendre, 1.0, 24);
  const Tensor out_coarse = sample_forecast(coarse);
  const auto grid_coarse = sample_grid(coarse.basis, 1.0, 24, 24);

  auto fine = make_fc(coeffs, BasisFamily::kLegendre, 0.5, 24);
  const Tensor out_fine = sample_forecast(fine);
  CHECK(out_fine.rows == 48);

  // the continuous curve evaluated at the coarse grid reproduces the coarse output bit-for-bit
  for (long k = 0; k < out_coarse.rows; ++k) {
    const auto vals = evaluate_at(coarse, grid_coarse[static_cast<std::size_t>(k)]);
    for (long q = 0; q < 3; ++q) CHECK(out_coarse.at(k, q) == vals[static_cast<std::size_t>(q)]);
    const auto vals_fine_curve = evaluate_at(fine, grid_coarse[static_cast<std::size_t>(k)]);
    for (long q = 0; q < 3; ++q) CHECK(vals[static_cast<std::size_t>(q)] == vals_fine_curve[static_cast<std::size_t>(q)]);
  }
}

TEST_CASE("sampling is linear in the coefficients") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor c1(1, 5), c2(1, 5);
  for (long i = 0; i < 5; ++i) {
    c1.at(0, i) = u(rng);
    c2.at(0, i) = u(rng);
  }
  const double alpha = 1.75;
  Tensor mix(1, 5);
  for (long i = 0; i < 5; ++i) mix.at(0, i) = alpha * c1.at(0, i) + c2.at(0, i);
  const Tensor f1 = sample_forecast(make_fc(c1, BasisFamily::kLegendre, 1.0, 16));
  const Tensor f2 = sample_forecast(make_fc(c2, BasisFamily::kLegendre, 1.0, 16));
  const Tensor fm = sample_forecast(make_fc(mix, BasisFamily::kLegendre, 1.0, 16));
  for (long k = 0; k < fm.size(); ++k) {
    CHECK(std::fabs(fm[k] - (alpha * f1[k] + f2[k])) < 1e-12);
  }
}

TEST_CASE("quantile columns are nondecreasing after the crossing fix") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Tensor coeffs(5, 6);
  for (long i = 0; i < coeffs.size(); ++i) coeffs[i] = u(rng);
  const Tensor out = sample_forecast(make_fc(coeffs, BasisFamily::kFourier, 1.0, 24));
  for (long k = 0; k < out.rows; ++k) {
    for (long q = 0; q + 1 < out.cols; ++q) CHECK(out.at(k, q) <= out.at(k, q + 1));
  }
}

TEST_CASE("half-legendre uses the affine map onto [0,1]") {
  const BasisSpec spec = BasisSpec::make(BasisFamily::kHalfLegendre, 4);
  const auto p = eval_basis(spec, 0.75);
  // p_j(u) = sqrt(2j+1) * P_j(2u-1)
  CHECK(p[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(std::sqrt(3.0) * 0.5).epsilon(1e-14));
  CHECK(p[2] == doctest::Approx(std::sqrt(5.0) * 0.5 * (3.0 * 0.25 - 1.0)).epsilon(1e-12));
}
