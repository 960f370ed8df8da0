// Independent reference implementations used as test oracles. These stay
// deliberately naive and separate from the library code paths they check.
#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "flowstate/scan.hpp"
#include "flowstate/tensor.hpp"

namespace oracles {

// Sequential unrolling of the diagonal recurrence s_t = a_t s_{t-1} + b_t.
inline std::vector<flowstate::ComplexVec> sequential_scan(
    const std::vector<flowstate::ScanElement>& elements) {
  std::vector<flowstate::ComplexVec> out;
  if (elements.empty()) return out;
  const std::size_t P = elements[0].a.size();
  std::vector<std::complex<double>> state(P, {0.0, 0.0});
  for (const auto& e : elements) {
    for (std::size_t p = 0; p < P; ++p) {
      const std::complex<double> a(e.a.re[p], e.a.im[p]);
      const std::complex<double> b(e.b.re[p], e.b.im[p]);
      state[p] = a * state[p] + b;
    }
    flowstate::ComplexVec s(P);
    for (std::size_t p = 0; p < P; ++p) {
      s.re[p] = state[p].real();
      s.im[p] = state[p].imag();
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Prefix sums where each prefix is evaluated by pairwise (cascade) summation.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n == 1) return x[0];
  if (n == 0) return 0.0;
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

inline std::vector<double> pairwise_prefix_sums(const std::vector<double>& x) {
  std::vector<double> out(x.size());
  for (std::size_t t = 0; t < x.size(); ++t) out[t] = pairwise_sum(x.data(), t + 1);
  return out;
}

// e^z via argument halving plus a long Taylor series; independent of std::exp
// applied to complex arguments.
inline std::complex<double> series_exp(std::complex<double> z) {
  int halvings = 0;
  while (std::abs(z) > 0.25) {
    z *= 0.5;
    ++halvings;
  }
  std::complex<double> sum(1.0, 0.0), term(1.0, 0.0);
  for (int k = 1; k <= 40; ++k) {
    term *= z / static_cast<double>(k);
    sum += term;
  }
  for (int i = 0; i < halvings; ++i) sum *= sum;
  return sum;
}

// Gauss-Legendre nodes/weights on [-1, 1] by Newton iteration on P_n.
struct Quadrature {
  std::vector<double> nodes, weights;
};

inline Quadrature gauss_legendre(int n) {
  Quadrature q;
  q.nodes.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    // Chebyshev-based initial guess.
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::fabs(dx) < 1e-15) break;
    }
    q.nodes[n - 1 - i] = x;
    q.weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return q;
}

// Naive triple-loop matmul.
inline flowstate::Tensor naive_matmul(const flowstate::Tensor& a, const flowstate::Tensor& b) {
  flowstate::Tensor out(a.rows, b.cols);
  for (long i = 0; i < a.rows; ++i)
    for (long k = 0; k < a.cols; ++k)
      for (long j = 0; j < b.cols; ++j) out.at(i, j) += a.at(i, k) * b.at(k, j);
  return out;
}

inline double rel_err(double got, double want, double floor_scale = 1e-12) {
  const double scale = std::max({std::fabs(got), std::fabs(want), floor_scale});
  return std::fabs(got - want) / scale;
}

inline std::vector<flowstate::ScanElement> random_elements(std::mt19937_64& rng, long L, long P,
                                                           double a_mag = 0.95) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<flowstate::ScanElement> out;
  for (long t = 0; t < L; ++t) {
    flowstate::ScanElement e;
    e.a = flowstate::ComplexVec(static_cast<std::size_t>(P));
    e.b = flowstate::ComplexVec(static_cast<std::size_t>(P));
    for (long p = 0; p < P; ++p) {
      e.a.re[p] = a_mag * u(rng);
      e.a.im[p] = a_mag * u(rng);
      e.b.re[p] = u(rng);
      e.b.im[p] = u(rng);
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace oracles
