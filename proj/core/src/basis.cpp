#include "flowstate/basis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flowstate {

BasisFamily basis_family_from_string(const std::string& s) {
  if (s == "legendre") return BasisFamily::kLegendre;
  if (s == "half_legendre") return BasisFamily::kHalfLegendre;
  if (s == "fourier") return BasisFamily::kFourier;
  throw std::invalid_argument("unknown basis family: '" + s + "'");
}

std::string to_string(BasisFamily f) {
  switch (f) {
    case BasisFamily::kLegendre: return "legendre";
    case BasisFamily::kHalfLegendre: return "half_legendre";
    case BasisFamily::kFourier: return "fourier";
  }
  return "?";
}

BasisSpec BasisSpec::make(BasisFamily family, long n) {
  BasisSpec s;
  s.family = family;
  s.n = n;
  if (family == BasisFamily::kHalfLegendre) {
    s.a = 0.0;
    s.b = 1.0;
  } else {
    s.a = -1.0;
    s.b = 1.0;
  }
  s.validate();
  return s;
}

void BasisSpec::validate() const {
  if (n < 1) throw std::invalid_argument("BasisSpec: n must be >= 1");
  if (!(a < b)) throw std::invalid_argument("BasisSpec: domain must satisfy a < b");
  const bool half = family == BasisFamily::kHalfLegendre;
  const double ea = half ? 0.0 : -1.0;
  const double eb = 1.0;
  if (a != ea || b != eb) {
    throw std::invalid_argument("BasisSpec: domain does not match family convention");
  }
}

namespace {

// Orthonormalized Legendre values sqrt((2j+1)/2) * P_j(x) for j = 0..n-1 via
// the three-term recurrence.
void legendre_orthonormal(long n, double x, double norm_scale, std::vector<double>& out) {
  double p_prev = 1.0;
  double p_cur = x;
  for (long j = 0; j < n; ++j) {
    double pj;
    if (j == 0) {
      pj = 1.0;
    } else if (j == 1) {
      pj = x;
    } else {
      const double p_next =
          ((2.0 * j - 1.0) * x * p_cur - (j - 1.0) * p_prev) / static_cast<double>(j);
      p_prev = p_cur;
      p_cur = p_next;
      pj = p_next;
    }
    out[static_cast<std::size_t>(j)] = std::sqrt((2.0 * j + 1.0) / norm_scale) * pj;
  }
}

}  // namespace

std::vector<double> eval_basis(const BasisSpec& spec, double u) {
  spec.validate();
  if (!(u >= spec.a && u <= spec.b)) {
    throw std::domain_error("eval_basis: argument outside basis domain");
  }
  std::vector<double> out(static_cast<std::size_t>(spec.n));
  switch (spec.family) {
    case BasisFamily::kLegendre:
      legendre_orthonormal(spec.n, u, 2.0, out);
      break;
    case BasisFamily::kHalfLegendre:
      legendre_orthonormal(spec.n, 2.0 * u - 1.0, 1.0, out);
      break;
    case BasisFamily::kFourier: {
      out[0] = 1.0 / std::numbers::sqrt2;
      for (long j = 1; j < spec.n; ++j) {
        const long k = (j + 1) / 2;
        const double arg = std::numbers::pi * static_cast<double>(k) * u;
        out[static_cast<std::size_t>(j)] = (j % 2 == 1) ? std::cos(arg) : std::sin(arg);
      }
      break;
    }
  }
  return out;
}

Tensor basis_matrix(const BasisSpec& spec, const std::vector<double>& us) {
  Tensor m(spec.n, static_cast<long>(us.size()));
  for (std::size_t k = 0; k < us.size(); ++k) {
    const std::vector<double> col = eval_basis(spec, us[k]);
    for (long i = 0; i < spec.n; ++i) m.at(i, static_cast<long>(k)) = col[static_cast<std::size_t>(i)];
  }
  return m;
}

long effective_base_steps(long t_base, double s_delta) {
  if (!(s_delta > 0.0)) throw std::domain_error("effective_base_steps: s_delta must be > 0");
  return std::max<long>(1, std::llround(static_cast<double>(t_base) / s_delta));
}

std::vector<double> sample_grid(const BasisSpec& spec, double s_delta, long t_base, long count) {
  const long t_base_eff = effective_base_steps(t_base, s_delta);
  std::vector<double> us(static_cast<std::size_t>(count));
  for (long k = 1; k <= count; ++k) {
    us[static_cast<std::size_t>(k - 1)] =
        spec.a + (spec.b - spec.a) * (static_cast<double>(k) - 0.5) / static_cast<double>(t_base_eff);
  }
  return us;
}

Tensor decode_readout(const std::vector<double>& o_last, const Tensor& w_out, long quantiles,
                      long n) {
  if (w_out.rows != quantiles * n || w_out.cols != static_cast<long>(o_last.size())) {
    throw std::invalid_argument("decode_readout: W_out shape mismatch");
  }
  Tensor o(static_cast<long>(o_last.size()), 1);
  o.v = o_last;
  Tensor flat = matmul(w_out, o);  // (K*n) x 1
  Tensor out(quantiles, n);
  out.v = std::move(flat.v);  // row-major reshape is a relabel
  return out;
}

void ContinuousForecast::validate() const {
  basis.validate();
  if (coeffs.rows != static_cast<long>(quantile_levels.size()) || coeffs.cols != basis.n) {
    throw std::invalid_argument("ContinuousForecast: coefficient shape mismatch");
  }
  if (!coeffs.all_finite()) throw std::invalid_argument("ContinuousForecast: non-finite coeffs");
  for (std::size_t q = 0; q + 1 < quantile_levels.size(); ++q) {
    if (!(quantile_levels[q] < quantile_levels[q + 1])) {
      throw std::invalid_argument("ContinuousForecast: quantile levels must be increasing");
    }
  }
  if (!(s_delta > 0.0)) throw std::invalid_argument("ContinuousForecast: s_delta must be > 0");
  if (horizon_t_eff < 0) throw std::invalid_argument("ContinuousForecast: negative horizon");
}

std::vector<double> evaluate_at(const ContinuousForecast& fc, double u) {
  const std::vector<double> p = eval_basis(fc.basis, u);
  const long K = fc.coeffs.rows;
  std::vector<double> out(static_cast<std::size_t>(K), 0.0);
  for (long q = 0; q < K; ++q) {
    double acc = 0.0;
    for (long i = 0; i < fc.basis.n; ++i) acc += fc.coeffs.at(q, i) * p[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(q)] = acc;
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor sample_forecast(const ContinuousForecast& fc) {
  fc.validate();
  const long t_eff = fc.horizon_t_eff > 0 ? fc.horizon_t_eff
                                          : effective_base_steps(fc.t_base, fc.s_delta);
  if (t_eff < 1) throw std::invalid_argument("sample_forecast: horizon must be >= 1");
  const std::vector<double> us = sample_grid(fc.basis, fc.s_delta, fc.t_base, t_eff);
  Tensor out(t_eff, fc.coeffs.rows);
  for (long k = 0; k < t_eff; ++k) {
    const std::vector<double> row = evaluate_at(fc, us[static_cast<std::size_t>(k)]);
    for (long q = 0; q < fc.coeffs.rows; ++q) out.at(k, q) = row[static_cast<std::size_t>(q)];
  }
  return out;
}

}  // namespace flowstate
