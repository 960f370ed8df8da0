#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowstate/tensor.hpp"

namespace flowstate {

enum class BasisFamily : std::uint8_t { kLegendre, kHalfLegendre, kFourier };

BasisFamily basis_family_from_string(const std::string& s);
std::string to_string(BasisFamily f);

/// A family of n orthonormal basis functions over [a, b].
/// legendre lives on [-1,1], half_legendre on [0,1], fourier on [-1,1].
struct BasisSpec {
  BasisFamily family = BasisFamily::kLegendre;
  long n = 1;
  double a = -1.0;
  double b = 1.0;

  static BasisSpec make(BasisFamily family, long n);
  void validate() const;
};

/// Evaluates all n basis functions at u in [a, b]; throws std::domain_error
/// outside the domain.
std::vector<double> eval_basis(const BasisSpec& spec, double u);

/// n x m matrix with column k holding eval_basis(us[k]).
Tensor basis_matrix(const BasisSpec& spec, const std::vector<double>& us);

/// Midpoint sampling grid: u_k = a + (b-a)*(k-1/2)/t_base_eff for k = 1..count,
/// where t_base_eff = max(1, round(t_base / s_delta)) maps one base horizon
/// onto the full domain.
std::vector<double> sample_grid(const BasisSpec& spec, double s_delta, long t_base, long count);

long effective_base_steps(long t_base, double s_delta);

/// coefficients = reshape(W_out * o_last) to K x n. W_out is (K*n) x H.
Tensor decode_readout(const std::vector<double>& o_last, const Tensor& w_out, long quantiles,
                      long n);

/// A forecast as a continuous function of time: per-quantile coefficients of a
/// functional basis, samplable at any rate.
struct ContinuousForecast {
  Tensor coeffs;                       ///< K x n
  BasisSpec basis;
  std::vector<double> quantile_levels; ///< strictly increasing, in (0,1)
  double s_delta = 1.0;
  long t_base = 24;
  long horizon_t_eff = 0;              ///< number of steps to sample (defaults to t_base_eff)

  void validate() const;
};

/// The continuous forecast curve at domain point u: one value per quantile
/// level, sorted nondecreasing (quantile-crossing fix).
std::vector<double> evaluate_at(const ContinuousForecast& fc, double u);

/// Samples the forecast on the midpoint grid; returns horizon_t_eff x K.
Tensor sample_forecast(const ContinuousForecast& fc);

}  // namespace flowstate
