#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowstate {

/// Variance floor for the running std-dev clamp.
inline constexpr double kNormEps = 1e-5;

enum class VarianceMode : std::uint8_t {
  /// sigma^2[t] = cumsum((mu[i] - x[i])^2)[t] / t, pairing each sample with
  /// its own prefix mean (single-pass cumulative form).
  kElementwiseCumsum,
  /// sigma^2[t] = population variance of x[1..t].
  kExactPrefixVariance,
};

VarianceMode variance_mode_from_string(const std::string& s);
std::string to_string(VarianceMode m);

/// Per-prefix running statistics. sigma_r is clamped to >= kNormEps.
struct CausalStats {
  std::vector<double> mu_r;
  std::vector<double> sigma_r;

  std::size_t length() const { return mu_r.size(); }
};

struct NormalizedSeries {
  std::vector<double> x_norm;
  CausalStats stats;
};

/// Normalizes x causally: x_norm[t] = (x[t] - mu_r[t]) / sigma_r[t].
/// Throws std::invalid_argument on empty or non-finite input.
NormalizedSeries causal_normalize(const std::vector<double>& x,
                                  VarianceMode mode = VarianceMode::kElementwiseCumsum);

/// Mask-aware variant used by the training/inference pipelines: positions with
/// observed[t] == 0 do not update the running statistics (stats repeat the
/// previous step) and their normalized value is emitted as 0.
NormalizedSeries causal_normalize_masked(const std::vector<double>& x,
                                         const std::vector<std::uint8_t>& observed,
                                         VarianceMode mode = VarianceMode::kElementwiseCumsum);

/// out = y_norm * sigma_r[t] + mu_r[t] applied elementwise; `t` is a 1-based
/// context timestep. Throws std::out_of_range when t is outside [1, L].
std::vector<double> denormalize_forecast(const std::vector<double>& y_norm,
                                         const CausalStats& stats, std::size_t t);

}  // namespace flowstate
