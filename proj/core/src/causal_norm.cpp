#include "flowstate/causal_norm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "flowstate/scan.hpp"

namespace flowstate {

VarianceMode variance_mode_from_string(const std::string& s) {
  if (s == "elementwise-cumsum") return VarianceMode::kElementwiseCumsum;
  if (s == "exact-prefix-variance") return VarianceMode::kExactPrefixVariance;
  throw std::invalid_argument("unknown norm_variance_mode: '" + s + "'");
}

std::string to_string(VarianceMode m) {
  return m == VarianceMode::kElementwiseCumsum ? "elementwise-cumsum" : "exact-prefix-variance";
}

NormalizedSeries causal_normalize(const std::vector<double>& x, VarianceMode mode) {
  if (x.empty()) throw std::invalid_argument("causal_normalize: empty input");
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("causal_normalize: non-finite input");
  }
  const std::size_t L = x.size();
  NormalizedSeries out;
  out.stats.mu_r.resize(L);
  out.stats.sigma_r.resize(L);
  out.x_norm.resize(L);

  const std::vector<double> cs = cumulative_sum(x);
  for (std::size_t t = 0; t < L; ++t) out.stats.mu_r[t] = cs[t] / static_cast<double>(t + 1);

  if (mode == VarianceMode::kElementwiseCumsum) {
    // Each sample is paired with its own prefix mean before squaring.
    double acc = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const double d = out.stats.mu_r[t] - x[t];
      acc += d * d;
      const double var = acc / static_cast<double>(t + 1);
      out.stats.sigma_r[t] = std::max(std::sqrt(var), kNormEps);
    }
  } else {
    // Welford recurrence; var_t is the population variance of x[1..t].
    double mean = 0.0, m2 = 0.0;
    for (std::size_t t = 0; t < L; ++t) {
      const double delta = x[t] - mean;
      mean += delta / static_cast<double>(t + 1);
      m2 += delta * (x[t] - mean);
      const double var = m2 / static_cast<double>(t + 1);
      out.stats.sigma_r[t] = std::max(std::sqrt(std::max(var, 0.0)), kNormEps);
    }
  }

  for (std::size_t t = 0; t < L; ++t) {
    out.x_norm[t] = (x[t] - out.stats.mu_r[t]) / out.stats.sigma_r[t];
  }
  return out;
}

NormalizedSeries causal_normalize_masked(const std::vector<double>& x,
                                         const std::vector<std::uint8_t>& observed,
                                         VarianceMode mode) {
  if (x.empty()) throw std::invalid_argument("causal_normalize_masked: empty input");
  if (observed.size() != x.size()) {
    throw std::invalid_argument("causal_normalize_masked: mask length mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (observed[i] && !std::isfinite(x[i])) {
      throw std::invalid_argument("causal_normalize_masked: non-finite observed input");
    }
  }
  const std::size_t L = x.size();
  NormalizedSeries out;
  out.stats.mu_r.resize(L);
  out.stats.sigma_r.resize(L);
  out.x_norm.assign(L, 0.0);

  std::size_t count = 0;
  double sum = 0.0;
  double dev_acc = 0.0;   // elementwise-cumsum accumulator
  double mean_w = 0.0, m2 = 0.0;  // Welford accumulators
  for (std::size_t t = 0; t < L; ++t) {
    if (observed[t]) {
      ++count;
      sum += x[t];
      const double mu_t = sum / static_cast<double>(count);
      if (mode == VarianceMode::kElementwiseCumsum) {
        const double d = mu_t - x[t];
        dev_acc += d * d;
        out.stats.sigma_r[t] = std::max(std::sqrt(dev_acc / static_cast<double>(count)), kNormEps);
      } else {
        const double delta = x[t] - mean_w;
        mean_w += delta / static_cast<double>(count);
        m2 += delta * (x[t] - mean_w);
        out.stats.sigma_r[t] =
            std::max(std::sqrt(std::max(m2 / static_cast<double>(count), 0.0)), kNormEps);
      }
      out.stats.mu_r[t] = mu_t;
      out.x_norm[t] = (x[t] - out.stats.mu_r[t]) / out.stats.sigma_r[t];
    } else {
      // Placeholder step: statistics carry over, normalized value stays 0.
      out.stats.mu_r[t] = (t == 0) ? 0.0 : out.stats.mu_r[t - 1];
      out.stats.sigma_r[t] = (t == 0) ? kNormEps : out.stats.sigma_r[t - 1];
    }
  }
  return out;
}

std::vector<double> denormalize_forecast(const std::vector<double>& y_norm,
                                         const CausalStats& stats, std::size_t t) {
  if (t < 1 || t > stats.length()) {
    throw std::out_of_range("denormalize_forecast: timestep out of range");
  }
  const double sigma = stats.sigma_r[t - 1];
  const double mu = stats.mu_r[t - 1];
  std::vector<double> out(y_norm.size());
  for (std::size_t i = 0; i < y_norm.size(); ++i) out[i] = y_norm[i] * sigma + mu;
  return out;
}

}  // namespace flowstate
