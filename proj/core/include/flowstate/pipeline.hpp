#pragma once

#include <climits>
#include <optional>
#include <string>
#include <vector>

#include "flowstate/data.hpp"
#include "flowstate/metrics.hpp"
#include "flowstate/model.hpp"

namespace flowstate {

struct TaskSpec {
  double seasonality = 24.0;  ///< steps per season
  long horizon = 24;          ///< requested forecast steps
  long context_budget = LONG_MAX;

  void validate() const;
};

enum class ExtendMode : std::uint8_t { kMpi, kAutoregressive };
ExtendMode extend_mode_from_string(const std::string& s);
std::string to_string(ExtendMode m);

struct ForecastRequest {
  TimeSeries series;
  TaskSpec task;
  ExtendMode mode = ExtendMode::kMpi;
  std::optional<double> s_delta_override;
};

/// s_delta = base_seasonality / task seasonality.
double scale_factor(const TaskSpec& task, double base_seasonality = 24.0);

struct EffectiveLengths {
  long l_eff = 0;
  long t_eff = 0;
};

/// l_eff = min(context_budget, round(L / s_delta)); t_eff = max(1,
/// round(t_base / s_delta)). Rounding is half away from zero.
EffectiveLengths effective_lengths(double s_delta, long context_length, long t_base,
                                   long context_budget = LONG_MAX);

struct ForecastResult {
  std::vector<Tensor> channels;  ///< one horizon x K block per channel
  std::vector<double> quantile_levels;
  double s_delta = 1.0;
  long l_eff = 0;
  long t_eff = 0;
  long patches = 1;
};

/// End-to-end inference: causal normalization of the last l_eff steps,
/// encoding at s_delta, decoding/sampling of t_eff steps, de-normalization
/// with the stats of the last context step, and long-horizon extension via
/// MPI (placeholder patches, frozen stats) or autoregression (median fed
/// back). Output is truncated to exactly `horizon` steps.
ForecastResult forecast(const ForecastRequest& req, const ModelConfig& cfg,
                        const StackParams& params);

// ---------------------------------------------------------------------------
// evaluation drivers
// ---------------------------------------------------------------------------

struct EvalOptions {
  ExtendMode mode = ExtendMode::kMpi;
  std::optional<double> s_delta_override;
  bool naive_model = false;  ///< score the seasonal-naive adapter instead
};

/// Evaluates every manifest task: context = pre-split history, target = the
/// following horizon steps; metrics are normalized by the seasonal-naive
/// baseline and aggregated by geometric mean.
EvalReport evaluate_dataset(const Dataset& ds, const ModelConfig* cfg, const StackParams* params,
                            const EvalOptions& opts);

struct ResampleRow {
  long factor = 1;
  double seasonality = 0.0;
  double s_delta = 1.0;
  double mae = 0.0;
  bool skipped = false;
  std::string note;
};

/// Subsamples the series by each factor, recomputes seasonality and s_delta
/// (unless scale adjustment is disabled), forecasts `target_len` steps after
/// the subsampled split and scores the median MAE.
std::vector<ResampleRow> resample_eval(const TimeSeries& series, double original_seasonality,
                                       const ModelConfig& cfg, const StackParams& params,
                                       const std::vector<long>& factors, long target_len,
                                       bool scale_adjust, ExtendMode mode = ExtendMode::kMpi);

}  // namespace flowstate
