#pragma once

#include <string>
#include <vector>

#include "flowstate/tensor.hpp"

namespace flowstate {

/// Repeats the last observed season; m > history length falls back to m = 1
/// (reported through fell_back when given).
std::vector<double> seasonal_naive(const std::vector<double>& history, long m, long horizon,
                                   bool* fell_back = nullptr);

struct MetricValue {
  double value = 0.0;
  bool degenerate = false;  ///< denominator clamped / undefined
};

/// mean|target - pred| / mean_{t>m}|insample[t] - insample[t-m]|, denominator
/// clamped at 1e-12 (degenerate flag set when the clamp engages).
MetricValue mase(const std::vector<double>& pred, const std::vector<double>& target,
                 const std::vector<double>& insample, long m);

/// 2 * sum_{t,q} rho_q(target_t - pred_{t,q}) / (K * sum_t |target_t|).
/// pred_quantiles is T x K. All-zero targets set the degenerate flag.
MetricValue wql(const Tensor& pred_quantiles, const std::vector<double>& target,
                const std::vector<double>& levels);

struct AggregateResult {
  double value = 1.0;
  long used = 0;
  long excluded = 0;  ///< nonpositive inputs dropped with a warning
};

/// Geometric mean over tasks: exp(mean(log(values))).
AggregateResult aggregate(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// evaluation report
// ---------------------------------------------------------------------------

struct TaskMetrics {
  std::string task_id;
  double mase_model = 0.0, mase_naive = 0.0;
  double wql_model = 0.0, wql_naive = 0.0;
  double mase_ratio = 0.0, wql_ratio = 0.0;
  bool degenerate = false;
  std::string note;
};

/// Per-task normalized metrics plus geometric-mean aggregates. CRPS is the
/// WQL number under its benchmark label (same computation).
struct EvalReport {
  std::vector<TaskMetrics> per_task;  ///< sorted by task id
  double agg_mase = 1.0;
  double agg_wql = 1.0;
  long aggregated_tasks = 0;
  long excluded_tasks = 0;

  void finalize();  ///< sorts tasks and recomputes aggregates
};

std::string eval_report_csv(const EvalReport& report);
std::string eval_report_json(const EvalReport& report);
std::string eval_aggregate_csv(const EvalReport& report);

}  // namespace flowstate
