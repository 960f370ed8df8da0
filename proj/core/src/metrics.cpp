#include "flowstate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"

namespace flowstate {

namespace {
constexpr double kDenomEps = 1e-12;

double pinball_term(double q, double e) { return std::max(q * e, (q - 1.0) * e); }
}  // namespace

std::vector<double> seasonal_naive(const std::vector<double>& history, long m, long horizon,
                                   bool* fell_back) {
  if (history.empty()) throw std::invalid_argument("seasonal_naive: empty history");
  if (m < 1) throw std::invalid_argument("seasonal_naive: m must be >= 1");
  if (fell_back) *fell_back = false;
  const long n = static_cast<long>(history.size());
  if (m > n) {
    m = 1;
    if (fell_back) *fell_back = true;
  }
  std::vector<double> out(static_cast<std::size_t>(std::max<long>(horizon, 0)));
  for (long k = 0; k < horizon; ++k) {
    out[static_cast<std::size_t>(k)] = history[static_cast<std::size_t>(n - m + (k % m))];
  }
  return out;
}

MetricValue mase(const std::vector<double>& pred, const std::vector<double>& target,
                 const std::vector<double>& insample, long m) {
  if (target.empty()) throw std::invalid_argument("mase: empty target");
  if (pred.size() != target.size()) throw std::invalid_argument("mase: pred/target size mismatch");
  if (static_cast<long>(insample.size()) <= m) {
    throw std::invalid_argument("mase: insample must be longer than m");
  }
  double num = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) num += std::fabs(target[i] - pred[i]);
  num /= static_cast<double>(target.size());

  double den = 0.0;
  const long n = static_cast<long>(insample.size());
  for (long t = m; t < n; ++t) {
    den += std::fabs(insample[static_cast<std::size_t>(t)] - insample[static_cast<std::size_t>(t - m)]);
  }
  den /= static_cast<double>(n - m);

  MetricValue out;
  out.degenerate = den < kDenomEps;
  out.value = num / std::max(den, kDenomEps);
  return out;
}

MetricValue wql(const Tensor& pred_quantiles, const std::vector<double>& target,
                const std::vector<double>& levels) {
  const long T = pred_quantiles.rows;
  const long K = pred_quantiles.cols;
  if (static_cast<long>(target.size()) != T || static_cast<long>(levels.size()) != K) {
    throw std::invalid_argument("wql: shape mismatch");
  }
  for (double q : levels) {
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("wql: level outside (0,1)");
  }
  double acc = 0.0;
  double scale = 0.0;
  for (long t = 0; t < T; ++t) {
    scale += std::fabs(target[static_cast<std::size_t>(t)]);
    for (long q = 0; q < K; ++q) {
      acc += pinball_term(levels[static_cast<std::size_t>(q)],
                          target[static_cast<std::size_t>(t)] - pred_quantiles.at(t, q));
    }
  }
  MetricValue out;
  out.degenerate = scale < kDenomEps;
  out.value = 2.0 * acc / (static_cast<double>(K) * std::max(scale, kDenomEps));
  return out;
}

AggregateResult aggregate(const std::vector<double>& values) {
  AggregateResult out;
  double log_sum = 0.0;
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      ++out.excluded;
      continue;
    }
    log_sum += std::log(v);
    ++out.used;
  }
  out.value = out.used > 0 ? std::exp(log_sum / static_cast<double>(out.used)) : 1.0;
  return out;
}

void EvalReport::finalize() {
  std::sort(per_task.begin(), per_task.end(),
            [](const TaskMetrics& a, const TaskMetrics& b) { return a.task_id < b.task_id; });
  std::vector<double> mases, wqls;
  excluded_tasks = 0;
  for (const auto& t : per_task) {
    if (t.degenerate) {
      ++excluded_tasks;
      continue;
    }
    mases.push_back(t.mase_ratio);
    wqls.push_back(t.wql_ratio);
  }
  const AggregateResult am = aggregate(mases);
  const AggregateResult aw = aggregate(wqls);
  agg_mase = am.value;
  agg_wql = aw.value;
  aggregated_tasks = am.used;
  excluded_tasks += am.excluded;
}

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}
}  // namespace

std::string eval_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "task_id,mase_model,mase_naive,mase_ratio,wql_model,wql_naive,wql_ratio,crps_ratio,"
        "degenerate,note\n";
  for (const auto& t : report.per_task) {
    os << t.task_id << ',' << fmt(t.mase_model) << ',' << fmt(t.mase_naive) << ','
       << fmt(t.mase_ratio) << ',' << fmt(t.wql_model) << ',' << fmt(t.wql_naive) << ','
       << fmt(t.wql_ratio) << ',' << fmt(t.wql_ratio) << ',' << (t.degenerate ? 1 : 0) << ','
       << t.note << '\n';
  }
  return os.str();
}

std::string eval_aggregate_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "metric,value,tasks,excluded\n";
  os << "mase," << fmt(report.agg_mase) << ',' << report.aggregated_tasks << ','
     << report.excluded_tasks << '\n';
  os << "wql," << fmt(report.agg_wql) << ',' << report.aggregated_tasks << ','
     << report.excluded_tasks << '\n';
  os << "crps," << fmt(report.agg_wql) << ',' << report.aggregated_tasks << ','
     << report.excluded_tasks << '\n';
  return os.str();
}

std::string eval_report_json(const EvalReport& report) {
  detail::json tasks = detail::json::array();
  for (const auto& t : report.per_task) {
    tasks.push_back({{"task_id", t.task_id},
                     {"mase_model", t.mase_model},
                     {"mase_naive", t.mase_naive},
                     {"mase_ratio", t.mase_ratio},
                     {"wql_model", t.wql_model},
                     {"wql_naive", t.wql_naive},
                     {"wql_ratio", t.wql_ratio},
                     {"crps_ratio", t.wql_ratio},
                     {"degenerate", t.degenerate},
                     {"note", t.note}});
  }
  detail::json j;
  j["per_task"] = std::move(tasks);
  j["aggregate"] = {{"mase", report.agg_mase},
                    {"wql", report.agg_wql},
                    {"crps", report.agg_wql},
                    {"tasks", report.aggregated_tasks},
                    {"excluded", report.excluded_tasks}};
  return j.dump(2);
}

}  // namespace flowstate
