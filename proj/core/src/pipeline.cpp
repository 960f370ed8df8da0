#include "flowstate/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowstate {

void TaskSpec::validate() const {
  if (!(seasonality > 0.0)) throw std::domain_error("TaskSpec: seasonality must be > 0");
  if (horizon < 1) throw std::invalid_argument("TaskSpec: horizon must be >= 1");
}

ExtendMode extend_mode_from_string(const std::string& s) {
  if (s == "mpi") return ExtendMode::kMpi;
  if (s == "autoregressive") return ExtendMode::kAutoregressive;
  throw std::invalid_argument("unknown forecast mode: '" + s + "' (mpi|autoregressive)");
}

std::string to_string(ExtendMode m) {
  return m == ExtendMode::kMpi ? "mpi" : "autoregressive";
}

double scale_factor(const TaskSpec& task, double base_seasonality) {
  if (!(task.seasonality > 0.0)) throw std::domain_error("scale_factor: seasonality must be > 0");
  return base_seasonality / task.seasonality;
}

EffectiveLengths effective_lengths(double s_delta, long context_length, long t_base,
                                   long context_budget) {
  if (!(s_delta > 0.0)) throw std::domain_error("effective_lengths: s_delta must be > 0");
  EffectiveLengths out;
  out.l_eff = std::min<long>(context_budget,
              std::max<long>(1, std::llround(static_cast<double>(context_length) / s_delta)));
  out.t_eff = std::max<long>(1, std::llround(static_cast<double>(t_base) / s_delta));
  return out;
}

namespace {

// One decoded patch: encoder output row -> continuous forecast -> t_eff x K
// samples, de-normalized with the given stats.
Tensor decode_patch(const std::vector<double>& o_row, const ModelConfig& cfg, const Tensor& w_out,
                    double s_delta, long t_eff, double sigma, double mu) {
  Tensor coeffs = decode_readout(o_row, w_out, cfg.quantiles(), cfg.basis_n);
  ContinuousForecast fc;
  fc.coeffs = std::move(coeffs);
  fc.basis = cfg.basis();
  fc.quantile_levels = cfg.quantile_levels;
  fc.s_delta = s_delta;
  fc.t_base = cfg.t_base;
  fc.horizon_t_eff = t_eff;
  Tensor samples = sample_forecast(fc);  // t_eff x K, quantiles sorted
  for (long i = 0; i < samples.size(); ++i) samples[i] = samples[i] * sigma + mu;
  return samples;
}

std::vector<double> encoder_row(const Tensor& enc, long row) {
  std::vector<double> out(static_cast<std::size_t>(enc.cols));
  for (long j = 0; j < enc.cols; ++j) out[static_cast<std::size_t>(j)] = enc.at(row, j);
  return out;
}

Tensor encode_masked(const std::vector<double>& x_norm, const std::vector<std::uint8_t>& missing,
                     const ModelConfig& cfg, const StackParams& params, double s_delta) {
  const long n = static_cast<long>(x_norm.size());
  Tensor input(n, 2);
  for (long t = 0; t < n; ++t) {
    input.at(t, 0) = x_norm[static_cast<std::size_t>(t)];
    input.at(t, 1) = static_cast<double>(missing[static_cast<std::size_t>(t)]);
  }
  return encode(input, cfg, params, s_delta);
}

// Forecast one channel; returns horizon x K.
Tensor forecast_channel(const std::vector<double>& history, const ModelConfig& cfg,
                        const StackParams& params, double s_delta, long l_eff, long t_eff,
                        long horizon, ExtendMode mode) {
  const long use = std::min<long>(l_eff, static_cast<long>(history.size()));
  std::vector<double> ctx(history.end() - use, history.end());
  const long patches = (horizon + t_eff - 1) / t_eff;
  const long K = cfg.quantiles();

  Tensor out(patches * t_eff, K);
  if (mode == ExtendMode::kMpi) {
    // Single causal pass: placeholder steps carry zeros, missing flag 1 and
    // frozen statistics; patch j decodes at the anchor just before its span.
    const long total = use + (patches - 1) * t_eff;
    std::vector<double> padded = ctx;
    padded.resize(static_cast<std::size_t>(total), 0.0);
    std::vector<std::uint8_t> observed(static_cast<std::size_t>(total), 0);
    for (long t = 0; t < use; ++t) observed[static_cast<std::size_t>(t)] = 1;
    const NormalizedSeries norm =
        causal_normalize_masked(padded, observed, cfg.norm_variance_mode);
    std::vector<std::uint8_t> missing(observed.size());
    for (std::size_t i = 0; i < observed.size(); ++i) missing[i] = observed[i] ? 0 : 1;
    const Tensor enc = encode_masked(norm.x_norm, missing, cfg, params, s_delta);
    for (long j = 0; j < patches; ++j) {
      const long anchor = use - 1 + j * t_eff;
      const Tensor patch =
          decode_patch(encoder_row(enc, anchor), cfg, params.w_out, s_delta, t_eff,
                       norm.stats.sigma_r[static_cast<std::size_t>(anchor)],
                       norm.stats.mu_r[static_cast<std::size_t>(anchor)]);
      for (long r = 0; r < t_eff; ++r)
        for (long q = 0; q < K; ++q) out.at(j * t_eff + r, q) = patch.at(r, q);
    }
  } else {
    // Autoregressive: the median of each patch extends the context as real
    // observations before the next patch.
    std::vector<double> rolling = ctx;
    const long med = cfg.median_index();
    for (long j = 0; j < patches; ++j) {
      std::vector<std::uint8_t> observed(rolling.size(), 1);
      const NormalizedSeries norm =
          causal_normalize_masked(rolling, observed, cfg.norm_variance_mode);
      std::vector<std::uint8_t> missing(rolling.size(), 0);
      const Tensor enc = encode_masked(norm.x_norm, missing, cfg, params, s_delta);
      const long anchor = static_cast<long>(rolling.size()) - 1;
      const Tensor patch =
          decode_patch(encoder_row(enc, anchor), cfg, params.w_out, s_delta, t_eff,
                       norm.stats.sigma_r[static_cast<std::size_t>(anchor)],
                       norm.stats.mu_r[static_cast<std::size_t>(anchor)]);
      for (long r = 0; r < t_eff; ++r) {
        for (long q = 0; q < K; ++q) out.at(j * t_eff + r, q) = patch.at(r, q);
        rolling.push_back(patch.at(r, med));
      }
    }
  }

  Tensor truncated(horizon, K);
  for (long r = 0; r < horizon; ++r)
    for (long q = 0; q < K; ++q) truncated.at(r, q) = out.at(r, q);
  return truncated;
}

}  // namespace

ForecastResult forecast(const ForecastRequest& req, const ModelConfig& cfg,
                        const StackParams& params) {
  cfg.validate();
  req.task.validate();
  req.series.validate();
  if (req.s_delta_override && !(*req.s_delta_override > 0.0)) {
    throw std::domain_error("forecast: s_delta override must be > 0");
  }
  const double s_delta =
      req.s_delta_override ? *req.s_delta_override : scale_factor(req.task, cfg.base_seasonality);
  const EffectiveLengths eff = effective_lengths(s_delta, cfg.encoder.context_length, cfg.t_base,
                                                 req.task.context_budget);

  ForecastResult result;
  result.quantile_levels = cfg.quantile_levels;
  result.s_delta = s_delta;
  result.l_eff = eff.l_eff;
  result.t_eff = eff.t_eff;
  result.patches = (req.task.horizon + eff.t_eff - 1) / eff.t_eff;
  for (long c = 0; c < req.series.channels(); ++c) {
    result.channels.push_back(forecast_channel(req.series.channel(c), cfg, params, s_delta,
                                               eff.l_eff, eff.t_eff, req.task.horizon, req.mode));
  }
  return result;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate_dataset(const Dataset& ds, const ModelConfig* cfg, const StackParams* params,
                            const EvalOptions& opts) {
  if (!opts.naive_model && (cfg == nullptr || params == nullptr)) {
    throw std::invalid_argument("evaluate_dataset: model required unless naive_model is set");
  }
  EvalReport report;
  for (const auto& entry : ds.manifest) {
    const TimeSeries* s = ds.find_series(entry.id);
    if (s == nullptr) continue;
    TaskMetrics tm;
    tm.task_id = entry.id;
    const long m = std::max<long>(1, std::llround(entry.seasonality));
    const long split = s->split_boundary;

    double mase_model_sum = 0.0, mase_naive_sum = 0.0;
    double wql_model_sum = 0.0, wql_naive_sum = 0.0;
    bool degenerate = false;
    const long K_cfg = opts.naive_model ? 9 : cfg->quantiles();
    const std::vector<double> levels =
        opts.naive_model ? std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}
                         : cfg->quantile_levels;

    for (long c = 0; c < s->channels(); ++c) {
      const std::vector<double> full = s->channel(c);
      const std::vector<double> insample(full.begin(), full.begin() + split);
      const std::vector<double> target(full.begin() + split, full.begin() + split + entry.horizon);

      const std::vector<double> naive_pred = seasonal_naive(insample, m, entry.horizon);
      Tensor naive_q(entry.horizon, K_cfg);
      for (long t = 0; t < entry.horizon; ++t)
        for (long q = 0; q < K_cfg; ++q) naive_q.at(t, q) = naive_pred[static_cast<std::size_t>(t)];

      Tensor model_q;
      if (opts.naive_model) {
        model_q = naive_q;
      } else {
        ForecastRequest req;
        req.series.id = entry.id;
        req.series.values = Tensor(split, 1);
        for (long t = 0; t < split; ++t) req.series.values.at(t, 0) = insample[static_cast<std::size_t>(t)];
        req.task.seasonality = entry.seasonality;
        req.task.horizon = entry.horizon;
        req.mode = opts.mode;
        req.s_delta_override = opts.s_delta_override;
        const ForecastResult fr = forecast(req, *cfg, *params);
        model_q = fr.channels[0];
      }

      std::vector<double> model_med(static_cast<std::size_t>(entry.horizon));
      const long med = K_cfg / 2;
      for (long t = 0; t < entry.horizon; ++t) model_med[static_cast<std::size_t>(t)] = model_q.at(t, med);

      const MetricValue mase_m = mase(model_med, target, insample, m);
      const MetricValue mase_n = mase(naive_pred, target, insample, m);
      const MetricValue wql_m = wql(model_q, target, levels);
      const MetricValue wql_n = wql(naive_q, target, levels);
      degenerate = degenerate || mase_m.degenerate || mase_n.degenerate || wql_m.degenerate ||
                   wql_n.degenerate || mase_n.value <= 0.0 || wql_n.value <= 0.0;
      mase_model_sum += mase_m.value;
      mase_naive_sum += mase_n.value;
      wql_model_sum += wql_m.value;
      wql_naive_sum += wql_n.value;
    }

    const double nch = static_cast<double>(s->channels());
    tm.mase_model = mase_model_sum / nch;
    tm.mase_naive = mase_naive_sum / nch;
    tm.wql_model = wql_model_sum / nch;
    tm.wql_naive = wql_naive_sum / nch;
    tm.degenerate = degenerate;
    if (!degenerate) {
      tm.mase_ratio = tm.mase_model / tm.mase_naive;
      tm.wql_ratio = tm.wql_model / tm.wql_naive;
    } else {
      tm.note = "degenerate-denominator";
    }
    report.per_task.push_back(std::move(tm));
  }
  report.finalize();
  return report;
}

std::vector<ResampleRow> resample_eval(const TimeSeries& series, double original_seasonality,
                                       const ModelConfig& cfg, const StackParams& params,
                                       const std::vector<long>& factors, long target_len,
                                       bool scale_adjust, ExtendMode mode) {
  std::vector<ResampleRow> rows;
  const std::vector<double> full = series.channel(0);
  for (long k : factors) {
    ResampleRow row;
    row.factor = k;
    if (k < 1) {
      row.skipped = true;
      row.note = "factor < 1";
      rows.push_back(row);
      continue;
    }
    std::vector<double> sub;
    for (std::size_t i = 0; i < full.size(); i += static_cast<std::size_t>(k)) sub.push_back(full[i]);
    row.seasonality = original_seasonality / static_cast<double>(k);
    const long n = static_cast<long>(sub.size());
    if (n < cfg.encoder.min_context + target_len) {
      row.skipped = true;
      row.note = "series too short after subsampling";
      rows.push_back(row);
      continue;
    }
    const long split = n - target_len;

    ForecastRequest req;
    req.series.id = series.id;
    req.series.values = Tensor(split, 1);
    for (long t = 0; t < split; ++t) req.series.values.at(t, 0) = sub[static_cast<std::size_t>(t)];
    req.task.seasonality = row.seasonality;
    req.task.horizon = target_len;
    req.mode = mode;
    if (!scale_adjust) req.s_delta_override = 1.0;
    const ForecastResult fr = forecast(req, cfg, params);
    row.s_delta = fr.s_delta;

    const long med = cfg.median_index();
    double mae = 0.0;
    for (long t = 0; t < target_len; ++t) {
      mae += std::fabs(sub[static_cast<std::size_t>(split + t)] - fr.channels[0].at(t, med));
    }
    row.mae = mae / static_cast<double>(target_len);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace flowstate
