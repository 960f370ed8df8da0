#include "flowstate/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace flowstate {

namespace {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t item,
                          std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(seed) ^ (step + 1)) ^ ((item + 1) << 16) ^ stream);
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("TrainConfig: negative steps");
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: bad learning rate");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: betas must be in [0,1)");
  }
  if (!(patch_mask_prob >= 0.0 && patch_mask_prob <= 1.0)) {
    throw std::invalid_argument("TrainConfig: patch_mask_prob outside [0,1]");
  }
  if (grad_clip < 0.0) throw std::invalid_argument("TrainConfig: negative grad_clip");
}

// ---------------------------------------------------------------------------
// CPM
// ---------------------------------------------------------------------------

MaskedSeries apply_cpm_mask(const std::vector<double>& x, std::mt19937_64& rng,
                            const ModelConfig& mc, const TrainConfig& tc) {
  MaskedSeries out;
  out.x_masked = x;
  out.missing.assign(x.size(), 0);
  if (!tc.cpm_enabled || tc.patch_mask_prob <= 0.0) return out;

  const long L = static_cast<long>(x.size());
  const long l_min = mc.encoder.min_context;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  if (u01(rng) >= tc.patch_mask_prob) return out;
  if (l_min >= L) return out;

  std::uniform_int_distribution<long> mult(1, 3);
  const long block = mult(rng) * mc.t_base;
  std::uniform_int_distribution<long> start_dist(l_min, L - 1);
  const long start = start_dist(rng);
  const long end = std::min(L, start + block);
  for (long t = start; t < end; ++t) {
    out.x_masked[static_cast<std::size_t>(t)] = 0.0;
    out.missing[static_cast<std::size_t>(t)] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// parallel-forecast loss
// ---------------------------------------------------------------------------

long anchor_count(const ModelConfig& mc, const TrainConfig& tc) {
  return tc.parallel_anchors ? (mc.encoder.context_length - mc.encoder.min_context) : 1;
}

ad::Var parallel_forecast_loss_tape(ad::Tape& tape, const std::vector<double>& window,
                                    const MaskedSeries& context, const StackVars& sv,
                                    const ModelConfig& mc, const TrainConfig& tc) {
  const long L = mc.encoder.context_length;
  const long T = mc.t_base;
  const long K = mc.quantiles();
  const long n = mc.basis_n;
  if (static_cast<long>(window.size()) < L + T) {
    throw std::invalid_argument("parallel_forecast_loss: window shorter than L + t_base");
  }
  if (static_cast<long>(context.x_masked.size()) != L) {
    throw std::invalid_argument("parallel_forecast_loss: context length != L");
  }

  // Causal statistics over the masked context; masked steps freeze the stats.
  std::vector<std::uint8_t> observed(context.missing.size());
  for (std::size_t i = 0; i < observed.size(); ++i) observed[i] = context.missing[i] ? 0 : 1;
  const NormalizedSeries norm =
      causal_normalize_masked(context.x_masked, observed, mc.norm_variance_mode);

  Tensor input(L, 2);
  for (long t = 0; t < L; ++t) {
    input.at(t, 0) = norm.x_norm[static_cast<std::size_t>(t)];
    input.at(t, 1) = static_cast<double>(context.missing[static_cast<std::size_t>(t)]);
  }

  ad::Var x = tape.constant(std::move(input));
  ad::Var enc = encode_tape(tape, x, sv, /*s_delta=*/1.0);

  // Anchor rows (0-based): parallel t in [L_min, L-1] (1-based), single t = L.
  const long first = tc.parallel_anchors ? (mc.encoder.min_context - 1) : (L - 1);
  const long A = anchor_count(mc, tc);

  ad::Var o_anchors = tape.slice_rows(enc, first, A);
  ad::Var coeffs = tape.matmul(o_anchors, sv.w_out, false, true);  // A x (K*n)
  ad::Var coeffs2 = tape.reshape(coeffs, A * K, n);

  const BasisSpec basis = mc.basis();
  const Tensor phi = basis_matrix(basis, sample_grid(basis, 1.0, T, T));  // n x T
  ad::Var samples = tape.matmul(coeffs2, tape.constant(phi));            // (A*K) x T

  // De-normalize with the stats of each anchor step.
  Tensor sigma_rep(A * K, 1), mu_rep(A * K, 1);
  for (long a = 0; a < A; ++a) {
    const long row = first + a;  // anchor timestep t (1-based) = row + 1
    for (long k = 0; k < K; ++k) {
      sigma_rep[a * K + k] = norm.stats.sigma_r[static_cast<std::size_t>(row)];
      mu_rep[a * K + k] = norm.stats.mu_r[static_cast<std::size_t>(row)];
    }
  }
  ad::Var denorm = tape.add_rows(tape.scale_rows(samples, tape.constant(std::move(sigma_rep))),
                                 tape.constant(std::move(mu_rep)));

  // Targets are the raw pre-mask values x_{t+1 : t+T}.
  Tensor targets(A, T);
  for (long a = 0; a < A; ++a) {
    const long t1 = first + a + 1;  // first target index (0-based)
    for (long j = 0; j < T; ++j) targets.at(a, j) = window[static_cast<std::size_t>(t1 + j)];
  }
  return tape.pinball(denorm, targets, mc.quantile_levels);
}

double parallel_forecast_loss(const std::vector<double>& window, const StackParams& params,
                              const ModelConfig& mc, const TrainConfig& tc, std::mt19937_64& rng) {
  const long L = mc.encoder.context_length;
  std::vector<double> ctx(window.begin(), window.begin() + L);
  const MaskedSeries masked = apply_cpm_mask(ctx, rng, mc, tc);
  ad::Tape tape(false);
  StackVars sv = load_stack(tape, params, false);
  return tape.val(parallel_forecast_loss_tape(tape, window, masked, sv, mc, tc))[0];
}

// ---------------------------------------------------------------------------
// window sources
// ---------------------------------------------------------------------------

std::vector<double> SyntheticSource::window(std::uint64_t seed, long length) const {
  return generate_synthetic(kind_, seed, length, params_).channel(0);
}

DatasetSource::DatasetSource(const std::vector<TimeSeries>& series) {
  for (const auto& s : series) {
    const long train_len = s.split_boundary > 0 ? s.split_boundary : s.length();
    for (long c = 0; c < s.channels(); ++c) {
      std::vector<double> v(static_cast<std::size_t>(train_len));
      for (long t = 0; t < train_len; ++t) v[static_cast<std::size_t>(t)] = s.values.at(t, c);
      pool_.push_back(std::move(v));
    }
  }
  if (pool_.empty()) throw std::invalid_argument("DatasetSource: no series");
}

std::vector<double> DatasetSource::window(std::uint64_t seed, long length) const {
  std::mt19937_64 rng(seed);
  // Candidates long enough for a full window; fall back to the longest.
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < pool_.size(); ++i) {
    if (static_cast<long>(pool_[i].size()) >= length) ok.push_back(i);
  }
  if (ok.empty()) {
    throw std::invalid_argument("DatasetSource: no training series long enough for window of " +
                                std::to_string(length));
  }
  std::uniform_int_distribution<std::size_t> pick(0, ok.size() - 1);
  const auto& src = pool_[ok[pick(rng)]];
  const long max_start = static_cast<long>(src.size()) - length;
  std::uniform_int_distribution<long> start_dist(0, max_start);
  const long start = start_dist(rng);
  return std::vector<double>(src.begin() + start, src.begin() + start + length);
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(ModelConfig mc, TrainConfig tc, const WindowSource& source)
    : mc_(std::move(mc)), tc_(tc), source_(source) {
  mc_.validate();
  tc_.validate();
  params_ = init_stack(mc_, tc_.seed);
  auto views = named_tensors(params_);
  for (const auto& v : views) {
    adam_m_.emplace_back(v.tensor->rows, v.tensor->cols);
    adam_v_.emplace_back(v.tensor->rows, v.tensor->cols);
  }
}

void Trainer::restore(const Checkpoint& ckpt) {
  params_ = ckpt.params;
  if (ckpt.train_state) {
    adam_m_ = ckpt.train_state->adam_m;
    adam_v_ = ckpt.train_state->adam_v;
    step_ = ckpt.train_state->step;
  }
}

Checkpoint Trainer::snapshot() const {
  Checkpoint ckpt;
  ckpt.config = mc_;
  ckpt.params = params_;
  TrainState ts;
  ts.step = step_;
  ts.adam_m = adam_m_;
  ts.adam_v = adam_v_;
  ckpt.train_state = std::move(ts);
  return ckpt;
}

StepInfo Trainer::step() {
  const auto t0 = std::chrono::steady_clock::now();
  const long L = mc_.encoder.context_length;
  const long window_len = L + mc_.t_base;

  auto views = named_tensors(params_);
  std::vector<Tensor> grads;
  for (const auto& v : views) grads.emplace_back(v.tensor->rows, v.tensor->cols);

  double loss_sum = 0.0;
  for (long item = 0; item < tc_.batch; ++item) {
    const std::vector<double> window =
        source_.window(derive_seed(tc_.seed, static_cast<std::uint64_t>(step_),
                                   static_cast<std::uint64_t>(item), 0xDA7A),
                       window_len);
    std::vector<double> ctx(window.begin(), window.begin() + L);
    std::mt19937_64 mask_rng(derive_seed(tc_.seed, static_cast<std::uint64_t>(step_),
                                         static_cast<std::uint64_t>(item), 0xCB37));
    const MaskedSeries masked = apply_cpm_mask(ctx, mask_rng, mc_, tc_);

    ad::Tape tape(true);
    StackVars sv = load_stack(tape, params_, true);
    ad::Var loss = parallel_forecast_loss_tape(tape, window, masked, sv, mc_, tc_);
    const double lv = tape.val(loss)[0];
    if (!std::isfinite(lv)) {
      throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step_) +
                               ", batch item " + std::to_string(item));
    }
    loss_sum += lv;
    tape.backward(loss);

    // Fixed-order reduction into the accumulators.
    std::vector<ad::Var> param_vars;
    param_vars.push_back(sv.embed);
    for (const auto& lvars : sv.layers) {
      param_vars.insert(param_vars.end(),
                        {lvars.lambda_re_raw, lvars.lambda_im, lvars.b_re, lvars.b_im, lvars.c_re,
                         lvars.c_im, lvars.d, lvars.log_delta, lvars.mlp_w1, lvars.mlp_b1,
                         lvars.mlp_w2, lvars.mlp_b2});
    }
    param_vars.push_back(sv.w_out);
    for (std::size_t i = 0; i < param_vars.size(); ++i) {
      const Tensor& g = tape.grad(param_vars[i]);
      for (long j = 0; j < g.size(); ++j) grads[i][j] += g[j];
    }
  }

  const double inv_batch = 1.0 / static_cast<double>(tc_.batch);
  double norm_sq = 0.0;
  for (auto& g : grads) {
    for (long j = 0; j < g.size(); ++j) {
      g[j] *= inv_batch;
      norm_sq += g[j] * g[j];
    }
  }
  const double grad_norm = std::sqrt(norm_sq);
  double clip_scale = 1.0;
  if (tc_.grad_clip > 0.0 && grad_norm > tc_.grad_clip) clip_scale = tc_.grad_clip / grad_norm;

  // Adam with cosine decay.
  const long t = step_ + 1;
  double lr = tc_.learning_rate;
  if (tc_.cosine_decay && tc_.steps > 0) {
    lr *= 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step_) /
                                static_cast<double>(tc_.steps)));
  }
  const double bc1 = 1.0 - std::pow(tc_.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(tc_.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = *views[i].tensor;
    Tensor& m = adam_m_[i];
    Tensor& v = adam_v_[i];
    for (long j = 0; j < p.size(); ++j) {
      const double g = grads[i][j] * clip_scale;
      m[j] = tc_.beta1 * m[j] + (1.0 - tc_.beta1) * g;
      v[j] = tc_.beta2 * v[j] + (1.0 - tc_.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr * (mhat / (std::sqrt(vhat) + 1e-8) + tc_.weight_decay * p[j]);
    }
  }
  ++step_;

  if (!(max_lambda_re(params_) < 0.0)) {
    throw std::logic_error("train_step: stability invariant violated (Re(lambda) >= 0)");
  }

  StepInfo info;
  info.step = step_;
  info.loss = loss_sum * inv_batch;
  info.grad_norm = grad_norm;
  info.lr = lr;
  info.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return info;
}

// ---------------------------------------------------------------------------
// full-model gradient check
// ---------------------------------------------------------------------------

ModelGradCheck gradcheck_model(const ModelConfig& mc, const TrainConfig& tc, unsigned seed,
                               double tol, double fd_step) {
  mc.validate();
  const long L = mc.encoder.context_length;
  const long window_len = L + mc.t_base;

  SyntheticSource source(SyntheticKind::kSinmix, SyntheticParams{});
  const std::vector<double> window = source.window(splitmix64(seed), window_len);
  std::vector<double> ctx(window.begin(), window.begin() + L);
  std::mt19937_64 mask_rng(splitmix64(seed ^ 0x5eedULL));
  const MaskedSeries masked = apply_cpm_mask(ctx, mask_rng, mc, tc);

  StackParams params = init_stack(mc, seed);

  // analytic gradients
  ad::Tape tape(true);
  StackVars sv = load_stack(tape, params, true);
  ad::Var loss = parallel_forecast_loss_tape(tape, window, masked, sv, mc, tc);
  tape.backward(loss);

  std::vector<ad::Var> param_vars;
  param_vars.push_back(sv.embed);
  for (const auto& lvars : sv.layers) {
    param_vars.insert(param_vars.end(),
                      {lvars.lambda_re_raw, lvars.lambda_im, lvars.b_re, lvars.b_im, lvars.c_re,
                       lvars.c_im, lvars.d, lvars.log_delta, lvars.mlp_w1, lvars.mlp_b1,
                       lvars.mlp_w2, lvars.mlp_b2});
  }
  param_vars.push_back(sv.w_out);

  auto eval_loss = [&](const StackParams& p) {
    ad::Tape t2(false);
    StackVars sv2 = load_stack(t2, p, false);
    return t2.val(parallel_forecast_loss_tape(t2, window, masked, sv2, mc, tc))[0];
  };

  ModelGradCheck result;
  auto views = named_tensors(params);
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Tensor& g = tape.grad(param_vars[i]);
    Tensor& pt = *views[i].tensor;
    for (long j = 0; j < pt.size(); ++j) {
      const double orig = pt[j];
      pt[j] = orig + fd_step;
      const double fp = eval_loss(params);
      pt[j] = orig - fd_step;
      const double fm = eval_loss(params);
      pt[j] = orig;
      const double fd = (fp - fm) / (2.0 * fd_step);
      const double scale = std::max({std::fabs(g[j]), std::fabs(fd), 1e-4});
      result.max_rel_err = std::max(result.max_rel_err, std::fabs(g[j] - fd) / scale);
      ++result.checked_coordinates;
    }
  }
  result.pass = result.max_rel_err <= tol;
  return result;
}

}  // namespace flowstate
