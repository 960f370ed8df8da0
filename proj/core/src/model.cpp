#include "flowstate/model.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace flowstate {

namespace {

constexpr double kLambdaLimit = 1e-12;  // |lambda| below this uses the ZOH limit rule
constexpr double kLogDeltaMin = -6.907755278982137;  // log(1e-3)
constexpr double kLogDeltaMax = -2.302585092994046;  // log(1e-1)

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Tensor randn(long rows, long cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(rows, cols);
  for (long i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace

void EncoderConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("EncoderConfig: num_layers must be >= 1");
  if (state_size < 1 || hidden_size < 1 || input_channels < 1) {
    throw std::invalid_argument("EncoderConfig: sizes must be positive");
  }
  if (!(min_context > 0 && min_context < context_length)) {
    throw std::invalid_argument("EncoderConfig: need 0 < min_context < context_length");
  }
}

long ModelConfig::median_index() const {
  long best = 0;
  double best_d = 2.0;
  for (std::size_t i = 0; i < quantile_levels.size(); ++i) {
    const double d = std::fabs(quantile_levels[i] - 0.5);
    if (d < best_d) {
      best_d = d;
      best = static_cast<long>(i);
    }
  }
  return best;
}

void ModelConfig::validate() const {
  encoder.validate();
  basis().validate();
  if (quantile_levels.empty()) throw std::invalid_argument("ModelConfig: no quantile levels");
  for (std::size_t i = 0; i < quantile_levels.size(); ++i) {
    if (!(quantile_levels[i] > 0.0 && quantile_levels[i] < 1.0)) {
      throw std::invalid_argument("ModelConfig: quantile level outside (0,1)");
    }
    if (i > 0 && !(quantile_levels[i - 1] < quantile_levels[i])) {
      throw std::invalid_argument("ModelConfig: quantile levels must be strictly increasing");
    }
  }
  if (t_base < 1) throw std::invalid_argument("ModelConfig: t_base must be >= 1");
  if (!(base_seasonality > 0.0)) throw std::invalid_argument("ModelConfig: base_seasonality must be > 0");
}

std::vector<NamedTensor> named_tensors(StackParams& p) {
  std::vector<NamedTensor> out;
  out.push_back({"embed", &p.embed});
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string pre = "layers." + std::to_string(l) + ".";
    S5LayerParams& lp = p.layers[l];
    out.push_back({pre + "lambda_re_raw", &lp.lambda_re_raw});
    out.push_back({pre + "lambda_im", &lp.lambda_im});
    out.push_back({pre + "b_re", &lp.b_re});
    out.push_back({pre + "b_im", &lp.b_im});
    out.push_back({pre + "c_re", &lp.c_re});
    out.push_back({pre + "c_im", &lp.c_im});
    out.push_back({pre + "d", &lp.d});
    out.push_back({pre + "log_delta", &lp.log_delta});
    out.push_back({pre + "mlp_w1", &lp.mlp_w1});
    out.push_back({pre + "mlp_b1", &lp.mlp_b1});
    out.push_back({pre + "mlp_w2", &lp.mlp_w2});
    out.push_back({pre + "mlp_b2", &lp.mlp_b2});
  }
  out.push_back({"w_out", &p.w_out});
  return out;
}

long param_count(const StackParams& p) {
  long n = 0;
  auto views = named_tensors(const_cast<StackParams&>(p));
  for (const auto& nt : views) n += nt.tensor->size();
  return n;
}

double max_lambda_re(const StackParams& p) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& layer : p.layers) {
    for (long i = 0; i < layer.lambda_re_raw.size(); ++i) {
      worst = std::max(worst, -std::exp(layer.lambda_re_raw[i]));
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// HiPPO initialization
// ---------------------------------------------------------------------------

S5LayerParams hippo_init(long P, long H, unsigned seed) {
  if (P < 1 || H < 1) throw std::invalid_argument("hippo_init: P and H must be >= 1");

  // Normal part of the LegS matrix: skew-symmetric off-diagonal plus -1/2 I.
  Eigen::MatrixXd a_nor(P, P);
  for (long i = 0; i < P; ++i) {
    for (long j = 0; j < P; ++j) {
      if (i == j) {
        a_nor(i, j) = -0.5;
      } else {
        const double m = 0.5 * std::sqrt(2.0 * i + 1.0) * std::sqrt(2.0 * j + 1.0);
        a_nor(i, j) = (i > j) ? -m : m;
      }
    }
  }

  Eigen::EigenSolver<Eigen::MatrixXd> es(a_nor);
  if (es.info() != Eigen::Success) throw std::runtime_error("hippo_init: eigendecomposition failed");
  Eigen::VectorXcd lam = es.eigenvalues();
  Eigen::MatrixXcd v = es.eigenvectors();

  // Canonical order: imaginary part descending, real part as tie-break.
  std::vector<long> idx(static_cast<std::size_t>(P));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](long a, long b) {
    if (lam(a).imag() != lam(b).imag()) return lam(a).imag() > lam(b).imag();
    return lam(a).real() < lam(b).real();
  });
  Eigen::VectorXcd lam_s(P);
  Eigen::MatrixXcd v_s(P, P);
  for (long k = 0; k < P; ++k) {
    lam_s(k) = lam(idx[static_cast<std::size_t>(k)]);
    v_s.col(k) = v.col(idx[static_cast<std::size_t>(k)]);
  }

  std::mt19937_64 rng(seed);
  S5LayerParams p;
  p.lambda_re_raw = Tensor(P, 1);
  p.lambda_im = Tensor(P, 1);
  for (long k = 0; k < P; ++k) {
    const double re = std::min(lam_s(k).real(), -1e-12);
    p.lambda_re_raw[k] = std::log(-re);
    p.lambda_im[k] = lam_s(k).imag();
  }

  // Random input/output maps projected through the eigenbasis.
  Tensor b0 = randn(P, H, 1.0 / std::sqrt(static_cast<double>(H)), rng);
  Eigen::MatrixXcd b0c(P, H);
  for (long i = 0; i < P; ++i)
    for (long j = 0; j < H; ++j) b0c(i, j) = b0.at(i, j);
  Eigen::MatrixXcd bc = v_s.partialPivLu().solve(b0c);

  Tensor c0 = randn(H, P, 1.0 / std::sqrt(static_cast<double>(P)), rng);
  Eigen::MatrixXcd c0c(H, P);
  for (long i = 0; i < H; ++i)
    for (long j = 0; j < P; ++j) c0c(i, j) = c0.at(i, j);
  Eigen::MatrixXcd cc = c0c * v_s;

  p.b_re = Tensor(P, H);
  p.b_im = Tensor(P, H);
  for (long i = 0; i < P; ++i) {
    for (long j = 0; j < H; ++j) {
      p.b_re.at(i, j) = bc(i, j).real();
      p.b_im.at(i, j) = bc(i, j).imag();
    }
  }
  p.c_re = Tensor(H, P);
  p.c_im = Tensor(H, P);
  for (long i = 0; i < H; ++i) {
    for (long j = 0; j < P; ++j) {
      p.c_re.at(i, j) = cc(i, j).real();
      p.c_im.at(i, j) = cc(i, j).imag();
    }
  }

  p.d = Tensor(H, 1, 1.0);
  p.log_delta = Tensor(P, 1);
  std::uniform_real_distribution<double> ud(kLogDeltaMin, kLogDeltaMax);
  for (long i = 0; i < P; ++i) p.log_delta[i] = ud(rng);

  const double mlp_std = 1.0 / std::sqrt(static_cast<double>(H));
  p.mlp_w1 = randn(H, H, mlp_std, rng);
  p.mlp_b1 = Tensor(H, 1);
  p.mlp_w2 = randn(H, H, mlp_std, rng);
  p.mlp_b2 = Tensor(H, 1);
  return p;
}

StackParams init_stack(const ModelConfig& cfg, unsigned seed) {
  cfg.validate();
  const auto& e = cfg.encoder;
  StackParams p;
  std::mt19937_64 rng(splitmix64(seed));
  p.embed = randn(e.hidden_size, e.input_channels,
                  1.0 / std::sqrt(static_cast<double>(e.input_channels)), rng);
  for (long l = 0; l < e.num_layers; ++l) {
    const unsigned layer_seed =
        static_cast<unsigned>(splitmix64(seed * 0x51a2b3c4ULL + static_cast<std::uint64_t>(l) + 1));
    p.layers.push_back(hippo_init(e.state_size, e.hidden_size, layer_seed));
  }
  p.w_out = randn(cfg.quantiles() * cfg.basis_n, e.hidden_size,
                  1.0 / std::sqrt(static_cast<double>(e.hidden_size)), rng);
  return p;
}

// ---------------------------------------------------------------------------
// ZOH discretization (shared forward math)
// ---------------------------------------------------------------------------

namespace {

struct DiscretizeBuffers {
  std::vector<double> delta, lam_re, lam_im, a_re, a_im, w_re, w_im;
  std::vector<bool> limit;
};

DiscretizeBuffers discretize_forward(const Tensor& raw, const Tensor& lam_im_t,
                                     const Tensor& log_delta, double s_delta) {
  if (!(s_delta > 0.0)) throw std::domain_error("discretize: s_delta must be > 0");
  const long P = raw.rows;
  DiscretizeBuffers b;
  b.delta.resize(P);
  b.lam_re.resize(P);
  b.lam_im.resize(P);
  b.a_re.resize(P);
  b.a_im.resize(P);
  b.w_re.resize(P);
  b.w_im.resize(P);
  b.limit.resize(P);
  for (long p = 0; p < P; ++p) {
    const double delta = s_delta * std::exp(log_delta[p]);
    const double lre = -std::exp(raw[p]);
    const double lim = lam_im_t[p];
    const double er = std::exp(lre * delta);
    const double are = er * std::cos(lim * delta);
    const double aim = er * std::sin(lim * delta);
    b.delta[p] = delta;
    b.lam_re[p] = lre;
    b.lam_im[p] = lim;
    b.a_re[p] = are;
    b.a_im[p] = aim;
    const double n2 = lre * lre + lim * lim;
    if (n2 < kLambdaLimit * kLambdaLimit) {
      b.limit[p] = true;
      b.w_re[p] = delta;
      b.w_im[p] = 0.0;
    } else {
      b.limit[p] = false;
      b.w_re[p] = ((are - 1.0) * lre + aim * lim) / n2;
      b.w_im[p] = (aim * lre - (are - 1.0) * lim) / n2;
    }
  }
  return b;
}

}  // namespace

Discretized discretize(const S5LayerParams& params, double s_delta) {
  const long P = params.state_size();
  const long H = params.in_size();
  DiscretizeBuffers buf =
      discretize_forward(params.lambda_re_raw, params.lambda_im, params.log_delta, s_delta);
  Discretized out;
  out.a_bar = ComplexVec(static_cast<std::size_t>(P));
  out.b_bar_re = Tensor(P, H);
  out.b_bar_im = Tensor(P, H);
  for (long p = 0; p < P; ++p) {
    out.a_bar.re[static_cast<std::size_t>(p)] = buf.a_re[p];
    out.a_bar.im[static_cast<std::size_t>(p)] = buf.a_im[p];
    for (long h = 0; h < H; ++h) {
      const double br = params.b_re.at(p, h);
      const double bi = params.b_im.at(p, h);
      out.b_bar_re.at(p, h) = buf.w_re[p] * br - buf.w_im[p] * bi;
      out.b_bar_im.at(p, h) = buf.w_re[p] * bi + buf.w_im[p] * br;
    }
  }
  return out;
}

DiscretizedVars discretize_tape(ad::Tape& tape, const LayerVars& lv, double s_delta) {
  const Tensor& raw = tape.val(lv.lambda_re_raw);
  const Tensor& lam_im_t = tape.val(lv.lambda_im);
  const Tensor& log_delta = tape.val(lv.log_delta);
  const Tensor& b_re = tape.val(lv.b_re);
  const Tensor& b_im = tape.val(lv.b_im);
  const long P = raw.rows;
  const long H = b_re.cols;

  DiscretizeBuffers buf = discretize_forward(raw, lam_im_t, log_delta, s_delta);

  Tensor a_re_t(P, 1), a_im_t(P, 1), bb_re(P, H), bb_im(P, H);
  for (long p = 0; p < P; ++p) {
    a_re_t[p] = buf.a_re[p];
    a_im_t[p] = buf.a_im[p];
    for (long h = 0; h < H; ++h) {
      const double br = b_re.at(p, h);
      const double bi = b_im.at(p, h);
      bb_re.at(p, h) = buf.w_re[p] * br - buf.w_im[p] * bi;
      bb_im.at(p, h) = buf.w_re[p] * bi + buf.w_im[p] * br;
    }
  }

  auto back = [buf = std::move(buf), P, H](ad::Tape& t, const std::vector<ad::Var>& in,
                                           const std::vector<ad::Var>& out) {
    // in: raw, lam_im, log_delta, b_re, b_im ; out: a_re, a_im, bb_re, bb_im
    const Tensor& gar = t.adjoint(out[0]);
    const Tensor& gai = t.adjoint(out[1]);
    const Tensor& gbr = t.adjoint(out[2]);
    const Tensor& gbi = t.adjoint(out[3]);
    const Tensor& vbr = t.val(in[3]);
    const Tensor& vbi = t.val(in[4]);

    Tensor d_raw(P, 1), d_im(P, 1), d_logd(P, 1), d_bre(P, H), d_bim(P, H);
    for (long p = 0; p < P; ++p) {
      const double wre = buf.w_re[p], wim = buf.w_im[p];
      const double are = buf.a_re[p], aim = buf.a_im[p];
      const double lre = buf.lam_re[p], lim = buf.lam_im[p];
      const double delta = buf.delta[p];

      // dB = conj(w) * gBB ; gW = sum_h conj(B) * gBB
      double gw_re = 0.0, gw_im = 0.0;
      for (long h = 0; h < H; ++h) {
        const double gr = gbr.at(p, h), gi = gbi.at(p, h);
        d_bre.at(p, h) = wre * gr + wim * gi;
        d_bim.at(p, h) = wre * gi - wim * gr;
        gw_re += vbr.at(p, h) * gr + vbi.at(p, h) * gi;
        gw_im += vbr.at(p, h) * gi - vbi.at(p, h) * gr;
      }

      // a-chain: da/dlambda = delta * a, da/ddelta = lambda * a
      const double da_l_re = delta * are, da_l_im = delta * aim;
      double dl_re = da_l_re * gar[p] + da_l_im * gai[p];
      double dl_im = da_l_re * gai[p] - da_l_im * gar[p];
      const double la_re = lre * are - lim * aim;
      const double la_im = lre * aim + lim * are;
      double d_delta = la_re * gar[p] + la_im * gai[p];

      if (buf.limit[p]) {
        // w = delta; dw/dlambda -> delta^2/2 (real) in the limit
        d_delta += gw_re;
        const double half_d2 = 0.5 * delta * delta;
        dl_re += half_d2 * gw_re;
        dl_im += half_d2 * gw_im;
      } else {
        // w'(lambda) = (delta*a*lambda - (a-1)) / lambda^2
        const double num_re = delta * la_re - (are - 1.0);
        const double num_im = delta * la_im - aim;
        const double l2_re = lre * lre - lim * lim;
        const double l2_im = 2.0 * lre * lim;
        const double l2n = l2_re * l2_re + l2_im * l2_im;
        const double wp_re = (num_re * l2_re + num_im * l2_im) / l2n;
        const double wp_im = (num_im * l2_re - num_re * l2_im) / l2n;
        dl_re += wp_re * gw_re + wp_im * gw_im;
        dl_im += wp_re * gw_im - wp_im * gw_re;
        // dw/ddelta = a
        d_delta += are * gw_re + aim * gw_im;
      }

      d_raw[p] = dl_re * lre;     // dlambda_re/draw = lambda_re
      d_im[p] = dl_im;
      d_logd[p] = d_delta * delta;  // ddelta/dlog_delta = delta
    }
    t.add_adjoint(in[0], d_raw);
    t.add_adjoint(in[1], d_im);
    t.add_adjoint(in[2], d_logd);
    t.add_adjoint(in[3], d_bre);
    t.add_adjoint(in[4], d_bim);
  };

  std::vector<ad::Var> outs = tape.custom(
      {lv.lambda_re_raw, lv.lambda_im, lv.log_delta, lv.b_re, lv.b_im},
      {std::move(a_re_t), std::move(a_im_t), std::move(bb_re), std::move(bb_im)}, std::move(back));
  return DiscretizedVars{outs[0], outs[1], outs[2], outs[3]};
}

// ---------------------------------------------------------------------------
// layer / encoder forward
// ---------------------------------------------------------------------------

namespace {

LayerVars load_layer(ad::Tape& tape, const S5LayerParams& p, bool trainable) {
  auto put = [&](const Tensor& t) { return trainable ? tape.param(t) : tape.constant(t); };
  LayerVars lv;
  lv.lambda_re_raw = put(p.lambda_re_raw);
  lv.lambda_im = put(p.lambda_im);
  lv.b_re = put(p.b_re);
  lv.b_im = put(p.b_im);
  lv.c_re = put(p.c_re);
  lv.c_im = put(p.c_im);
  lv.d = put(p.d);
  lv.log_delta = put(p.log_delta);
  lv.mlp_w1 = put(p.mlp_w1);
  lv.mlp_b1 = put(p.mlp_b1);
  lv.mlp_w2 = put(p.mlp_w2);
  lv.mlp_b2 = put(p.mlp_b2);
  return lv;
}

}  // namespace

StackVars load_stack(ad::Tape& tape, const StackParams& p, bool trainable) {
  StackVars sv;
  sv.embed = trainable ? tape.param(p.embed) : tape.constant(p.embed);
  for (const auto& layer : p.layers) sv.layers.push_back(load_layer(tape, layer, trainable));
  sv.w_out = trainable ? tape.param(p.w_out) : tape.constant(p.w_out);
  return sv;
}

ad::Var s5_layer_tape(ad::Tape& tape, ad::Var x_seq, const LayerVars& lv, double s_delta) {
  const long h_in = tape.val(lv.b_re).cols;
  const long h_out = tape.val(lv.c_re).rows;
  if (tape.val(x_seq).cols != h_in) throw std::invalid_argument("s5_layer: input width mismatch");

  DiscretizedVars d = discretize_tape(tape, lv, s_delta);
  ad::Var bseq_re = tape.matmul(x_seq, d.bb_re, false, true);  // L x P
  ad::Var bseq_im = tape.matmul(x_seq, d.bb_im, false, true);
  auto [s_re, s_im] = tape.scan_diag(d.a_re, d.a_im, bseq_re, bseq_im);

  // h_t = Re(C s_t) (+ D .* x_t when widths match)
  ad::Var h = tape.sub(tape.matmul(s_re, lv.c_re, false, true),
                       tape.matmul(s_im, lv.c_im, false, true));
  ad::Var hp = h;
  if (h_in == h_out) {
    h = tape.add(h, tape.scale_cols(x_seq, lv.d));
    hp = tape.add(x_seq, h);
  }

  ad::Var u = tape.layer_norm(hp);
  ad::Var m = tape.gelu(tape.add_cols(tape.matmul(u, lv.mlp_w1, false, true), lv.mlp_b1));
  ad::Var m2 = tape.add_cols(tape.matmul(m, lv.mlp_w2, false, true), lv.mlp_b2);
  return tape.add(hp, m2);
}

ad::Var encode_tape(ad::Tape& tape, ad::Var x_input, const StackVars& sv, double s_delta) {
  ad::Var x = tape.matmul(x_input, sv.embed, false, true);  // L x H
  for (const auto& lv : sv.layers) x = s5_layer_tape(tape, x, lv, s_delta);
  return x;
}

Tensor s5_layer_forward(const Tensor& x_seq, const S5LayerParams& params, double s_delta) {
  ad::Tape tape(false);
  LayerVars lv = load_layer(tape, params, false);
  ad::Var x = tape.constant(x_seq);
  return tape.val(s5_layer_tape(tape, x, lv, s_delta));
}

Tensor encode(const Tensor& x_input, const ModelConfig& cfg, const StackParams& params,
              double s_delta) {
  cfg.validate();
  if (x_input.cols != cfg.encoder.input_channels) {
    throw std::invalid_argument("encode: input channel count mismatch");
  }
  ad::Tape tape(false);
  StackVars sv = load_stack(tape, params, false);
  ad::Var x = tape.constant(x_input);
  return tape.val(encode_tape(tape, x, sv, s_delta));
}

}  // namespace flowstate
