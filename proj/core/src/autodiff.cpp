#include "flowstate/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "flowstate/scan.hpp"

namespace flowstate::ad {

namespace {
constexpr double kLayerNormEps = 1e-5;

inline double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }
inline double gelu_bwd(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  return cdf + x * phi;
}
}  // namespace

Var Tape::make(Tensor val, bool needs_grad) {
  Slot s;
  s.val = std::move(val);
  s.needs_grad = needs_grad && grad_enabled_;
  slots_.push_back(std::move(s));
  return Var{static_cast<int>(slots_.size()) - 1};
}

void Tape::push_node(std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(back)});
}

Var Tape::constant(Tensor v) { return make(std::move(v), false); }
Var Tape::param(Tensor v) { return make(std::move(v), true); }

const Tensor& Tape::val(Var x) const { return slots_[static_cast<std::size_t>(x.id)].val; }

const Tensor& Tape::grad(Var x) const {
  const Slot& s = slots_[static_cast<std::size_t>(x.id)];
  if (s.grad.size() == 0) throw std::logic_error("grad(): no adjoint; run backward first");
  return s.grad;
}

Tensor& Tape::grad_mut(Var x) { return slots_[static_cast<std::size_t>(x.id)].grad; }

void Tape::accumulate(Var x, const Tensor& g) {
  Slot& s = slots_[static_cast<std::size_t>(x.id)];
  if (!s.needs_grad) return;
  if (s.grad.size() == 0) s.grad = Tensor(s.val.rows, s.val.cols);
  for (long i = 0; i < g.size(); ++i) s.grad[i] += g[i];
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out(ta.rows, ta.cols);
  for (long i = 0; i < ta.size(); ++i) out[i] = ta[i] + tb[i];
  const bool ng = slots_[a.id].needs_grad || slots_[b.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([a, b, o](Tape& t) {
      t.accumulate(a, t.grad_mut(o));
      t.accumulate(b, t.grad_mut(o));
    });
  }
  return o;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
  Tensor out(ta.rows, ta.cols);
  for (long i = 0; i < ta.size(); ++i) out[i] = ta[i] - tb[i];
  const bool ng = slots_[a.id].needs_grad || slots_[b.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([a, b, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      t.accumulate(a, g);
      Tensor gn(g.rows, g.cols);
      for (long i = 0; i < g.size(); ++i) gn[i] = -g[i];
      t.accumulate(b, gn);
    });
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out(ta.rows, ta.cols);
  for (long i = 0; i < ta.size(); ++i) out[i] = ta[i] * tb[i];
  const bool ng = slots_[a.id].needs_grad || slots_[b.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([a, b, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      const Tensor& va = t.val(a);
      const Tensor& vb = t.val(b);
      Tensor ga(g.rows, g.cols), gb(g.rows, g.cols);
      for (long i = 0; i < g.size(); ++i) {
        ga[i] = g[i] * vb[i];
        gb[i] = g[i] * va[i];
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }
  return o;
}

Var Tape::div(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) throw std::invalid_argument("div: shape mismatch");
  Tensor out(ta.rows, ta.cols);
  for (long i = 0; i < ta.size(); ++i) out[i] = ta[i] / tb[i];
  const bool ng = slots_[a.id].needs_grad || slots_[b.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([a, b, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      const Tensor& va = t.val(a);
      const Tensor& vb = t.val(b);
      Tensor ga(g.rows, g.cols), gb(g.rows, g.cols);
      for (long i = 0; i < g.size(); ++i) {
        ga[i] = g[i] / vb[i];
        gb[i] = -g[i] * va[i] / (vb[i] * vb[i]);
      }
      t.accumulate(a, ga);
      t.accumulate(b, gb);
    });
  }
  return o;
}

#define FLOWSTATE_UNARY(NAME, FWD, BWD)                                       \
  Var Tape::NAME(Var x) {                                                    \
    const Tensor& tx = val(x);                                               \
    Tensor out(tx.rows, tx.cols);                                            \
    for (long i = 0; i < tx.size(); ++i) out[i] = (FWD);                     \
    const bool ng = slots_[x.id].needs_grad;                                 \
    Var o = make(std::move(out), ng);                                        \
    if (ng) {                                                                \
      push_node([x, o](Tape& t) {                                            \
        const Tensor& g = t.grad_mut(o);                                     \
        const Tensor& tx = t.val(x);                                         \
        const Tensor& to = t.val(o);                                         \
        (void)tx;                                                            \
        (void)to;                                                            \
        Tensor gx(g.rows, g.cols);                                           \
        for (long i = 0; i < g.size(); ++i) gx[i] = g[i] * (BWD);            \
        t.accumulate(x, gx);                                                 \
      });                                                                    \
    }                                                                        \
    return o;                                                                \
  }

FLOWSTATE_UNARY(neg, -tx[i], -1.0)
FLOWSTATE_UNARY(exp, std::exp(tx[i]), to[i])
FLOWSTATE_UNARY(log, std::log(tx[i]), 1.0 / tx[i])
FLOWSTATE_UNARY(sqrt, std::sqrt(tx[i]), 0.5 / to[i])
FLOWSTATE_UNARY(cos, std::cos(tx[i]), -std::sin(tx[i]))
FLOWSTATE_UNARY(sin, std::sin(tx[i]), std::cos(tx[i]))
FLOWSTATE_UNARY(gelu, gelu_fwd(tx[i]), gelu_bwd(tx[i]))

#undef FLOWSTATE_UNARY

Var Tape::scale(Var x, double c) {
  const Tensor& tx = val(x);
  Tensor out(tx.rows, tx.cols);
  for (long i = 0; i < tx.size(); ++i) out[i] = tx[i] * c;
  const bool ng = slots_[x.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, o, c](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      Tensor gx(g.rows, g.cols);
      for (long i = 0; i < g.size(); ++i) gx[i] = g[i] * c;
      t.accumulate(x, gx);
    });
  }
  return o;
}

Var Tape::add_scalar(Var x, double c) {
  const Tensor& tx = val(x);
  Tensor out(tx.rows, tx.cols);
  for (long i = 0; i < tx.size(); ++i) out[i] = tx[i] + c;
  const bool ng = slots_[x.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, o](Tape& t) { t.accumulate(x, t.grad_mut(o)); });
  }
  return o;
}

// ---------------------------------------------------------------------------
// matmul and broadcasting
// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  Tensor out = flowstate::matmul(val(a), val(b), trans_a, trans_b);
  const bool ng = slots_[a.id].needs_grad || slots_[b.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([a, b, o, trans_a, trans_b](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      if (t.slots_[a.id].needs_grad) {
        Tensor ga = trans_a ? flowstate::matmul(t.val(b), g, trans_b, true)
                            : flowstate::matmul(g, t.val(b), false, !trans_b);
        t.accumulate(a, ga);
      }
      if (t.slots_[b.id].needs_grad) {
        Tensor gb = trans_b ? flowstate::matmul(g, t.val(a), true, trans_a)
                            : flowstate::matmul(t.val(a), g, !trans_a, false);
        t.accumulate(b, gb);
      }
    });
  }
  return o;
}

Var Tape::scale_rows(Var x, Var s) {
  const Tensor& tx = val(x);
  const Tensor& ts = val(s);
  if (ts.rows != tx.rows || ts.cols != 1) throw std::invalid_argument("scale_rows: shape mismatch");
  Tensor out(tx.rows, tx.cols);
  for (long i = 0; i < tx.rows; ++i)
    for (long j = 0; j < tx.cols; ++j) out.at(i, j) = tx.at(i, j) * ts[i];
  const bool ng = slots_[x.id].needs_grad || slots_[s.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, s, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      const Tensor& tx = t.val(x);
      const Tensor& ts = t.val(s);
      if (t.slots_[x.id].needs_grad) {
        Tensor gx(tx.rows, tx.cols);
        for (long i = 0; i < tx.rows; ++i)
          for (long j = 0; j < tx.cols; ++j) gx.at(i, j) = g.at(i, j) * ts[i];
        t.accumulate(x, gx);
      }
      if (t.slots_[s.id].needs_grad) {
        Tensor gs(ts.rows, 1);
        for (long i = 0; i < tx.rows; ++i) {
          double acc = 0.0;
          for (long j = 0; j < tx.cols; ++j) acc += g.at(i, j) * tx.at(i, j);
          gs[i] = acc;
        }
        t.accumulate(s, gs);
      }
    });
  }
  return o;
}

Var Tape::scale_cols(Var x, Var s) {
  const Tensor& tx = val(x);
  const Tensor& ts = val(s);
  if (ts.rows != tx.cols || ts.cols != 1) throw std::invalid_argument("scale_cols: shape mismatch");
  Tensor out(tx.rows, tx.cols);
  for (long i = 0; i < tx.rows; ++i)
    for (long j = 0; j < tx.cols; ++j) out.at(i, j) = tx.at(i, j) * ts[j];
  const bool ng = slots_[x.id].needs_grad || slots_[s.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, s, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      const Tensor& tx = t.val(x);
      const Tensor& ts = t.val(s);
      if (t.slots_[x.id].needs_grad) {
        Tensor gx(tx.rows, tx.cols);
        for (long i = 0; i < tx.rows; ++i)
          for (long j = 0; j < tx.cols; ++j) gx.at(i, j) = g.at(i, j) * ts[j];
        t.accumulate(x, gx);
      }
      if (t.slots_[s.id].needs_grad) {
        Tensor gs(ts.rows, 1);
        for (long j = 0; j < tx.cols; ++j) {
          double acc = 0.0;
          for (long i = 0; i < tx.rows; ++i) acc += g.at(i, j) * tx.at(i, j);
          gs[j] = acc;
        }
        t.accumulate(s, gs);
      }
    });
  }
  return o;
}

Var Tape::add_rows(Var x, Var s) {
  const Tensor& tx = val(x);
  const Tensor& ts = val(s);
  if (ts.rows != tx.rows || ts.cols != 1) throw std::invalid_argument("add_rows: shape mismatch");
  Tensor out(tx.rows, tx.cols);
  for (long i = 0; i < tx.rows; ++i)
    for (long j = 0; j < tx.cols; ++j) out.at(i, j) = tx.at(i, j) + ts[i];
  const bool ng = slots_[x.id].needs_grad || slots_[s.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, s, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      t.accumulate(x, g);
      if (t.slots_[s.id].needs_grad) {
        Tensor gs(t.val(s).rows, 1);
        for (long i = 0; i < g.rows; ++i) {
          double acc = 0.0;
          for (long j = 0; j < g.cols; ++j) acc += g.at(i, j);
          gs[i] = acc;
        }
        t.accumulate(s, gs);
      }
    });
  }
  return o;
}

Var Tape::add_cols(Var x, Var s) {
  const Tensor& tx = val(x);
  const Tensor& ts = val(s);
  if (ts.rows != tx.cols || ts.cols != 1) throw std::invalid_argument("add_cols: shape mismatch");
  Tensor out(tx.rows, tx.cols);
  for (long i = 0; i < tx.rows; ++i)
    for (long j = 0; j < tx.cols; ++j) out.at(i, j) = tx.at(i, j) + ts[j];
  const bool ng = slots_[x.id].needs_grad || slots_[s.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, s, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      t.accumulate(x, g);
      if (t.slots_[s.id].needs_grad) {
        Tensor gs(t.val(s).rows, 1);
        for (long j = 0; j < g.cols; ++j) {
          double acc = 0.0;
          for (long i = 0; i < g.rows; ++i) acc += g.at(i, j);
          gs[j] = acc;
        }
        t.accumulate(s, gs);
      }
    });
  }
  return o;
}

Var Tape::slice_rows(Var x, long start, long count) {
  const Tensor& tx = val(x);
  if (start < 0 || count < 0 || start + count > tx.rows) {
    throw std::out_of_range("slice_rows: range out of bounds");
  }
  Tensor out(count, tx.cols);
  for (long i = 0; i < count; ++i)
    for (long j = 0; j < tx.cols; ++j) out.at(i, j) = tx.at(start + i, j);
  const bool ng = slots_[x.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, o, start, count](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      const Tensor& tx = t.val(x);
      Tensor gx(tx.rows, tx.cols);
      for (long i = 0; i < count; ++i)
        for (long j = 0; j < tx.cols; ++j) gx.at(start + i, j) = g.at(i, j);
      t.accumulate(x, gx);
    });
  }
  return o;
}

Var Tape::reshape(Var x, long rows, long cols) {
  const Tensor& tx = val(x);
  if (rows * cols != tx.size()) throw std::invalid_argument("reshape: size mismatch");
  Tensor out(rows, cols);
  out.v = tx.v;
  const bool ng = slots_[x.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, o](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      const Tensor& tx = t.val(x);
      Tensor gx(tx.rows, tx.cols);
      gx.v = g.v;
      t.accumulate(x, gx);
    });
  }
  return o;
}

Var Tape::sum_all(Var x) {
  const Tensor& tx = val(x);
  double acc = 0.0;
  for (long i = 0; i < tx.size(); ++i) acc += tx[i];
  Tensor out(1, 1);
  out[0] = acc;
  const bool ng = slots_[x.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, o](Tape& t) {
      const double g = t.grad_mut(o)[0];
      const Tensor& tx = t.val(x);
      Tensor gx(tx.rows, tx.cols, g);
      t.accumulate(x, gx);
    });
  }
  return o;
}

Var Tape::mean_all(Var x) {
  const Tensor& tx = val(x);
  return scale(sum_all(x), 1.0 / static_cast<double>(tx.size()));
}

Var Tape::layer_norm(Var x) {
  const Tensor& tx = val(x);
  const long R = tx.rows, C = tx.cols;
  Tensor out(R, C);
  std::vector<double> inv_sigma(static_cast<std::size_t>(R));
  for (long i = 0; i < R; ++i) {
    double m = 0.0;
    for (long j = 0; j < C; ++j) m += tx.at(i, j);
    m /= static_cast<double>(C);
    double v = 0.0;
    for (long j = 0; j < C; ++j) {
      const double d = tx.at(i, j) - m;
      v += d * d;
    }
    v /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(v + kLayerNormEps);
    inv_sigma[static_cast<std::size_t>(i)] = is;
    for (long j = 0; j < C; ++j) out.at(i, j) = (tx.at(i, j) - m) * is;
  }
  const bool ng = slots_[x.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    push_node([x, o, inv_sigma](Tape& t) {
      const Tensor& g = t.grad_mut(o);
      const Tensor& y = t.val(o);
      const long R = y.rows, C = y.cols;
      Tensor gx(R, C);
      for (long i = 0; i < R; ++i) {
        double gm = 0.0, gym = 0.0;
        for (long j = 0; j < C; ++j) {
          gm += g.at(i, j);
          gym += g.at(i, j) * y.at(i, j);
        }
        gm /= static_cast<double>(C);
        gym /= static_cast<double>(C);
        const double is = inv_sigma[static_cast<std::size_t>(i)];
        for (long j = 0; j < C; ++j) {
          gx.at(i, j) = is * (g.at(i, j) - gm - y.at(i, j) * gym);
        }
      }
      t.accumulate(x, gx);
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// scan
// ---------------------------------------------------------------------------

std::pair<Var, Var> Tape::scan_diag(Var a_re, Var a_im, Var b_re, Var b_im) {
  const Tensor& tar = val(a_re);
  const Tensor& tai = val(a_im);
  const Tensor& tbr = val(b_re);
  const Tensor& tbi = val(b_im);
  const long P = tar.rows;
  const long L = tbr.rows;
  if (tar.cols != 1 || !tar.same_shape(tai)) throw std::invalid_argument("scan_diag: a must be P x 1");
  if (!tbr.same_shape(tbi) || tbr.cols != P) throw std::invalid_argument("scan_diag: b must be L x P");

  Tensor sr(L, P), si(L, P);
  diag_scan_planar(tar.v, tai.v, tbr.v.data(), tbi.v.data(), L, P, sr.v.data(), si.v.data());
  const bool ng = slots_[a_re.id].needs_grad || slots_[a_im.id].needs_grad ||
                  slots_[b_re.id].needs_grad || slots_[b_im.id].needs_grad;
  Var osr = make(std::move(sr), ng);
  Var osi = make(std::move(si), ng);
  if (ng) {
    push_node([a_re, a_im, b_re, b_im, osr, osi, L, P](Tape& t) {
      const Tensor& gr = t.grad_mut(osr);
      const Tensor& gi = t.grad_mut(osi);
      const Tensor& vsr = t.val(osr);
      const Tensor& vsi = t.val(osi);
      const Tensor& var_ = t.val(a_re);
      const Tensor& vai = t.val(a_im);
      Tensor gbr(L, P), gbi(L, P);
      Tensor gar(P, 1), gai(P, 1);
      // Reverse accumulation: A_t = g_t + conj(a) * A_{t+1};
      // db_t = A_t; da += conj(s_{t-1}) * A_t.
      std::vector<double> acc_re(static_cast<std::size_t>(P), 0.0);
      std::vector<double> acc_im(static_cast<std::size_t>(P), 0.0);
      for (long tt = L - 1; tt >= 0; --tt) {
        for (long p = 0; p < P; ++p) {
          const double ar = var_[p], ai = vai[p];
          // conj(a) * acc
          const double car = ar * acc_re[p] + ai * acc_im[p];
          const double cai = ar * acc_im[p] - ai * acc_re[p];
          const double Ar = gr.at(tt, p) + car;
          const double Ai = gi.at(tt, p) + cai;
          gbr.at(tt, p) = Ar;
          gbi.at(tt, p) = Ai;
          if (tt > 0) {
            const double pr = vsr.at(tt - 1, p), pi = vsi.at(tt - 1, p);
            // conj(s_{t-1}) * A
            gar[p] += pr * Ar + pi * Ai;
            gai[p] += pr * Ai - pi * Ar;
          }
          acc_re[p] = Ar;
          acc_im[p] = Ai;
        }
      }
      t.accumulate(b_re, gbr);
      t.accumulate(b_im, gbi);
      t.accumulate(a_re, gar);
      t.accumulate(a_im, gai);
    });
  }
  return {osr, osi};
}

// ---------------------------------------------------------------------------
// pinball
// ---------------------------------------------------------------------------

namespace {
void check_levels(const std::vector<double>& levels) {
  for (double q : levels) {
    if (!(q > 0.0 && q < 1.0)) throw std::domain_error("pinball: level outside (0,1)");
  }
}
}  // namespace

Var Tape::pinball(Var pred, const Tensor& target, const std::vector<double>& levels) {
  check_levels(levels);
  const Tensor& tp = val(pred);
  const long K = static_cast<long>(levels.size());
  if (tp.rows % K != 0 || target.rows != tp.rows / K || target.cols != tp.cols) {
    throw std::invalid_argument("pinball: prediction/target shape mismatch");
  }
  const long A = target.rows;
  const long T = target.cols;
  double acc = 0.0;
  for (long r = 0; r < tp.rows; ++r) {
    const long a = r / K;
    const double q = levels[static_cast<std::size_t>(r % K)];
    for (long j = 0; j < T; ++j) {
      const double e = target.at(a, j) - tp.at(r, j);
      acc += std::max(q * e, (q - 1.0) * e);
    }
  }
  const double denom = static_cast<double>(A) * static_cast<double>(K) * static_cast<double>(T);
  Tensor out(1, 1);
  out[0] = acc / denom;
  const bool ng = slots_[pred.id].needs_grad;
  Var o = make(std::move(out), ng);
  if (ng) {
    Tensor tgt = target;
    std::vector<double> lv = levels;
    push_node([pred, o, tgt = std::move(tgt), lv = std::move(lv), denom](Tape& t) {
      const double g = t.grad_mut(o)[0];
      const Tensor& tp = t.val(pred);
      const long K = static_cast<long>(lv.size());
      Tensor gp(tp.rows, tp.cols);
      for (long r = 0; r < tp.rows; ++r) {
        const long a = r / K;
        const double q = lv[static_cast<std::size_t>(r % K)];
        for (long j = 0; j < tp.cols; ++j) {
          const double e = tgt.at(a, j) - tp.at(r, j);
          // d rho_q(e) / d pred = -q when e > 0, (1-q) when e <= 0
          gp.at(r, j) = g * ((e > 0.0) ? -q : (1.0 - q)) / denom;
        }
      }
      t.accumulate(pred, gp);
    });
  }
  return o;
}

std::vector<Var> Tape::custom(
    const std::vector<Var>& inputs, std::vector<Tensor> outputs,
    std::function<void(Tape&, const std::vector<Var>&, const std::vector<Var>&)> back) {
  bool ng = false;
  for (Var in : inputs) ng = ng || slots_[static_cast<std::size_t>(in.id)].needs_grad;
  std::vector<Var> outs;
  outs.reserve(outputs.size());
  for (Tensor& o : outputs) outs.push_back(make(std::move(o), ng));
  if (ng) {
    push_node([inputs, outs, back = std::move(back)](Tape& t) { back(t, inputs, outs); });
  }
  return outs;
}

const Tensor& Tape::adjoint(Var x) const {
  return slots_[static_cast<std::size_t>(x.id)].grad;
}

void Tape::backward(Var loss) {
  const Tensor& lv = val(loss);
  if (lv.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  if (!grad_enabled_) throw std::logic_error("backward: tape built with grad disabled");
  for (Slot& s : slots_) {
    if (s.needs_grad) s.grad = Tensor(s.val.rows, s.val.cols);
  }
  Slot& ls = slots_[static_cast<std::size_t>(loss.id)];
  if (!ls.needs_grad) throw std::logic_error("backward: loss does not require grad");
  ls.grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    it->back(*this);
  }
}

// ---------------------------------------------------------------------------
// plain helpers
// ---------------------------------------------------------------------------

double pinball_loss(const Tensor& pred, const std::vector<double>& target,
                    const std::vector<double>& levels) {
  check_levels(levels);
  const long T = pred.rows;
  const long K = pred.cols;
  if (static_cast<long>(target.size()) != T || K != static_cast<long>(levels.size())) {
    throw std::invalid_argument("pinball_loss: shape mismatch");
  }
  double acc = 0.0;
  for (long i = 0; i < T; ++i) {
    for (long q = 0; q < K; ++q) {
      const double e = target[static_cast<std::size_t>(i)] - pred.at(i, q);
      const double lvl = levels[static_cast<std::size_t>(q)];
      acc += std::max(lvl * e, (lvl - 1.0) * e);
    }
  }
  return acc / (static_cast<double>(T) * static_cast<double>(K));
}

std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// primitive gradcheck
// ---------------------------------------------------------------------------

namespace {

double rel_err(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-4});
  return std::fabs(a - b) / scale;
}

// Builds a scalar function of a flat input through `build`, then compares
// tape gradients against central finite differences.
double check_one(unsigned seed, long rows, long cols, int n_inputs,
                 const std::function<Var(Tape&, const std::vector<Var>&)>& build) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.5, 1.5);
  std::vector<Tensor> xs;
  for (int k = 0; k < n_inputs; ++k) {
    Tensor t(rows, cols);
    for (long i = 0; i < t.size(); ++i) t[i] = dist(rng);
    xs.push_back(std::move(t));
  }
  // analytic
  Tape tape;
  std::vector<Var> vars;
  for (auto& t : xs) vars.push_back(tape.param(t));
  Var loss = build(tape, vars);
  tape.backward(loss);

  double worst = 0.0;
  for (int k = 0; k < n_inputs; ++k) {
    const Tensor& g = tape.grad(vars[static_cast<std::size_t>(k)]);
    auto f_all = [&](const std::vector<double>& flat) {
      Tape t2;
      std::vector<Var> vs;
      for (int m = 0; m < n_inputs; ++m) {
        Tensor tm = xs[static_cast<std::size_t>(m)];
        if (m == k) tm.v = flat;
        vs.push_back(t2.constant(std::move(tm)));
      }
      return t2.val(build(t2, vs))[0];
    };
    const std::vector<double> fd = finite_difference(f_all, xs[static_cast<std::size_t>(k)].v);
    for (long i = 0; i < g.size(); ++i) {
      worst = std::max(worst, rel_err(g[i], fd[static_cast<std::size_t>(i)]));
    }
  }
  return worst;
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_primitives(unsigned seed, double tol) {
  std::vector<GradCheckEntry> out;
  auto run = [&](const std::string& name, long r, long c, int nin,
                 std::function<Var(Tape&, const std::vector<Var>&)> build) {
    GradCheckEntry e;
    e.name = name;
    e.max_rel_err = check_one(seed + static_cast<unsigned>(out.size()), r, c, nin, build);
    e.pass = e.max_rel_err <= tol;
    out.push_back(std::move(e));
  };

  run("add", 3, 4, 2, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.mul(t.add(v[0], v[1]), t.add(v[0], v[1])));
  });
  run("sub", 3, 4, 2, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.mul(t.sub(v[0], v[1]), t.sub(v[0], v[1])));
  });
  run("mul", 3, 4, 2,
      [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.mul(v[0], v[1])); });
  run("div", 2, 3, 2, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.div(v[0], t.add_scalar(t.mul(v[1], v[1]), 1.0)));
  });
  run("neg", 2, 3, 1, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.mul(t.neg(v[0]), v[0]));
  });
  run("exp", 2, 3, 1,
      [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.exp(v[0])); });
  run("log", 2, 3, 1, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.log(t.add_scalar(t.mul(v[0], v[0]), 1.0)));
  });
  run("sqrt", 2, 3, 1, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.sqrt(t.add_scalar(t.mul(v[0], v[0]), 0.5)));
  });
  run("cos", 2, 3, 1,
      [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.cos(v[0])); });
  run("sin", 2, 3, 1,
      [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.sin(v[0])); });
  run("gelu", 2, 5, 1,
      [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.gelu(v[0])); });
  run("scale", 2, 3, 1,
      [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.scale(v[0], -2.5)); });
  run("matmul", 4, 4, 2, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.matmul(v[0], v[1]));
  });
  run("matmul_ta", 4, 4, 2, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.matmul(v[0], v[1], true, false));
  });
  run("matmul_tb", 4, 4, 2, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.matmul(v[0], v[1], false, true));
  });
  run("matmul_tatb", 4, 4, 2, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.matmul(v[0], v[1], true, true));
  });
  run("layer_norm", 3, 6, 1,
      [](Tape& t, const std::vector<Var>& v) { return t.mean_all(t.mul(t.layer_norm(v[0]), v[0])); });
  run("slice_rows", 5, 3, 1, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.slice_rows(v[0], 1, 3));
  });
  run("reshape", 4, 3, 1, [](Tape& t, const std::vector<Var>& v) {
    return t.mean_all(t.mul(t.reshape(v[0], 6, 2), t.reshape(v[0], 6, 2)));
  });
  run("scale_rows", 4, 3, 2, [](Tape& t, const std::vector<Var>& v) {
    Var s = t.slice_rows(t.reshape(v[1], 12, 1), 0, 4);
    return t.mean_all(t.scale_rows(v[0], s));
  });
  run("scale_cols", 4, 3, 2, [](Tape& t, const std::vector<Var>& v) {
    Var s = t.slice_rows(t.reshape(v[1], 12, 1), 0, 3);
    return t.mean_all(t.scale_cols(v[0], s));
  });
  run("add_rows", 4, 3, 2, [](Tape& t, const std::vector<Var>& v) {
    Var s = t.slice_rows(t.reshape(v[1], 12, 1), 0, 4);
    return t.mean_all(t.mul(t.add_rows(v[0], s), v[0]));
  });
  run("add_cols", 4, 3, 2, [](Tape& t, const std::vector<Var>& v) {
    Var s = t.slice_rows(t.reshape(v[1], 12, 1), 0, 3);
    return t.mean_all(t.mul(t.add_cols(v[0], s), v[0]));
  });
  run("scan_diag", 6, 4, 3, [](Tape& t, const std::vector<Var>& v) {
    // v[0]: b_re (6x4), v[1]: b_im (6x4), v[2]: transition seeds (6x4, first 8 used)
    Var flat = t.reshape(v[2], 24, 1);
    Var raw_re = t.slice_rows(flat, 0, 4);
    Var raw_im = t.slice_rows(flat, 4, 4);
    // keep |a| < 1 for a well-conditioned recurrence
    Var a_re = t.scale(t.cos(raw_re), 0.6);
    Var a_im = t.scale(t.sin(raw_im), 0.6);
    auto [sr, si] = t.scan_diag(a_re, a_im, v[0], v[1]);
    return t.mean_all(t.add(t.mul(sr, sr), t.mul(si, si)));
  });
  run("pinball", 6, 5, 1, [](Tape& t, const std::vector<Var>& v) {
    Tensor target(2, 5);
    for (long i = 0; i < target.size(); ++i) target[i] = 0.3 * static_cast<double>(i % 7) - 0.9;
    return t.pinball(v[0], target, {0.1, 0.5, 0.9});
  });
  return out;
}

}  // namespace flowstate::ad
