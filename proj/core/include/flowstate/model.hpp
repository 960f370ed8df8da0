#pragma once

#include <string>
#include <vector>

#include "flowstate/autodiff.hpp"
#include "flowstate/basis.hpp"
#include "flowstate/causal_norm.hpp"
#include "flowstate/scan.hpp"
#include "flowstate/tensor.hpp"

namespace flowstate {

struct EncoderConfig {
  long num_layers = 2;      ///< N
  long state_size = 16;     ///< P
  long hidden_size = 24;    ///< H
  long input_channels = 2;  ///< value channel + observation-mask flag
  long context_length = 256;  ///< L
  long min_context = 20;      ///< L_min

  void validate() const;
};

/// Trainable parameters of one S5 layer (S5 block + pre-norm residual MLP).
/// Re(lambda) is parameterized as -exp(lambda_re_raw) so the state stays
/// stable under unconstrained updates. The MLP hidden width equals H.
struct S5LayerParams {
  Tensor lambda_re_raw;  ///< P x 1
  Tensor lambda_im;      ///< P x 1
  Tensor b_re, b_im;     ///< P x H_in
  Tensor c_re, c_im;     ///< H_out x P
  Tensor d;              ///< H x 1 elementwise feedthrough (H_in == H_out)
  Tensor log_delta;      ///< P x 1 per-state log step size
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  long state_size() const { return lambda_re_raw.rows; }
  long in_size() const { return b_re.cols; }
  long out_size() const { return c_re.rows; }
};

struct ModelConfig {
  EncoderConfig encoder;
  BasisFamily basis_family = BasisFamily::kLegendre;
  long basis_n = 24;
  std::vector<double> quantile_levels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  VarianceMode norm_variance_mode = VarianceMode::kElementwiseCumsum;
  long t_base = 24;
  double base_seasonality = 24.0;

  long quantiles() const { return static_cast<long>(quantile_levels.size()); }
  BasisSpec basis() const { return BasisSpec::make(basis_family, basis_n); }
  long median_index() const;
  void validate() const;
};

/// Every trainable tensor of the model: embedding, S5 layer stack, and the
/// coefficient readout.
struct StackParams {
  Tensor embed;  ///< H x input_channels
  std::vector<S5LayerParams> layers;
  Tensor w_out;  ///< (K * basis_n) x H
};

struct NamedTensor {
  std::string name;
  Tensor* tensor;
};
std::vector<NamedTensor> named_tensors(StackParams& p);
long param_count(const StackParams& p);

/// Largest Re(lambda) across all layers; < 0 by construction.
double max_lambda_re(const StackParams& p);

/// HiPPO initialization of a single H -> H layer: Lambda is the eigenvalue
/// set of the normal part of the LegS matrix, B/C are random maps projected
/// through the eigenbasis, D = 1, log_delta ~ U[log 1e-3, log 1e-1].
S5LayerParams hippo_init(long P, long H, unsigned seed);

StackParams init_stack(const ModelConfig& cfg, unsigned seed);

struct Discretized {
  ComplexVec a_bar;           ///< length P
  Tensor b_bar_re, b_bar_im;  ///< P x H_in
};

/// ZOH discretization with runtime scale: a_bar = exp(lambda * s_delta *
/// exp(log_delta)), b_bar = ((a_bar - 1)/lambda) B, with the limit rule
/// b_bar = delta_bar * B when |lambda| < 1e-12. s_delta must be > 0.
Discretized discretize(const S5LayerParams& params, double s_delta);

/// One S5 layer applied to a sequence (L x H_in) -> L x H_out.
Tensor s5_layer_forward(const Tensor& x_seq, const S5LayerParams& params, double s_delta);

/// Full encoder: linear embedding followed by the layer stack; returns the
/// final layer's outputs at every timestep (L x H).
Tensor encode(const Tensor& x_input, const ModelConfig& cfg, const StackParams& params,
              double s_delta);

// ---- tape-level building blocks shared by training and inference ----

struct LayerVars {
  ad::Var lambda_re_raw, lambda_im, b_re, b_im, c_re, c_im, d, log_delta;
  ad::Var mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct StackVars {
  ad::Var embed;
  std::vector<LayerVars> layers;
  ad::Var w_out;
};

/// Loads the parameter tensors onto a tape, as params (trainable) or
/// constants. Order matches named_tensors().
StackVars load_stack(ad::Tape& tape, const StackParams& p, bool trainable);

struct DiscretizedVars {
  ad::Var a_re, a_im;    // P x 1
  ad::Var bb_re, bb_im;  // P x H_in
};
DiscretizedVars discretize_tape(ad::Tape& tape, const LayerVars& lv, double s_delta);

ad::Var s5_layer_tape(ad::Tape& tape, ad::Var x_seq, const LayerVars& lv, double s_delta);

/// x_input is the already-normalized L x input_channels block.
ad::Var encode_tape(ad::Tape& tape, ad::Var x_input, const StackVars& sv, double s_delta);

}  // namespace flowstate
