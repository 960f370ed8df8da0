#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "flowstate/checkpoint.hpp"
#include "flowstate/data.hpp"
#include "flowstate/model.hpp"

namespace flowstate {

struct TrainConfig {
  long steps = 600;
  long batch = 4;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
  bool cosine_decay = true;
  bool cpm_enabled = true;
  double patch_mask_prob = 0.5;
  bool parallel_anchors = true;  ///< false: single anchor at the last context point
  unsigned seed = 1;
  long checkpoint_every = 0;  ///< 0 = final checkpoint only

  void validate() const;
};

/// Contiguous patch masking: with probability patch_mask_prob one block of
/// length {1,2,3} * t_base is zeroed in the value channel and flagged as
/// missing. The first min_context steps always stay observed.
struct MaskedSeries {
  std::vector<double> x_masked;
  std::vector<std::uint8_t> missing;  ///< 1 = masked
};
MaskedSeries apply_cpm_mask(const std::vector<double>& x, std::mt19937_64& rng,
                            const ModelConfig& mc, const TrainConfig& tc);

/// Parallel-forecast objective over one training window (length >=
/// context_length + t_base, raw values). The masked context plus missing
/// flags form the encoder input; every anchor decodes one t_base-step
/// forecast, de-normalized with the anchor's running stats and scored with
/// pinball loss against the raw (pre-mask) targets. Mean over anchors.
ad::Var parallel_forecast_loss_tape(ad::Tape& tape, const std::vector<double>& window,
                                    const MaskedSeries& context, const StackVars& sv,
                                    const ModelConfig& mc, const TrainConfig& tc);

/// Convenience wrapper: applies CPM with `rng`, runs the tape, returns the
/// scalar loss value.
double parallel_forecast_loss(const std::vector<double>& window, const StackParams& params,
                              const ModelConfig& mc, const TrainConfig& tc, std::mt19937_64& rng);

long anchor_count(const ModelConfig& mc, const TrainConfig& tc);

// ---------------------------------------------------------------------------
// training data sources
// ---------------------------------------------------------------------------

/// Deterministic provider of training windows.
class WindowSource {
 public:
  virtual ~WindowSource() = default;
  virtual std::vector<double> window(std::uint64_t seed, long length) const = 0;
};

class SyntheticSource final : public WindowSource {
 public:
  SyntheticSource(SyntheticKind kind, SyntheticParams params)
      : kind_(kind), params_(std::move(params)) {}
  std::vector<double> window(std::uint64_t seed, long length) const override;

 private:
  SyntheticKind kind_;
  SyntheticParams params_;
};

/// Samples windows from the train region (before each series' split) of a
/// loaded dataset; multivariate series contribute one pool entry per channel.
class DatasetSource final : public WindowSource {
 public:
  explicit DatasetSource(const std::vector<TimeSeries>& series);
  std::vector<double> window(std::uint64_t seed, long length) const override;

 private:
  std::vector<std::vector<double>> pool_;
};

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

struct StepInfo {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

class Trainer {
 public:
  Trainer(ModelConfig mc, TrainConfig tc, const WindowSource& source);

  /// Resumes from checkpointed parameters + optimizer state.
  void restore(const Checkpoint& ckpt);
  Checkpoint snapshot() const;

  StepInfo step();
  long completed_steps() const { return step_; }
  const StackParams& params() const { return params_; }
  const ModelConfig& model_config() const { return mc_; }
  const TrainConfig& train_config() const { return tc_; }

 private:
  ModelConfig mc_;
  TrainConfig tc_;
  const WindowSource& source_;
  StackParams params_;
  std::vector<Tensor> adam_m_, adam_v_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

struct ModelGradCheck {
  double max_rel_err = 0.0;
  bool pass = false;
  long checked_coordinates = 0;
};

/// Full-model check: parallel-forecast loss gradients vs central finite
/// differences (h = 1e-5) on a tiny random model.
ModelGradCheck gradcheck_model(const ModelConfig& mc, const TrainConfig& tc, unsigned seed,
                               double tol = 1e-4, double fd_step = 1e-5);

}  // namespace flowstate
