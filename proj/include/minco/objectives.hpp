#pragma once

// Model-learning objectives. Every term is expressed as a quantity to be
// maximized; the trainer descends on -total.

#include "minco/config.hpp"
#include "minco/replay.hpp"
#include "minco/representation.hpp"
#include "minco/rssm.hpp"

#include <torch/torch.h>

#include <random>
#include <string>
#include <vector>

namespace minco {

/// beta(t) = min(10^(a t - b), c).
struct BetaSchedule {
  double a = 8e-5;
  double b = 5.0;
  double c = 0.15;

  /// Step at which 10^(a t - b) reaches the cap c.
  double cap_step() const;
};

double beta_at(const BetaSchedule& schedule, double t);

/// -beta * balanced KL, averaged over every leading dim.
torch::Tensor tvd_loss(const DiagGaussian& posterior, const DiagGaussian& prior, double beta,
                       double kl_ratio);
torch::Tensor tvd_loss(const DiagGaussian& posterior, const DiagGaussian& prior, double t,
                       const BetaSchedule& schedule, double kl_ratio);

/// Mean log N(target; predicted_mean, 1).
torch::Tensor reward_log_likelihood(const torch::Tensor& predicted_mean, const torch::Tensor& target);

/// Mean over leading dims of the per-image sum of log N(target; predicted, 1).
torch::Tensor image_log_likelihood(const torch::Tensor& predicted, const torch::Tensor& target);

/// Stack of Linear layers with ELU between them.
class DenseHeadImpl : public torch::nn::Module {
public:
  DenseHeadImpl(std::int64_t in, std::int64_t hidden, std::int64_t out, int layers);
  torch::Tensor forward(torch::Tensor x);

private:
  torch::nn::ModuleList layers_;
};
TORCH_MODULE(DenseHead);

struct WorldModelOptions {
  EncoderOptions encoder;
  RssmOptions rssm;
  std::int64_t head_hidden = 200;
  int head_layers = 4;
  std::int64_t predictor_hidden = 1024;
  std::int64_t inverse_hidden = 512;

  static WorldModelOptions from_config(const Config& config);
};

class WorldModelImpl : public torch::nn::Module {
public:
  explicit WorldModelImpl(const WorldModelOptions& options);

  /// [..., F] features -> [...] predicted reward mean.
  torch::Tensor predict_reward(const torch::Tensor& features);
  /// features: [T, B, F]; rewards: [T, B].
  torch::Tensor reward_objective(const torch::Tensor& features, const torch::Tensor& rewards);

  std::vector<torch::Tensor> encoder_parameters() const { return encoder->parameters(); }
  /// Everything except the pixel decoder.
  std::vector<torch::Tensor> representation_model_parameters() const;

  const WorldModelOptions& options() const { return options_; }

  ConvEncoder encoder{nullptr};
  Rssm rssm{nullptr};
  DenseHead reward_head{nullptr};
  Predictor predictor{nullptr};
  InverseDynamics inverse{nullptr};
  ConvDecoder decoder{nullptr};

private:
  WorldModelOptions options_;
};
TORCH_MODULE(WorldModel);

/// Named terms of one objective evaluation. Undefined tensors are terms the
/// variant does not use.
struct LossBreakdown {
  torch::Tensor simsiam;
  torch::Tensor reward;
  torch::Tensor tvd;     // -beta KL with the time-varying (or ablation constant) beta
  torch::Tensor c_inv;
  torch::Tensor recon;   // reconstruction-variant image log-likelihood
  torch::Tensor kl;      // reconstruction-variant -beta KL
  torch::Tensor total;
  double beta = 0.0;
  double kl_value = 0.0;  // plain mean KL, for logging

  /// Names of the terms summed into total, in a fixed order.
  std::vector<std::string> active_terms() const;
  const torch::Tensor& term(const std::string& name) const;
  double value(const std::string& name) const;  // 0 when absent
};

enum class ObjectiveVariant { kMinco, kDreamer };

ObjectiveVariant parse_variant(const std::string& name);

struct ObjectiveOptions {
  ObjectiveVariant variant = ObjectiveVariant::kMinco;
  BetaSchedule schedule;
  double kl_ratio = 4.0;
  bool use_simsiam = true;
  bool use_inverse = true;
  bool use_tvd = true;
  double constant_beta = -1.0;  // used when use_tvd is false; < 0 means schedule.c
  double dreamer_beta = 1.0;
  int shift_pad = 4;

  static ObjectiveOptions from_config(const Config& config);
  /// Beta applied to the dynamics term at schedule step t.
  double beta(double t) const;
};

struct ModelOutput {
  LossBreakdown losses;
  PosteriorSequence posterior;  // time-major [L, B, .]
};

/// Augment, encode both views, roll the posterior on view 1, then assemble
/// similarity + reward + time-varying KL + cross inverse dynamics.
ModelOutput minco_objective(WorldModel& model, const env::TrajectoryBatch& batch, double t,
                            const ObjectiveOptions& options, std::mt19937_64& rng,
                            OptGenerator gen = std::nullopt);

/// Reconstruction + reward + constant-beta KL on unaugmented frames.
ModelOutput dreamer_objective(WorldModel& model, const env::TrajectoryBatch& batch,
                              const ObjectiveOptions& options, OptGenerator gen = std::nullopt);

/// Dispatches on options.variant.
ModelOutput model_objective(WorldModel& model, const env::TrajectoryBatch& batch, double t,
                            const ObjectiveOptions& options, std::mt19937_64& rng,
                            OptGenerator gen = std::nullopt);

/// Name of the representation term ("simsiam" or "recon") and the dynamics
/// term ("tvd" or "kl") for a variant.
std::string representation_term_name(ObjectiveVariant variant);
std::string dynamics_term_name(ObjectiveVariant variant);

}  // namespace minco
