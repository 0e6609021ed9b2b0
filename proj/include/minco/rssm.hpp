#pragma once

// Recurrent state-space model: a GRU carries the deterministic path, and
// diagonal Gaussians over the stochastic latent are predicted from it
// (prior) or from it plus the observation embedding (posterior).

#include <torch/torch.h>

#include <functional>
#include <optional>
#include <vector>

namespace minco {

using OptGenerator = std::optional<at::Generator>;

/// Diagonal Gaussian with batch dims [..., d].
struct DiagGaussian {
  torch::Tensor mean;
  torch::Tensor std;

  /// Reparameterized sample mean + std * eps, eps ~ N(0, I).
  torch::Tensor rsample(OptGenerator gen = std::nullopt) const;
  DiagGaussian detach() const { return {mean.detach(), std.detach()}; }
  std::int64_t dim() const { return mean.size(-1); }
};

struct LatentState {
  torch::Tensor deter;  // [B, d_h]
  torch::Tensor stoch;  // [B, d_s]
  DiagGaussian dist;

  torch::Tensor features() const { return torch::cat({deter, stoch}, -1); }
  LatentState detach() const { return {deter.detach(), stoch.detach(), dist.detach()}; }
  std::int64_t batch_size() const { return deter.size(0); }
};

struct PriorPosterior {
  DiagGaussian prior;
  DiagGaussian posterior;
  LatentState state;  // state.dist is the posterior
};

/// Time-major stack of a posterior rollout.
struct PosteriorSequence {
  torch::Tensor deter;           // [T, B, d_h]
  torch::Tensor stoch;           // [T, B, d_s]
  DiagGaussian prior;            // [T, B, d_s]
  DiagGaussian posterior;        // [T, B, d_s]

  torch::Tensor features() const { return torch::cat({deter, stoch}, -1); }
  /// Flattens time and batch into one batch of start states, detached.
  LatentState flatten_detached() const;
};

struct ImaginedTrajectory {
  std::vector<LatentState> states;     // H + 1
  std::vector<torch::Tensor> actions;  // H
};

using ActorFn = std::function<torch::Tensor(const torch::Tensor& features)>;

struct RssmOptions {
  std::int64_t deter = 200;
  std::int64_t stoch = 30;
  std::int64_t hidden = 200;
  std::int64_t action_dim = 2;
  std::int64_t embed_dim = 1024;
  double min_std = 0.1;
};

class RssmImpl : public torch::nn::Module {
public:
  explicit RssmImpl(const RssmOptions& options);

  /// Zero deterministic and stochastic parts; dist has mean 0 and std = min_std.
  LatentState initial_state(std::int64_t batch) const;

  std::pair<DiagGaussian, LatentState> prior_step(const LatentState& prev,
                                                  const torch::Tensor& action,
                                                  OptGenerator gen = std::nullopt);

  PriorPosterior posterior_step(const LatentState& prev, const torch::Tensor& action,
                                const torch::Tensor& embed, OptGenerator gen = std::nullopt);

  /// actions/embeds are time-major [T, B, .]; action t precedes embed t.
  std::vector<PriorPosterior> rollout_posterior(const LatentState& init,
                                                const torch::Tensor& actions,
                                                const torch::Tensor& embeds,
                                                OptGenerator gen = std::nullopt);

  /// Prior-only rollout from detached start states with actions drawn by `actor`.
  ImaginedTrajectory rollout_imagine(const LatentState& init, const ActorFn& actor,
                                     std::int64_t horizon, OptGenerator gen = std::nullopt);

  const RssmOptions& options() const { return options_; }
  std::int64_t feature_dim() const { return options_.deter + options_.stoch; }

private:
  torch::Tensor recurrent(const LatentState& prev, const torch::Tensor& action);
  DiagGaussian to_gaussian(const torch::Tensor& raw) const;

  RssmOptions options_;
  torch::nn::Linear input_proj_{nullptr};
  torch::nn::GRUCell cell_{nullptr};
  torch::nn::Linear prior_hidden_{nullptr}, prior_out_{nullptr};
  torch::nn::Linear post_hidden_{nullptr}, post_out_{nullptr};
};
TORCH_MODULE(Rssm);

PosteriorSequence stack_sequence(const std::vector<PriorPosterior>& steps);

/// Closed-form KL(p || q) summed over the last dim. Throws on non-positive std.
torch::Tensor kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q);

/// alpha = r / (r + 1).
double balance_alpha(double ratio);

/// alpha * KL(sg(post) || prior) + (1 - alpha) * KL(post || sg(prior)). The
/// value equals the plain KL; only the gradient split between the two
/// arguments depends on the ratio.
torch::Tensor balanced_kl(const DiagGaussian& posterior, const DiagGaussian& prior, double ratio);

}  // namespace minco
