#pragma once

// Actor-critic learning on imagined latent rollouts.

#include "minco/objectives.hpp"
#include "minco/rssm.hpp"

#include <torch/torch.h>

namespace minco {

enum class ActMode { kExplore, kEval };

struct ActorOptions {
  std::int64_t feature_dim = 230;
  std::int64_t action_dim = 2;
  std::int64_t hidden = 200;
  int layers = 4;
  double init_std = 5.0;
  double min_std = 1e-4;
};

/// Tanh-squashed diagonal Gaussian policy.
class ActorImpl : public torch::nn::Module {
public:
  explicit ActorImpl(const ActorOptions& options);

  /// Pre-squash mean and std.
  DiagGaussian distribution(const torch::Tensor& features);
  /// Reparameterized sample (explore) or tanh(mean) (eval); components in (-1, 1).
  torch::Tensor act(const torch::Tensor& features, ActMode mode, OptGenerator gen = std::nullopt);

  const ActorOptions& options() const { return options_; }

private:
  ActorOptions options_;
  double raw_init_std_;
  DenseHead net_{nullptr};
};
TORCH_MODULE(Actor);

class CriticImpl : public torch::nn::Module {
public:
  CriticImpl(std::int64_t feature_dim, std::int64_t hidden, int layers = 4);
  torch::Tensor forward(const torch::Tensor& features);  // [..., F] -> [...]

private:
  DenseHead net_{nullptr};
};
TORCH_MODULE(Critic);

struct ImaginedRollout {
  torch::Tensor features;   // [H+1, B, F]
  torch::Tensor actions;    // [H, B, A]
  torch::Tensor rewards;    // [H, B], reward on arrival at step t+1
  torch::Tensor values;     // [H+1, B]
  torch::Tensor discounts;  // [H, B]

  std::int64_t horizon() const { return actions.size(0); }
};

/// Imagines `horizon` prior steps from detached start states, scoring them
/// with the reward head and critic.
ImaginedRollout imagine(WorldModel& model, Actor& actor, Critic& critic, const LatentState& start,
                        std::int64_t horizon, double gamma, OptGenerator gen = std::nullopt);

/// G_t = r_t + gamma_t [(1 - lambda) v_{t+1} + lambda G_{t+1}], G_H := v_H.
/// rewards/discounts: [H, ...], values: [H+1, ...].
torch::Tensor lambda_return(const torch::Tensor& rewards, const torch::Tensor& values,
                            const torch::Tensor& discounts, double lambda);
torch::Tensor lambda_return(const torch::Tensor& rewards, const torch::Tensor& values, double gamma,
                            double lambda);

/// MSE between critic(features[t].detach()) and frozen lambda-return targets, t < H.
torch::Tensor critic_loss(Critic& critic, const ImaginedRollout& rollout, double lambda);

/// -mean lambda-return; gradients reach the actor through imagined dynamics.
torch::Tensor actor_loss(const ImaginedRollout& rollout, double lambda);

/// Disables requires_grad on a parameter set for the guard's lifetime.
class FreezeGuard {
public:
  explicit FreezeGuard(std::vector<torch::Tensor> params);
  ~FreezeGuard();
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

private:
  std::vector<torch::Tensor> params_;
  std::vector<bool> previous_;
};

struct PolicyUpdateOptions {
  std::int64_t horizon = 15;
  double gamma = 0.99;
  double lambda = 0.95;
  double grad_clip = 100.0;
};

struct PolicyUpdateResult {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_imagined_return = 0.0;
};

/// One actor step then one critic step. World-model parameters are frozen
/// throughout and never receive gradients.
PolicyUpdateResult policy_update(WorldModel& model, Actor& actor, Critic& critic,
                                 const LatentState& start, const PolicyUpdateOptions& options,
                                 torch::optim::Optimizer& actor_optim,
                                 torch::optim::Optimizer& critic_optim,
                                 OptGenerator gen = std::nullopt);

}  // namespace minco
