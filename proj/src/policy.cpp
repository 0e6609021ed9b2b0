#include "minco/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace minco {

namespace F = torch::nn::functional;

ActorImpl::ActorImpl(const ActorOptions& options)
    : options_(options), raw_init_std_(std::log(std::expm1(options.init_std))) {
  net_ = register_module("net", DenseHead(options.feature_dim, options.hidden,
                                          2 * options.action_dim, options.layers));
}

DiagGaussian ActorImpl::distribution(const torch::Tensor& features) {
  auto parts = net_(features).chunk(2, -1);
  return {parts[0], F::softplus(parts[1] + raw_init_std_) + options_.min_std};
}

torch::Tensor ActorImpl::act(const torch::Tensor& features, ActMode mode, OptGenerator gen) {
  auto dist = distribution(features);
  return mode == ActMode::kEval ? torch::tanh(dist.mean) : torch::tanh(dist.rsample(gen));
}

CriticImpl::CriticImpl(std::int64_t feature_dim, std::int64_t hidden, int layers) {
  net_ = register_module("net", DenseHead(feature_dim, hidden, 1, layers));
}

torch::Tensor CriticImpl::forward(const torch::Tensor& features) { return net_(features).squeeze(-1); }

ImaginedRollout imagine(WorldModel& model, Actor& actor, Critic& critic, const LatentState& start,
                        std::int64_t horizon, double gamma, OptGenerator gen) {
  auto traj = model->rssm->rollout_imagine(
      start, [&](const torch::Tensor& f) { return actor->act(f, ActMode::kExplore, gen); }, horizon,
      gen);
  std::vector<torch::Tensor> feats;
  feats.reserve(traj.states.size());
  for (const auto& s : traj.states) feats.push_back(s.features());

  ImaginedRollout r;
  r.features = torch::stack(feats);
  r.actions = torch::stack(traj.actions);
  r.rewards = model->predict_reward(r.features.narrow(0, 1, horizon));
  r.values = critic(r.features);
  r.discounts = torch::full_like(r.rewards, gamma).detach();
  return r;
}

torch::Tensor lambda_return(const torch::Tensor& rewards, const torch::Tensor& values,
                            const torch::Tensor& discounts, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda_return: lambda in [0, 1]");
  const auto H = rewards.size(0);
  if (values.size(0) != H + 1 || discounts.sizes() != rewards.sizes() ||
      values.sizes().slice(1) != rewards.sizes().slice(1)) {
    throw std::invalid_argument("lambda_return: need rewards [H, ...], values [H+1, ...]");
  }
  std::vector<torch::Tensor> out(H);
  auto next = values[H];
  for (std::int64_t t = H - 1; t >= 0; --t) {
    next = rewards[t] + discounts[t] * ((1.0 - lambda) * values[t + 1] + lambda * next);
    out[t] = next;
  }
  return torch::stack(out);
}

torch::Tensor lambda_return(const torch::Tensor& rewards, const torch::Tensor& values, double gamma,
                            double lambda) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("lambda_return: gamma in (0, 1)");
  return lambda_return(rewards, values, torch::full_like(rewards, gamma), lambda);
}

torch::Tensor critic_loss(Critic& critic, const ImaginedRollout& rollout, double lambda) {
  torch::Tensor targets;
  {
    torch::NoGradGuard no_grad;
    targets = lambda_return(rollout.rewards.detach(), rollout.values.detach(),
                            rollout.discounts.detach(), lambda);
  }
  auto predicted = critic(rollout.features.narrow(0, 0, rollout.horizon()).detach());
  return (predicted - targets).pow(2).mean();
}

torch::Tensor actor_loss(const ImaginedRollout& rollout, double lambda) {
  return -lambda_return(rollout.rewards, rollout.values, rollout.discounts, lambda).mean();
}

FreezeGuard::FreezeGuard(std::vector<torch::Tensor> params) : params_(std::move(params)) {
  previous_.reserve(params_.size());
  for (auto& p : params_) {
    previous_.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
}

FreezeGuard::~FreezeGuard() {
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
}

PolicyUpdateResult policy_update(WorldModel& model, Actor& actor, Critic& critic,
                                 const LatentState& start, const PolicyUpdateOptions& options,
                                 torch::optim::Optimizer& actor_optim,
                                 torch::optim::Optimizer& critic_optim, OptGenerator gen) {
  PolicyUpdateResult result;
  FreezeGuard freeze_model(model->parameters());
  ImaginedRollout rollout;
  {
    FreezeGuard freeze_critic(critic->parameters());
    rollout = imagine(model, actor, critic, start.detach(), options.horizon, options.gamma, gen);
    auto loss = actor_loss(rollout, options.lambda);
    actor_optim.zero_grad();
    loss.backward();
    torch::nn::utils::clip_grad_norm_(actor->parameters(), options.grad_clip);
    actor_optim.step();
    result.actor_loss = loss.item<double>();
    result.mean_imagined_return = -result.actor_loss;
  }
  auto loss = critic_loss(critic, rollout, options.lambda);
  critic_optim.zero_grad();
  loss.backward();
  torch::nn::utils::clip_grad_norm_(critic->parameters(), options.grad_clip);
  critic_optim.step();
  result.critic_loss = loss.item<double>();
  return result;
}

}  // namespace minco
