#include "minco/rssm.hpp"

#include <stdexcept>

namespace minco {

namespace F = torch::nn::functional;

torch::Tensor DiagGaussian::rsample(OptGenerator gen) const {
  auto eps = at::randn(mean.sizes(), gen, mean.options());
  return mean + std * eps;
}

LatentState PosteriorSequence::flatten_detached() const {
  const auto d_h = deter.size(-1);
  const auto d_s = stoch.size(-1);
  return {deter.detach().reshape({-1, d_h}), stoch.detach().reshape({-1, d_s}),
          {posterior.mean.detach().reshape({-1, d_s}), posterior.std.detach().reshape({-1, d_s})}};
}

RssmImpl::RssmImpl(const RssmOptions& options) : options_(options) {
  if (options.deter <= 0 || options.stoch <= 0 || options.hidden <= 0 || options.action_dim <= 0 ||
      options.embed_dim <= 0 || options.min_std <= 0.0) {
    throw std::invalid_argument("RssmOptions: all sizes and min_std must be positive");
  }
  input_proj_ = register_module(
      "input_proj", torch::nn::Linear(options.stoch + options.action_dim, options.hidden));
  cell_ = register_module("cell", torch::nn::GRUCell(options.hidden, options.deter));
  prior_hidden_ = register_module("prior_hidden", torch::nn::Linear(options.deter, options.hidden));
  prior_out_ = register_module("prior_out", torch::nn::Linear(options.hidden, 2 * options.stoch));
  post_hidden_ = register_module(
      "post_hidden", torch::nn::Linear(options.deter + options.embed_dim, options.hidden));
  post_out_ = register_module("post_out", torch::nn::Linear(options.hidden, 2 * options.stoch));
}

LatentState RssmImpl::initial_state(std::int64_t batch) const {
  if (batch <= 0) throw std::invalid_argument("initial_state: batch must be >= 1");
  auto opts = torch::TensorOptions().dtype(prior_out_->weight.scalar_type());
  return {torch::zeros({batch, options_.deter}, opts),
          torch::zeros({batch, options_.stoch}, opts),
          {torch::zeros({batch, options_.stoch}, opts),
           torch::full({batch, options_.stoch}, options_.min_std, opts)}};
}

DiagGaussian RssmImpl::to_gaussian(const torch::Tensor& raw) const {
  auto parts = raw.chunk(2, -1);
  return {parts[0], F::softplus(parts[1]) + options_.min_std};
}

torch::Tensor RssmImpl::recurrent(const LatentState& prev, const torch::Tensor& action) {
  if (action.dim() != 2 || action.size(-1) != options_.action_dim) {
    throw std::invalid_argument("RSSM: action must be [B, " + std::to_string(options_.action_dim) +
                                "]");
  }
  if (action.size(0) != prev.batch_size()) {
    throw std::invalid_argument("RSSM: action batch does not match state batch");
  }
  auto x = F::elu(input_proj_(torch::cat({prev.stoch, action}, -1)));
  return cell_(x, prev.deter);
}

std::pair<DiagGaussian, LatentState> RssmImpl::prior_step(const LatentState& prev,
                                                          const torch::Tensor& action,
                                                          OptGenerator gen) {
  auto deter = recurrent(prev, action);
  auto prior = to_gaussian(prior_out_(F::elu(prior_hidden_(deter))));
  auto stoch = prior.rsample(gen);
  return {prior, LatentState{deter, stoch, prior}};
}

PriorPosterior RssmImpl::posterior_step(const LatentState& prev, const torch::Tensor& action,
                                        const torch::Tensor& embed, OptGenerator gen) {
  if (embed.dim() != 2 || embed.size(-1) != options_.embed_dim ||
      embed.size(0) != prev.batch_size()) {
    throw std::invalid_argument("RSSM: embed must be [B, " + std::to_string(options_.embed_dim) +
                                "]");
  }
  auto deter = recurrent(prev, action);
  auto prior = to_gaussian(prior_out_(F::elu(prior_hidden_(deter))));
  auto posterior = to_gaussian(post_out_(F::elu(post_hidden_(torch::cat({deter, embed}, -1)))));
  auto stoch = posterior.rsample(gen);
  return {prior, posterior, LatentState{deter, stoch, posterior}};
}

std::vector<PriorPosterior> RssmImpl::rollout_posterior(const LatentState& init,
                                                        const torch::Tensor& actions,
                                                        const torch::Tensor& embeds,
                                                        OptGenerator gen) {
  if (actions.dim() != 3 || embeds.dim() != 3 || actions.size(0) != embeds.size(0)) {
    throw std::invalid_argument("rollout_posterior: actions and embeds must be [T, B, .] with equal T");
  }
  if (actions.size(0) < 1) throw std::invalid_argument("rollout_posterior: T must be >= 1");
  std::vector<PriorPosterior> out;
  out.reserve(actions.size(0));
  LatentState state = init;
  for (std::int64_t t = 0; t < actions.size(0); ++t) {
    out.push_back(posterior_step(state, actions[t], embeds[t], gen));
    state = out.back().state;
  }
  return out;
}

ImaginedTrajectory RssmImpl::rollout_imagine(const LatentState& init, const ActorFn& actor,
                                             std::int64_t horizon, OptGenerator gen) {
  if (horizon <= 0) throw std::invalid_argument("rollout_imagine: horizon must be >= 1");
  ImaginedTrajectory traj;
  traj.states.reserve(horizon + 1);
  traj.actions.reserve(horizon);
  traj.states.push_back(init.detach());
  for (std::int64_t t = 0; t < horizon; ++t) {
    auto action = actor(traj.states.back().features());
    traj.actions.push_back(action);
    traj.states.push_back(prior_step(traj.states.back(), action, gen).second);
  }
  return traj;
}

PosteriorSequence stack_sequence(const std::vector<PriorPosterior>& steps) {
  std::vector<torch::Tensor> deter, stoch, pm, ps, qm, qs;
  for (const auto& s : steps) {
    deter.push_back(s.state.deter);
    stoch.push_back(s.state.stoch);
    pm.push_back(s.prior.mean);
    ps.push_back(s.prior.std);
    qm.push_back(s.posterior.mean);
    qs.push_back(s.posterior.std);
  }
  return {torch::stack(deter), torch::stack(stoch), {torch::stack(pm), torch::stack(ps)},
          {torch::stack(qm), torch::stack(qs)}};
}

torch::Tensor kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q) {
  if (p.mean.sizes() != q.mean.sizes() || p.std.sizes() != q.std.sizes() ||
      p.mean.sizes() != p.std.sizes()) {
    throw std::invalid_argument("kl_diag_gaussian: dimensionality mismatch");
  }
  if ((p.std <= 0).any().item<bool>() || (q.std <= 0).any().item<bool>()) {
    throw std::invalid_argument("kl_diag_gaussian: std must be strictly positive");
  }
  auto var_ratio = (p.std / q.std).pow(2);
  auto mean_term = ((p.mean - q.mean) / q.std).pow(2);
  return (0.5 * (var_ratio + mean_term - 1.0) - torch::log(p.std / q.std)).sum(-1);
}

double balance_alpha(double ratio) {
  if (!(ratio > 0.0)) throw std::invalid_argument("KL balance ratio must be > 0");
  return ratio / (ratio + 1.0);
}

torch::Tensor balanced_kl(const DiagGaussian& posterior, const DiagGaussian& prior, double ratio) {
  const double alpha = balance_alpha(ratio);
  return alpha * kl_diag_gaussian(posterior.detach(), prior) +
         (1.0 - alpha) * kl_diag_gaussian(posterior, prior.detach());
}

}  // namespace minco
