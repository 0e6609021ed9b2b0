#include "minco/objectives.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace minco {

namespace F = torch::nn::functional;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_schedule(const BetaSchedule& s) {
  if (!(s.a > 0.0 && s.b > 0.0 && s.c > 0.0)) {
    throw std::invalid_argument("beta schedule: a, b, c must all be > 0");
  }
}

}  // namespace

double BetaSchedule::cap_step() const {
  check_schedule(*this);
  return (b + std::log10(c)) / a;
}

double beta_at(const BetaSchedule& schedule, double t) {
  check_schedule(schedule);
  if (!(t >= 0.0)) throw std::invalid_argument("beta_at: t must be >= 0");
  return std::min(std::pow(10.0, schedule.a * t - schedule.b), schedule.c);
}

torch::Tensor tvd_loss(const DiagGaussian& posterior, const DiagGaussian& prior, double beta,
                       double kl_ratio) {
  return -beta * balanced_kl(posterior, prior, kl_ratio).mean();
}

torch::Tensor tvd_loss(const DiagGaussian& posterior, const DiagGaussian& prior, double t,
                       const BetaSchedule& schedule, double kl_ratio) {
  return tvd_loss(posterior, prior, beta_at(schedule, t), kl_ratio);
}

torch::Tensor reward_log_likelihood(const torch::Tensor& predicted_mean, const torch::Tensor& target) {
  if (predicted_mean.sizes() != target.sizes()) {
    throw std::invalid_argument("reward objective: prediction and target shapes differ");
  }
  return (-0.5 * (target - predicted_mean).pow(2) - kHalfLog2Pi).mean();
}

torch::Tensor image_log_likelihood(const torch::Tensor& predicted, const torch::Tensor& target) {
  if (predicted.sizes() != target.sizes()) {
    throw std::invalid_argument("image likelihood: prediction and target shapes differ");
  }
  auto per_pixel = -0.5 * (target - predicted).pow(2) - kHalfLog2Pi;
  return per_pixel.flatten(-3).sum(-1).mean();
}

DenseHeadImpl::DenseHeadImpl(std::int64_t in, std::int64_t hidden, std::int64_t out, int layers) {
  if (layers < 1) throw std::invalid_argument("DenseHead: need at least one layer");
  layers_ = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < layers; ++i) {
    const auto fan_in = i == 0 ? in : hidden;
    const auto fan_out = i + 1 == layers ? out : hidden;
    layers_->push_back(torch::nn::Linear(fan_in, fan_out));
  }
}

torch::Tensor DenseHeadImpl::forward(torch::Tensor x) {
  const auto n = layers_->size();
  for (std::size_t i = 0; i < n; ++i) {
    x = layers_[i]->as<torch::nn::Linear>()->forward(x);
    if (i + 1 < n) x = F::elu(x);
  }
  return x;
}

WorldModelOptions WorldModelOptions::from_config(const Config& c) {
  WorldModelOptions o;
  o.encoder.image_size = c.env.image_size;
  o.encoder.depth = c.model.cnn_depth;
  o.encoder.layers = c.model.cnn_layers;
  o.rssm.deter = c.model.deter;
  o.rssm.stoch = c.model.stoch;
  o.rssm.hidden = c.model.hidden;
  o.rssm.min_std = c.model.min_std;
  o.rssm.action_dim = 2;
  o.rssm.embed_dim = ConvEncoderImpl(o.encoder).embed_dim();
  o.head_hidden = c.model.hidden;
  o.predictor_hidden = c.model.predictor_hidden;
  o.inverse_hidden = c.model.inverse_hidden;
  return o;
}

WorldModelImpl::WorldModelImpl(const WorldModelOptions& options) : options_(options) {
  encoder = register_module("encoder", ConvEncoder(options.encoder));
  auto rssm_opts = options.rssm;
  rssm_opts.embed_dim = encoder->embed_dim();
  options_.rssm.embed_dim = rssm_opts.embed_dim;
  rssm = register_module("rssm", Rssm(rssm_opts));
  const auto feat = rssm->feature_dim();
  reward_head = register_module("reward_head",
                                DenseHead(feat, options.head_hidden, 1, options.head_layers));
  predictor = register_module("predictor", Predictor(encoder->embed_dim(), options.predictor_hidden));
  inverse = register_module(
      "inverse", InverseDynamics(encoder->embed_dim(), options.inverse_hidden, rssm_opts.action_dim));
  decoder = register_module("decoder", ConvDecoder(feat, options.encoder));
}

torch::Tensor WorldModelImpl::predict_reward(const torch::Tensor& features) {
  return reward_head(features).squeeze(-1);
}

torch::Tensor WorldModelImpl::reward_objective(const torch::Tensor& features,
                                               const torch::Tensor& rewards) {
  if (features.dim() < 1 || features.size(-1) != rssm->feature_dim()) {
    throw std::invalid_argument("reward objective: features have the wrong width");
  }
  return reward_log_likelihood(predict_reward(features), rewards.to(features.scalar_type()));
}

std::vector<torch::Tensor> WorldModelImpl::representation_model_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& m : {encoder->parameters(), rssm->parameters(), reward_head->parameters(),
                        predictor->parameters(), inverse->parameters()}) {
    out.insert(out.end(), m.begin(), m.end());
  }
  return out;
}

std::vector<std::string> LossBreakdown::active_terms() const {
  std::vector<std::string> names;
  for (const auto& name : {"simsiam", "recon", "reward", "tvd", "kl", "c_inv"}) {
    if (term(name).defined()) names.emplace_back(name);
  }
  return names;
}

const torch::Tensor& LossBreakdown::term(const std::string& name) const {
  if (name == "simsiam") return simsiam;
  if (name == "reward") return reward;
  if (name == "tvd") return tvd;
  if (name == "c_inv") return c_inv;
  if (name == "recon") return recon;
  if (name == "kl") return kl;
  if (name == "total") return total;
  throw std::invalid_argument("unknown loss term '" + name + "'");
}

double LossBreakdown::value(const std::string& name) const {
  const auto& t = term(name);
  return t.defined() ? t.item<double>() : 0.0;
}

ObjectiveVariant parse_variant(const std::string& name) {
  if (name == "minco") return ObjectiveVariant::kMinco;
  if (name == "dreamer") return ObjectiveVariant::kDreamer;
  throw std::invalid_argument("unknown objective variant '" + name + "'");
}

ObjectiveOptions ObjectiveOptions::from_config(const Config& c) {
  ObjectiveOptions o;
  o.variant = parse_variant(c.objective.variant);
  o.schedule = {c.schedule.a, c.schedule.b, c.schedule.c};
  o.kl_ratio = c.kl_ratio;
  o.use_simsiam = c.objective.simsiam;
  o.use_inverse = c.objective.inverse;
  o.use_tvd = c.objective.tvd;
  o.constant_beta = c.objective.constant_beta;
  o.dreamer_beta = c.objective.dreamer_beta;
  o.shift_pad = c.objective.shift_pad;
  return o;
}

double ObjectiveOptions::beta(double t) const {
  if (variant == ObjectiveVariant::kDreamer) return dreamer_beta;
  if (!use_tvd) return constant_beta < 0.0 ? schedule.c : constant_beta;
  return beta_at(schedule, t);
}

namespace {

// [B, L, ...] -> [L, B, ...]
torch::Tensor time_major(const torch::Tensor& t) { return t.transpose(0, 1); }

PosteriorSequence observe(WorldModel& model, const torch::Tensor& embeds_tm,
                          const torch::Tensor& actions_tm, OptGenerator gen) {
  auto init = model->rssm->initial_state(embeds_tm.size(1));
  return stack_sequence(model->rssm->rollout_posterior(init, actions_tm, embeds_tm, gen));
}

void finish_total(LossBreakdown& out) {
  torch::Tensor total;
  for (const auto& name : out.active_terms()) {
    total = total.defined() ? total + out.term(name) : out.term(name);
  }
  out.total = total;
}

}  // namespace

ModelOutput minco_objective(WorldModel& model, const env::TrajectoryBatch& batch, double t,
                            const ObjectiveOptions& options, std::mt19937_64& rng,
                            OptGenerator gen) {
  const auto B = batch.batch_size();
  const auto L = batch.length();
  if (L < 2) throw std::invalid_argument("minco_objective: sequences need length >= 2");

  auto pair = random_shift_pair(batch.observations, rng, options.shift_pad);
  // One encoder pass over both views.
  auto embeds = model->encoder(torch::cat({pair.view1, pair.view2}, 0));
  auto x1 = time_major(embeds.narrow(0, 0, B));
  auto x2 = time_major(embeds.narrow(0, B, B));
  const auto dtype = x1.scalar_type();
  auto actions = time_major(batch.actions).to(dtype);
  auto rewards = time_major(batch.rewards).to(dtype);

  ModelOutput out;
  out.posterior = observe(model, x1, actions, gen);

  auto& losses = out.losses;
  losses.beta = options.beta(t);
  if (options.use_simsiam) losses.simsiam = simsiam_objective(x1, x2, model->predictor);
  losses.reward = model->reward_objective(out.posterior.features(), rewards);
  auto kl = balanced_kl(out.posterior.posterior, out.posterior.prior, options.kl_ratio).mean();
  losses.tvd = -losses.beta * kl;
  losses.kl_value = kl.item<double>();
  if (options.use_inverse) {
    losses.c_inv = inverse_dynamics_objective(x1, x2, actions.narrow(0, 1, L - 1), model->inverse);
  }
  finish_total(losses);
  return out;
}

ModelOutput dreamer_objective(WorldModel& model, const env::TrajectoryBatch& batch,
                              const ObjectiveOptions& options, OptGenerator gen) {
  auto x = time_major(model->encoder(batch.observations));
  const auto dtype = x.scalar_type();
  auto actions = time_major(batch.actions).to(dtype);
  auto rewards = time_major(batch.rewards).to(dtype);

  ModelOutput out;
  out.posterior = observe(model, x, actions, gen);
  auto features = out.posterior.features();

  auto& losses = out.losses;
  losses.beta = options.dreamer_beta;
  auto target = normalize_pixels(time_major(batch.observations), dtype);
  losses.recon = image_log_likelihood(model->decoder(features), target);
  losses.reward = model->reward_objective(features, rewards);
  auto kl = balanced_kl(out.posterior.posterior, out.posterior.prior, options.kl_ratio).mean();
  losses.kl = -losses.beta * kl;
  losses.kl_value = kl.item<double>();
  finish_total(losses);
  return out;
}

ModelOutput model_objective(WorldModel& model, const env::TrajectoryBatch& batch, double t,
                            const ObjectiveOptions& options, std::mt19937_64& rng,
                            OptGenerator gen) {
  return options.variant == ObjectiveVariant::kMinco
             ? minco_objective(model, batch, t, options, rng, gen)
             : dreamer_objective(model, batch, options, gen);
}

std::string representation_term_name(ObjectiveVariant variant) {
  return variant == ObjectiveVariant::kMinco ? "simsiam" : "recon";
}

std::string dynamics_term_name(ObjectiveVariant variant) {
  return variant == ObjectiveVariant::kMinco ? "tvd" : "kl";
}

}  // namespace minco
