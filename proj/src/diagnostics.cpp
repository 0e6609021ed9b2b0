#include "minco/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace minco {

std::optional<double> normalized_inner_product(const std::vector<torch::Tensor>& g1,
                                               const std::vector<torch::Tensor>& g2) {
  if (g1.size() != g2.size()) throw std::invalid_argument("gradient lists differ in length");
  double dot = 0.0, n1 = 0.0, n2 = 0.0;
  for (std::size_t i = 0; i < g1.size(); ++i) {
    const bool d1 = g1[i].defined();
    const bool d2 = g2[i].defined();
    if (d1) n1 += g1[i].to(torch::kDouble).pow(2).sum().item<double>();
    if (d2) n2 += g2[i].to(torch::kDouble).pow(2).sum().item<double>();
    if (d1 && d2) dot += (g1[i].to(torch::kDouble) * g2[i].to(torch::kDouble)).sum().item<double>();
  }
  if (n1 == 0.0 || n2 == 0.0) return std::nullopt;
  return std::clamp(dot / (std::sqrt(n1) * std::sqrt(n2)), -1.0, 1.0);
}

std::optional<ConflictRecord> gradient_conflict_sample(WorldModel& model,
                                                       const env::TrajectoryBatch& batch,
                                                       const ObjectiveOptions& options, double t,
                                                       std::int64_t step, std::mt19937_64& rng,
                                                       OptGenerator gen) {
  auto out = model_objective(model, batch, t, options, rng, gen);
  const auto& rep = out.losses.term(representation_term_name(options.variant));
  const auto& dyn = out.losses.term(dynamics_term_name(options.variant));
  if (!rep.defined() || !dyn.defined()) return std::nullopt;
  auto params = model->encoder_parameters();
  auto g_rep = torch::autograd::grad({rep}, params, {}, /*retain_graph=*/true,
                                     /*create_graph=*/false, /*allow_unused=*/true);
  auto g_dyn = torch::autograd::grad({dyn}, params, {}, /*retain_graph=*/false,
                                     /*create_graph=*/false, /*allow_unused=*/true);
  auto ip = normalized_inner_product(g_rep, g_dyn);
  if (!ip) return std::nullopt;
  return ConflictRecord{step, *ip};
}

double conflict_ratio(const std::vector<ConflictRecord>& records) {
  if (records.empty()) throw std::invalid_argument("conflict_ratio: no records");
  std::size_t positive = 0;
  for (const auto& r : records)
    if (r.inner_product > 0.0) ++positive;
  return static_cast<double>(positive) / static_cast<double>(records.size());
}

std::uint64_t parameter_hash(const torch::nn::Module& module) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto mix = [&h](const torch::Tensor& t) {
    auto c = t.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    for (std::size_t i = 0; i < c.nbytes(); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : module.parameters()) mix(p);
  for (const auto& b : module.buffers()) mix(b);
  return h;
}

torch::Tensor probe_features(WorldModel& model, const env::TrajectoryBatch& batch, OptGenerator gen) {
  torch::NoGradGuard no_grad;
  auto embeds = model->encoder(batch.observations).transpose(0, 1);
  auto actions = batch.actions.transpose(0, 1).to(embeds.scalar_type());
  auto init = model->rssm->initial_state(embeds.size(1));
  return stack_sequence(model->rssm->rollout_posterior(init, actions, embeds, gen)).features();
}

ProbeResult train_probe_decoder(WorldModel& model, const env::ReplayBuffer& dataset,
                                const ProbeOptions& options, std::mt19937_64& rng,
                                OptGenerator gen) {
  ProbeResult result;
  result.decoder = ConvDecoder(model->rssm->feature_dim(), model->options().encoder);
  result.decoder->to(model->encoder->parameters().front().scalar_type());
  torch::optim::Adam optim(result.decoder->parameters(), torch::optim::AdamOptions(options.lr));
  result.losses.reserve(options.steps);
  for (int step = 0; step < options.steps; ++step) {
    auto batch = dataset.sample(rng, options.batch, options.length);
    auto features = probe_features(model, batch, gen);
    auto target = normalize_pixels(batch.observations.transpose(0, 1), features.scalar_type());
    auto loss = (result.decoder(features) - target).pow(2).mean();
    optim.zero_grad();
    loss.backward();
    optim.step();
    result.losses.push_back(loss.item<double>());
  }
  return result;
}

torch::Tensor probe_decode(ConvDecoder& decoder, const torch::Tensor& features) {
  torch::NoGradGuard no_grad;
  return denormalize_pixels(decoder(features));
}

}  // namespace minco
