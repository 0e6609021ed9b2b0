#include "minco/representation.hpp"

#include <stdexcept>

namespace minco {

namespace F = torch::nn::functional;

torch::Tensor normalize_pixels(const torch::Tensor& pixels, torch::ScalarType dtype) {
  return pixels.to(dtype) / 255.0 - 0.5;
}

torch::Tensor denormalize_pixels(const torch::Tensor& values) {
  return ((values + 0.5) * 255.0).round().clamp(0, 255).to(torch::kUInt8);
}

ConvEncoderImpl::ConvEncoderImpl(const EncoderOptions& options) : options_(options) {
  convs_ = register_module("convs", torch::nn::ModuleList());
  std::int64_t in_ch = options.channels;
  std::int64_t size = options.image_size;
  spatial_.push_back(size);
  for (std::int64_t i = 0; i < options.layers; ++i) {
    const std::int64_t out_ch = options.depth << i;
    convs_->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(in_ch, out_ch, options.kernel).stride(options.stride)));
    size = (size - options.kernel) / options.stride + 1;
    if (size < 1) {
      throw std::invalid_argument("encoder: image_size too small for " +
                                  std::to_string(options.layers) + " conv layers");
    }
    spatial_.push_back(size);
    in_ch = out_ch;
  }
  embed_dim_ = in_ch * size * size;
}

torch::Tensor ConvEncoderImpl::forward(const torch::Tensor& obs) {
  if (obs.dim() < 3 || obs.size(-3) != options_.image_size || obs.size(-2) != options_.image_size ||
      obs.size(-1) != options_.channels) {
    throw std::invalid_argument("encode: expected [..., " + std::to_string(options_.image_size) +
                                ", " + std::to_string(options_.image_size) + ", " +
                                std::to_string(options_.channels) + "] observations");
  }
  const auto dtype = convs_[0]->as<torch::nn::Conv2d>()->weight.scalar_type();
  auto x = obs.scalar_type() == torch::kUInt8 ? normalize_pixels(obs, dtype) : obs.to(dtype);
  auto lead = obs.sizes().slice(0, obs.dim() - 3).vec();
  x = x.reshape({-1, options_.image_size, options_.image_size, options_.channels})
          .permute({0, 3, 1, 2});
  for (auto& m : *convs_) x = F::elu(m->as<torch::nn::Conv2d>()->forward(x));
  lead.push_back(embed_dim_);
  return x.reshape(lead);
}

ConvDecoderImpl::ConvDecoderImpl(std::int64_t feature_dim, const EncoderOptions& options)
    : options_(options) {
  ConvEncoderImpl shape_probe(options);
  spatial_ = shape_probe.spatial_sizes();
  top_channels_ = options.depth << (options.layers - 1);
  const auto top = spatial_.back();
  project_ = register_module("project",
                             torch::nn::Linear(feature_dim, top_channels_ * top * top));
  deconvs_ = register_module("deconvs", torch::nn::ModuleList());
  for (std::int64_t i = options.layers - 1; i >= 0; --i) {
    const std::int64_t in_ch = options.depth << i;
    const std::int64_t out_ch = i == 0 ? options.channels : (options.depth << (i - 1));
    const std::int64_t in_size = spatial_[i + 1];
    const std::int64_t target = spatial_[i];
    const std::int64_t natural = (in_size - 1) * options.stride + options.kernel;
    deconvs_->push_back(torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in_ch, out_ch, options.kernel)
            .stride(options.stride)
            .output_padding(target - natural)));
  }
}

torch::Tensor ConvDecoderImpl::forward(const torch::Tensor& features) {
  auto lead = features.sizes().slice(0, features.dim() - 1).vec();
  const auto top = spatial_.back();
  auto x = project_(features.reshape({-1, features.size(-1)}))
               .reshape({-1, top_channels_, top, top});
  const auto n = deconvs_->size();
  for (std::size_t i = 0; i < n; ++i) {
    x = deconvs_[i]->as<torch::nn::ConvTranspose2d>()->forward(x);
    if (i + 1 < n) x = F::elu(x);
  }
  x = x.permute({0, 2, 3, 1});
  lead.insert(lead.end(), {options_.image_size, options_.image_size, options_.channels});
  return x.reshape(lead);
}

torch::Tensor apply_shift(const torch::Tensor& sequence, Shift shift) {
  const auto h = sequence.size(-3);
  const auto w = sequence.size(-2);
  auto idx_y = (torch::arange(h, torch::kLong) + shift.dy).clamp(0, h - 1);
  auto idx_x = (torch::arange(w, torch::kLong) + shift.dx).clamp(0, w - 1);
  return sequence.index_select(-3, idx_y).index_select(-2, idx_x);
}

AugmentedViewPair random_shift_pair(const torch::Tensor& obs, std::mt19937_64& rng, int pad) {
  if (pad < 0) throw std::invalid_argument("random_shift_pair: pad must be >= 0");
  const bool batched = obs.dim() == 5;
  if (!batched && obs.dim() != 4) {
    throw std::invalid_argument("random_shift_pair: expected [T,H,W,C] or [B,T,H,W,C]");
  }
  std::uniform_int_distribution<int> offset(-pad, pad);
  const std::int64_t n = batched ? obs.size(0) : 1;
  AugmentedViewPair pair;
  std::vector<torch::Tensor> v1, v2;
  for (std::int64_t b = 0; b < n; ++b) {
    auto seq = batched ? obs[b] : obs;
    Shift s1{offset(rng), offset(rng)};
    Shift s2{offset(rng), offset(rng)};
    v1.push_back(apply_shift(seq, s1));
    v2.push_back(apply_shift(seq, s2));
    pair.shift1.push_back(s1);
    pair.shift2.push_back(s2);
  }
  pair.view1 = batched ? torch::stack(v1) : v1.front();
  pair.view2 = batched ? torch::stack(v2) : v2.front();
  return pair;
}

torch::Tensor cosine_similarity(const torch::Tensor& p, const torch::Tensor& x) {
  if (p.sizes() != x.sizes()) throw std::invalid_argument("cosine_similarity: shape mismatch");
  auto pn = p.norm(2, -1);
  auto xn = x.norm(2, -1);
  if ((pn == 0).any().item<bool>() || (xn == 0).any().item<bool>()) {
    throw std::invalid_argument("cosine_similarity: zero-norm input");
  }
  return (p * x).sum(-1) / (pn * xn);
}

PredictorImpl::PredictorImpl(std::int64_t embed_dim, std::int64_t hidden) {
  fc1_ = register_module("fc1", torch::nn::Linear(embed_dim, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, embed_dim));
}

torch::Tensor PredictorImpl::forward(const torch::Tensor& x) { return fc2_(torch::relu(fc1_(x))); }

torch::Tensor simsiam_term(const torch::Tensor& online, const torch::Tensor& target,
                           Predictor& predictor) {
  return minco::cosine_similarity(predictor(online), target.detach()).mean();
}

torch::Tensor simsiam_objective(const torch::Tensor& view_embeds1,
                                const torch::Tensor& view_embeds2, Predictor& predictor) {
  if (view_embeds1.sizes() != view_embeds2.sizes()) {
    throw std::invalid_argument("simsiam_objective: view embeddings differ in shape");
  }
  return 0.5 * simsiam_term(view_embeds1, view_embeds2, predictor) +
         0.5 * simsiam_term(view_embeds2, view_embeds1, predictor);
}

InverseDynamicsImpl::InverseDynamicsImpl(std::int64_t embed_dim, std::int64_t hidden,
                                         std::int64_t action_dim)
    : embed_dim_(embed_dim) {
  fc1_ = register_module("fc1", torch::nn::Linear(2 * embed_dim, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, hidden));
  fc3_ = register_module("fc3", torch::nn::Linear(hidden, action_dim));
}

torch::Tensor InverseDynamicsImpl::forward(const torch::Tensor& embed_a,
                                           const torch::Tensor& embed_b_next) {
  if (embed_a.size(-1) != embed_dim_ || embed_b_next.sizes() != embed_a.sizes()) {
    throw std::invalid_argument("inverse dynamics: embeddings must both be [..., " +
                                std::to_string(embed_dim_) + "]");
  }
  auto x = torch::cat({embed_a, embed_b_next}, -1);
  return fc3_(F::elu(fc2_(F::elu(fc1_(x)))));
}

torch::Tensor predict_action_cross(InverseDynamics& head, const torch::Tensor& embed_a,
                                   const torch::Tensor& embed_b_next) {
  return head(embed_a, embed_b_next);
}

torch::Tensor inverse_dynamics_objective(const torch::Tensor& x1, const torch::Tensor& x2,
                                         const torch::Tensor& actions, InverseDynamics& head) {
  if (x1.sizes() != x2.sizes()) throw std::invalid_argument("inverse dynamics: view shape mismatch");
  const auto T = x1.size(0);
  if (T < 2) throw std::invalid_argument("inverse dynamics: need T >= 2");
  if (actions.size(0) != T - 1) {
    throw std::invalid_argument("inverse dynamics: need T-1 actions for T embeddings");
  }
  auto a1 = predict_action_cross(head, x1.narrow(0, 0, T - 1), x2.narrow(0, 1, T - 1));
  auto a2 = predict_action_cross(head, x2.narrow(0, 0, T - 1), x1.narrow(0, 1, T - 1));
  if (a1.sizes() != actions.sizes()) throw std::invalid_argument("inverse dynamics: action shape mismatch");
  auto err1 = (a1 - actions).pow(2).sum(-1).mean();
  auto err2 = (a2 - actions).pow(2).sum(-1).mean();
  return -0.5 * (err1 + err2);
}

}  // namespace minco
