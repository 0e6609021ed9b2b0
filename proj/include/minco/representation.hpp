#pragma once

// Pixel encoder, paired random-shift augmentation, the symmetrized
// negative-free similarity objective, and the cross inverse-dynamics head.

#include <torch/torch.h>

#include <random>
#include <vector>

namespace minco {

struct EncoderOptions {
  std::int64_t image_size = 64;
  std::int64_t channels = 3;
  std::int64_t depth = 32;   // channels of the first conv; doubles per layer
  std::int64_t layers = 4;
  std::int64_t kernel = 4;
  std::int64_t stride = 2;
};

/// uint8 pixels in [0, 255] -> reals in [-0.5, 0.5].
torch::Tensor normalize_pixels(const torch::Tensor& pixels, torch::ScalarType dtype = torch::kFloat);
/// Inverse of normalize_pixels with clamping to the valid byte range.
torch::Tensor denormalize_pixels(const torch::Tensor& values);

class ConvEncoderImpl : public torch::nn::Module {
public:
  explicit ConvEncoderImpl(const EncoderOptions& options);

  /// obs: [..., H, W, C], uint8 or already-normalized floats. Returns [..., embed_dim].
  torch::Tensor forward(const torch::Tensor& obs);

  std::int64_t embed_dim() const { return embed_dim_; }
  /// Spatial size after each conv, starting with the input size.
  const std::vector<std::int64_t>& spatial_sizes() const { return spatial_; }
  const EncoderOptions& options() const { return options_; }

private:
  EncoderOptions options_;
  torch::nn::ModuleList convs_;
  std::vector<std::int64_t> spatial_;
  std::int64_t embed_dim_ = 0;
};
TORCH_MODULE(ConvEncoder);

/// Transposed-convolution mirror of the encoder: features -> [..., H, W, C] in [-0.5, 0.5] scale.
class ConvDecoderImpl : public torch::nn::Module {
public:
  ConvDecoderImpl(std::int64_t feature_dim, const EncoderOptions& options);

  torch::Tensor forward(const torch::Tensor& features);

private:
  EncoderOptions options_;
  std::vector<std::int64_t> spatial_;
  std::int64_t top_channels_ = 0;
  torch::nn::Linear project_{nullptr};
  torch::nn::ModuleList deconvs_;
};
TORCH_MODULE(ConvDecoder);

/// Pixel displacement applied to every frame of one sequence view.
struct Shift {
  int dx = 0;
  int dy = 0;
  bool operator==(const Shift&) const = default;
};

struct AugmentedViewPair {
  torch::Tensor view1;  // same shape as the input
  torch::Tensor view2;
  std::vector<Shift> shift1;  // one per sequence
  std::vector<Shift> shift2;
};

/// Shifts [T, H, W, C] frames by `shift`, replicating edge pixels; |dx|, |dy| <= pad.
torch::Tensor apply_shift(const torch::Tensor& sequence, Shift shift);

/// Two independently shifted views of [T, H, W, C] or [B, T, H, W, C] input.
/// Displacements are uniform over {-pad..pad}^2 per view and per sequence,
/// which equals replicate-padding by `pad` and cropping at a uniform offset.
AugmentedViewPair random_shift_pair(const torch::Tensor& obs, std::mt19937_64& rng, int pad = 4);

/// p . x / (|p| |x|) over the last dim. Throws on a zero-norm row.
torch::Tensor cosine_similarity(const torch::Tensor& p, const torch::Tensor& x);

class PredictorImpl : public torch::nn::Module {
public:
  PredictorImpl(std::int64_t embed_dim, std::int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x);

private:
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
};
TORCH_MODULE(Predictor);

/// mean D(f(online), sg(target)).
torch::Tensor simsiam_term(const torch::Tensor& online, const torch::Tensor& target,
                           Predictor& predictor);

/// Symmetrized similarity 0.5 D(f(x1), sg(x2)) + 0.5 D(f(x2), sg(x1)), averaged
/// over every leading dim. Maximized during training.
torch::Tensor simsiam_objective(const torch::Tensor& view_embeds1,
                                const torch::Tensor& view_embeds2, Predictor& predictor);

class InverseDynamicsImpl : public torch::nn::Module {
public:
  InverseDynamicsImpl(std::int64_t embed_dim, std::int64_t hidden, std::int64_t action_dim);
  torch::Tensor forward(const torch::Tensor& embed_a, const torch::Tensor& embed_b_next);

  std::int64_t embed_dim() const { return embed_dim_; }

private:
  std::int64_t embed_dim_;
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr}, fc3_{nullptr};
};
TORCH_MODULE(InverseDynamics);

/// Action predicted from one view at t and the other view at t+1.
torch::Tensor predict_action_cross(InverseDynamics& head, const torch::Tensor& embed_a,
                                   const torch::Tensor& embed_b_next);

/// x1, x2: [T, ..., E] time-major embeddings of the two views; actions:
/// [T-1, ..., A] where actions[t] is the action taken between t and t+1.
/// Returns -0.5 (E|a1 - a|^2 + E|a2 - a|^2); zero is the maximum.
torch::Tensor inverse_dynamics_objective(const torch::Tensor& x1, const torch::Tensor& x2,
                                         const torch::Tensor& actions, InverseDynamics& head);

}  // namespace minco
