#pragma once

// Gradient-conflict meter and the stop-gradient probe decoder.

#include "minco/objectives.hpp"
#include "minco/replay.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace minco {

struct ConflictRecord {
  std::int64_t step = 0;
  double inner_product = 0.0;  // normalized, in [-1, 1]
};

/// <g1, g2> / (|g1| |g2|) over the concatenation of per-parameter gradients.
/// Undefined entries count as zero. Returns nullopt when either norm is zero.
std::optional<double> normalized_inner_product(const std::vector<torch::Tensor>& g1,
                                               const std::vector<torch::Tensor>& g2);

/// Gradients of the representation term and of the dynamics term with respect
/// to the encoder parameters, compared by normalized inner product. Parameters
/// and their .grad fields are left untouched. nullopt marks an undefined sample.
std::optional<ConflictRecord> gradient_conflict_sample(WorldModel& model,
                                                       const env::TrajectoryBatch& batch,
                                                       const ObjectiveOptions& options, double t,
                                                       std::int64_t step, std::mt19937_64& rng,
                                                       OptGenerator gen = std::nullopt);

/// Fraction of records with a strictly positive inner product.
double conflict_ratio(const std::vector<ConflictRecord>& records);

/// FNV-1a over the raw bytes of every parameter and buffer.
std::uint64_t parameter_hash(const torch::nn::Module& module);

struct ProbeOptions {
  int steps = 1000;
  int batch = 16;
  int length = 16;
  double lr = 3e-4;
};

struct ProbeResult {
  ConvDecoder decoder{nullptr};
  std::vector<double> losses;  // per step, mean squared error per pixel
};

/// Posterior features of unaugmented frames, computed without gradients.
torch::Tensor probe_features(WorldModel& model, const env::TrajectoryBatch& batch,
                             OptGenerator gen = std::nullopt);

/// Trains a fresh decoder on detached latent features. The world model is not modified.
ProbeResult train_probe_decoder(WorldModel& model, const env::ReplayBuffer& dataset,
                                const ProbeOptions& options, std::mt19937_64& rng,
                                OptGenerator gen = std::nullopt);

/// [..., F] features -> [..., H, W, C] uint8 images.
torch::Tensor probe_decode(ConvDecoder& decoder, const torch::Tensor& features);

}  // namespace minco
