#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <vector>

namespace minco::env {

/// A complete episode. Index 0 holds the reset frame with a zero action and
/// zero reward; entry t > 0 holds the action taken before frame t and the
/// reward received on arrival.
struct Episode {
  torch::Tensor observations;  // [T, H, W, C] uint8
  torch::Tensor actions;       // [T, A] float32
  torch::Tensor rewards;       // [T] float32
  torch::Tensor continues;     // [T] float32

  std::int64_t length() const { return observations.defined() ? observations.size(0) : 0; }
  double total_reward() const;
};

/// Accumulates one episode frame by frame.
class EpisodeBuilder {
public:
  void start(const torch::Tensor& first_observation, std::int64_t action_dim);
  void append(const torch::Tensor& observation, const torch::Tensor& action, double reward,
              bool terminal);
  Episode finish();
  bool empty() const { return observations_.empty(); }

private:
  std::vector<torch::Tensor> observations_;
  std::vector<torch::Tensor> actions_;
  std::vector<float> rewards_;
  std::vector<float> continues_;
};

/// Stacked contiguous segments, [B, L, ...].
struct TrajectoryBatch {
  torch::Tensor observations;  // [B, L, H, W, C] uint8
  torch::Tensor actions;       // [B, L, A]
  torch::Tensor rewards;       // [B, L]
  torch::Tensor continues;     // [B, L]
  std::vector<std::int64_t> episode_ids;
  std::vector<std::int64_t> offsets;

  std::int64_t batch_size() const { return observations.size(0); }
  std::int64_t length() const { return observations.size(1); }
};

/// Raised when the buffer cannot yet serve a request; retry after adding data.
class NotReadyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// FIFO store of whole episodes bounded by a total step count.
class ReplayBuffer {
public:
  explicit ReplayBuffer(std::int64_t capacity_steps);

  void add(Episode episode);

  /// B segments of length L; each picks an episode uniformly, then a uniform
  /// offset inside it, so segments never span two episodes.
  TrajectoryBatch sample(std::mt19937_64& rng, std::int64_t batch, std::int64_t length) const;

  bool can_sample(std::int64_t length) const;
  std::int64_t total_steps() const { return total_steps_; }
  std::size_t num_episodes() const { return episodes_.size(); }
  /// Monotone id of the oldest retained episode.
  std::int64_t first_episode_id() const { return first_id_; }
  const std::deque<Episode>& episodes() const { return episodes_; }

  /// Persists every retained episode as `episode_<id>.bin` plus `index.json`.
  void save(const std::filesystem::path& dir) const;
  static ReplayBuffer load(const std::filesystem::path& dir, std::int64_t capacity_steps);

private:
  std::int64_t capacity_;
  std::int64_t total_steps_ = 0;
  std::int64_t first_id_ = 0;
  std::deque<Episode> episodes_;
};

}  // namespace minco::env
