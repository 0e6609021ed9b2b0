#pragma once

#include "minco/config.hpp"
#include "minco/replay.hpp"

#include <torch/torch.h>

#include <filesystem>
#include <random>
#include <string>

namespace minco::testutil {

/// Small enough to train in a couple of seconds on one core.
inline Config tiny_config() {
  Config c;
  c.env.episode_length = 40;
  c.env.image_size = 16;
  c.model.deter = 16;
  c.model.stoch = 4;
  c.model.hidden = 16;
  c.model.cnn_depth = 4;
  c.model.cnn_layers = 2;
  c.model.predictor_hidden = 16;
  c.model.inverse_hidden = 16;
  c.batch.size = 3;
  c.batch.length = 6;
  c.policy.horizon = 4;
  c.loop.total_env_steps = 400;
  c.loop.prefill = 160;
  c.loop.train_every = 80;
  c.loop.train_steps = 3;
  c.loop.eval_every = 200;
  c.loop.eval_episodes = 1;
  c.loop.checkpoint_every = 160;
  c.loop.replay_capacity = 100000;
  return c;
}

/// [B, L, H, W, 3] random frames with matching actions, rewards and continues.
inline env::TrajectoryBatch random_batch(std::int64_t B, std::int64_t L, std::int64_t image,
                                         std::uint64_t seed) {
  torch::manual_seed(seed);
  env::TrajectoryBatch b;
  b.observations = torch::randint(0, 256, {B, L, image, image, 3}, torch::kLong).to(torch::kUInt8);
  b.actions = torch::rand({B, L, 2}) * 2 - 1;
  b.rewards = torch::rand({B, L});
  b.continues = torch::ones({B, L});
  b.episode_ids.assign(B, 0);
  b.offsets.assign(B, 0);
  return b;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("minco_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
  std::filesystem::path path_;
};

}  // namespace minco::testutil
