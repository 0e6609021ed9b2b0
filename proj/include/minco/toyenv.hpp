#pragma once

// A point-mass reaching task rendered over an animated, action-independent
// background. The controllable subject is a small sprite; everything else in
// the frame is distractor motion.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <random>

namespace minco::env {

enum class RenderMode { kDistracted, kClean };

RenderMode parse_render_mode(const std::string& name);
std::string to_string(RenderMode mode);

struct EnvConfig {
  RenderMode mode = RenderMode::kDistracted;
  int episode_length = 250;  // agent steps
  int action_repeat = 2;
  int image_size = 64;
  double max_speed = 1.0;
  double dt = 0.1;
  double min_goal_distance = 0.5;
};

using Vec2 = std::array<double, 2>;

/// One sinusoidal plane wave of the background pattern.
struct Wave {
  double kx, ky;     // spatial angular frequency (radians per pixel)
  double omega;      // temporal angular frequency (radians per inner step)
  double phase;
  std::array<double, 3> amplitude;
};

/// A disc drifting across the frame and bouncing off the borders.
struct Blob {
  Vec2 pos;  // pixels
  Vec2 vel;  // pixels per inner step
  double radius;
  std::array<std::uint8_t, 3> color;
};

struct DistractorState {
  std::array<Wave, 3> waves{};
  std::array<Blob, 4> blobs{};
  std::int64_t tick = 0;
};

struct EnvState {
  Vec2 agent_pos{0.0, 0.0};
  Vec2 agent_vel{0.0, 0.0};
  Vec2 goal_pos{0.0, 0.0};
  DistractorState distractor;
  int step_index = 0;
};

struct StepResult {
  torch::Tensor observation;  // [H, W, 3] uint8
  double reward = 0.0;
  bool done = false;
};

class DistractedPointMass {
public:
  explicit DistractedPointMass(EnvConfig config = {});

  /// Samples start state, goal, and a fresh distractor process from `rng`.
  torch::Tensor reset(std::mt19937_64& rng);

  /// Components outside [-1, 1] are clipped and counted.
  StepResult step(const Vec2& action);
  StepResult step(const torch::Tensor& action);

  torch::Tensor render(RenderMode mode) const;
  torch::Tensor render() const { return render(config_.mode); }

  /// Pixels covered by the agent sprite, [H, W] bool.
  torch::Tensor agent_mask() const;
  /// Pixels belonging to neither the agent sprite nor the goal marker, [H, W] bool.
  torch::Tensor background_mask() const;

  const EnvState& state() const { return state_; }
  const EnvConfig& config() const { return config_; }
  int clipped_action_count() const { return clipped_actions_; }
  static constexpr int action_dim() { return 2; }

private:
  void advance_distractor();
  int sprite_half() const;
  std::array<int, 2> to_pixel(const Vec2& pos) const;

  EnvConfig config_;
  EnvState state_;
  int clipped_actions_ = 0;
};

/// Per-inner-step reward for a given agent/goal pair.
double reach_reward(const Vec2& agent, const Vec2& goal);

}  // namespace minco::env
