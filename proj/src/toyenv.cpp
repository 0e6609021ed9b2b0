#include "minco/toyenv.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace minco::env {

namespace {

constexpr std::array<std::uint8_t, 3> kAgentColor{230, 40, 40};
constexpr std::array<std::uint8_t, 3> kGoalColor{40, 220, 60};
constexpr std::uint8_t kCleanGray = 128;

double clip_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

RenderMode parse_render_mode(const std::string& name) {
  if (name == "distracted") return RenderMode::kDistracted;
  if (name == "clean") return RenderMode::kClean;
  throw std::invalid_argument("unknown render mode '" + name + "' (expected clean|distracted)");
}

std::string to_string(RenderMode mode) {
  return mode == RenderMode::kDistracted ? "distracted" : "clean";
}

double reach_reward(const Vec2& agent, const Vec2& goal) {
  const double dx = agent[0] - goal[0];
  const double dy = agent[1] - goal[1];
  return std::exp(-4.0 * (dx * dx + dy * dy));
}

DistractedPointMass::DistractedPointMass(EnvConfig config) : config_(config) {
  if (config_.image_size < 8) throw std::invalid_argument("image_size must be >= 8");
  if (config_.episode_length < 1) throw std::invalid_argument("episode_length must be >= 1");
  if (config_.action_repeat < 1) throw std::invalid_argument("action_repeat must be >= 1");
}

int DistractedPointMass::sprite_half() const { return std::max(1, config_.image_size / 16); }

std::array<int, 2> DistractedPointMass::to_pixel(const Vec2& pos) const {
  const double scale = 0.5 * (config_.image_size - 1);
  return {static_cast<int>(std::lround((pos[0] + 1.0) * scale)),
          static_cast<int>(std::lround((pos[1] + 1.0) * scale))};
}

torch::Tensor DistractedPointMass::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  state_ = EnvState{};
  state_.agent_pos = {unit(rng), unit(rng)};
  do {
    state_.goal_pos = {unit(rng), unit(rng)};
  } while (std::hypot(state_.goal_pos[0] - state_.agent_pos[0],
                      state_.goal_pos[1] - state_.agent_pos[1]) < config_.min_goal_distance);

  // The distractor gets its own stream so its evolution never depends on actions.
  std::mt19937_64 distractor_rng(rng());
  const double size = config_.image_size;
  const double two_pi = 2.0 * std::numbers::pi;
  for (auto& w : state_.distractor.waves) {
    const double angle = two_pi * u01(distractor_rng);
    const double cycles = 1.5 + 2.5 * u01(distractor_rng);
    const double k = two_pi * cycles / size;
    w.kx = k * std::cos(angle);
    w.ky = k * std::sin(angle);
    w.omega = (0.3 + 0.5 * u01(distractor_rng)) * (u01(distractor_rng) < 0.5 ? -1.0 : 1.0);
    w.phase = two_pi * u01(distractor_rng);
    for (auto& a : w.amplitude) a = 30.0 + 30.0 * u01(distractor_rng);
  }
  const double scale = size / 64.0;
  for (auto& b : state_.distractor.blobs) {
    b.pos = {size * u01(distractor_rng), size * u01(distractor_rng)};
    const double speed = (0.8 + 1.2 * u01(distractor_rng)) * scale;
    const double heading = two_pi * u01(distractor_rng);
    b.vel = {speed * std::cos(heading), speed * std::sin(heading)};
    b.radius = (3.0 + 3.0 * u01(distractor_rng)) * scale;
    for (auto& c : b.color) c = static_cast<std::uint8_t>(255.0 * u01(distractor_rng));
  }
  clipped_actions_ = 0;
  return render();
}

void DistractedPointMass::advance_distractor() {
  auto& d = state_.distractor;
  ++d.tick;
  const double size = config_.image_size;
  for (auto& b : d.blobs) {
    for (int i = 0; i < 2; ++i) {
      b.pos[i] += b.vel[i];
      if (b.pos[i] < 0.0) {
        b.pos[i] = -b.pos[i];
        b.vel[i] = -b.vel[i];
      } else if (b.pos[i] > size) {
        b.pos[i] = 2.0 * size - b.pos[i];
        b.vel[i] = -b.vel[i];
      }
    }
  }
}

StepResult DistractedPointMass::step(const torch::Tensor& action) {
  auto a = action.to(torch::kDouble).contiguous().view({-1});
  if (a.numel() != action_dim()) throw std::invalid_argument("step: action must have 2 components");
  return step(Vec2{a[0].item<double>(), a[1].item<double>()});
}

StepResult DistractedPointMass::step(const Vec2& action) {
  if (state_.step_index >= config_.episode_length) {
    throw std::logic_error("step called on a finished episode; call reset first");
  }
  Vec2 a = action;
  for (double& v : a) {
    if (!(v >= -1.0 && v <= 1.0)) {
      ++clipped_actions_;
      v = std::isnan(v) ? 0.0 : clip_unit(v);
    }
  }
  double reward = 0.0;
  for (int r = 0; r < config_.action_repeat; ++r) {
    for (int i = 0; i < 2; ++i) {
      state_.agent_vel[i] = 0.8 * state_.agent_vel[i] + 0.2 * a[i] * config_.max_speed;
      state_.agent_pos[i] = clip_unit(state_.agent_pos[i] + config_.dt * state_.agent_vel[i]);
    }
    reward += reach_reward(state_.agent_pos, state_.goal_pos);
    advance_distractor();
  }
  ++state_.step_index;
  return {render(), reward, state_.step_index >= config_.episode_length};
}

torch::Tensor DistractedPointMass::render(RenderMode mode) const {
  const int n = config_.image_size;
  auto frame = torch::empty({n, n, 3}, torch::kUInt8);
  auto* px = frame.data_ptr<std::uint8_t>();

  if (mode == RenderMode::kClean) {
    std::fill(px, px + n * n * 3, kCleanGray);
  } else {
    const auto& d = state_.distractor;
    const double tick = static_cast<double>(d.tick);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        std::array<double, 3> c{128.0, 128.0, 128.0};
        for (const auto& w : d.waves) {
          const double s = std::sin(w.kx * x + w.ky * y + w.omega * tick + w.phase);
          for (int ch = 0; ch < 3; ++ch) c[ch] += w.amplitude[ch] * s;
        }
        for (const auto& b : d.blobs) {
          const double dx = x + 0.5 - b.pos[0];
          const double dy = y + 0.5 - b.pos[1];
          if (dx * dx + dy * dy <= b.radius * b.radius)
            for (int ch = 0; ch < 3; ++ch) c[ch] = b.color[ch];
        }
        auto* p = px + (y * n + x) * 3;
        for (int ch = 0; ch < 3; ++ch)
          p[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(c[ch]), 0L, 255L));
      }
    }
  }

  const int half = sprite_half();
  const auto put = [&](int x, int y, const std::array<std::uint8_t, 3>& color) {
    if (x < 0 || y < 0 || x >= n || y >= n) return;
    auto* p = px + (y * n + x) * 3;
    for (int ch = 0; ch < 3; ++ch) p[ch] = color[ch];
  };
  // Goal: a plus sign with arm length `half`.
  const auto [gx, gy] = to_pixel(state_.goal_pos);
  for (int k = -half; k <= half; ++k) {
    put(gx + k, gy, kGoalColor);
    put(gx, gy + k, kGoalColor);
  }
  // Agent: a (2*half) x (2*half) square.
  const auto [ax, ay] = to_pixel(state_.agent_pos);
  for (int y = ay - half; y < ay + half; ++y)
    for (int x = ax - half; x < ax + half; ++x) put(x, y, kAgentColor);
  return frame;
}

torch::Tensor DistractedPointMass::agent_mask() const {
  const int n = config_.image_size;
  auto mask = torch::zeros({n, n}, torch::kBool);
  auto acc = mask.accessor<bool, 2>();
  const int half = sprite_half();
  const auto [ax, ay] = to_pixel(state_.agent_pos);
  for (int y = std::max(0, ay - half); y < std::min(n, ay + half); ++y)
    for (int x = std::max(0, ax - half); x < std::min(n, ax + half); ++x) acc[y][x] = true;
  return mask;
}

torch::Tensor DistractedPointMass::background_mask() const {
  const int n = config_.image_size;
  auto mask = torch::ones({n, n}, torch::kBool);
  auto acc = mask.accessor<bool, 2>();
  const int half = sprite_half();
  const auto [gx, gy] = to_pixel(state_.goal_pos);
  for (int k = -half; k <= half; ++k) {
    if (gx + k >= 0 && gx + k < n && gy >= 0 && gy < n) acc[gy][gx + k] = false;
    if (gy + k >= 0 && gy + k < n && gx >= 0 && gx < n) acc[gy + k][gx] = false;
  }
  return mask & agent_mask().logical_not();
}

}  // namespace minco::env
