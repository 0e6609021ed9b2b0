#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace minco {

struct EnvSection {
  std::string mode = "distracted";
  int episode_length = 250;
  int action_repeat = 2;
  int image_size = 64;
  double max_speed = 1.0;
};

struct ModelSection {
  int deter = 200;
  int stoch = 30;
  int hidden = 200;
  int cnn_depth = 32;
  int cnn_layers = 4;
  int predictor_hidden = 1024;
  int inverse_hidden = 512;
  double min_std = 0.1;
};

struct ScheduleSection {
  double a = 8e-5;
  double b = 5.0;
  double c = 0.15;
  std::string t_unit = "env_steps";  // env_steps | train_steps
};

struct ObjectiveSection {
  std::string variant = "minco";  // minco | dreamer
  bool simsiam = true;
  bool inverse = true;
  bool tvd = true;
  double dreamer_beta = 1.0;     // constant KL weight of the reconstruction variant
  double constant_beta = -1.0;   // KL weight when tvd is off; < 0 means schedule.c
  int shift_pad = 4;
};

struct OptimSection {
  double model_lr = 3e-4;
  double policy_lr = 8e-5;
  double value_lr = 8e-5;
  double grad_clip = 100.0;
  double adam_eps = 1e-5;
};

struct BatchSection {
  int size = 50;
  int length = 50;
};

struct PolicySection {
  int horizon = 15;
  double gamma = 0.99;
  double lambda = 0.95;
  double init_std = 5.0;
  double min_std = 1e-4;
};

struct LoopSection {
  std::int64_t total_env_steps = 1000000;
  std::int64_t prefill = 5000;
  std::int64_t train_every = 1000;
  int train_steps = 100;
  std::int64_t eval_every = 10000;
  int eval_episodes = 10;
  std::int64_t checkpoint_every = 100000;
  std::int64_t replay_capacity = 1000000;
  bool save_replay = true;  // persist the episode store next to checkpoints (needed for resume)
};

struct DiagnosticsSection {
  bool conflict = false;
  int conflict_every = 100;
  int conflict_warmup = 1000;  // train steps before records are kept
};

struct Config {
  EnvSection env;
  ModelSection model;
  ScheduleSection schedule;
  ObjectiveSection objective;
  double kl_ratio = 4.0;
  OptimSection optim;
  BatchSection batch;
  PolicySection policy;
  LoopSection loop;
  DiagnosticsSection diagnostics;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const Config& c);
void from_json(const nlohmann::json& j, Config& c);

/// Raised for unknown keys, type mismatches and invalid values.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Defaults, then the JSON file (if `path` is non-empty), then `key=value`
/// overrides with dotted keys. Unknown keys are rejected with a suggestion.
Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
/// Same precedence, starting from an in-memory document instead of a file.
Config resolve_config(const nlohmann::json& document, const std::vector<std::string>& overrides = {});

void validate(const Config& config);

/// (a, b, c) rows for the benchmark tasks, keyed by lower_snake_case task name.
struct SchedulePreset {
  std::string task;
  double a, b, c;
};
const std::vector<SchedulePreset>& schedule_presets();

}  // namespace minco
