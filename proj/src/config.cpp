#include "minco/config.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>

namespace minco {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EnvSection, mode, episode_length, action_repeat, image_size, max_speed)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ModelSection, deter, stoch, hidden, cnn_depth, cnn_layers,
                                   predictor_hidden, inverse_hidden, min_std)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ScheduleSection, a, b, c, t_unit)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ObjectiveSection, variant, simsiam, inverse, tvd, dreamer_beta,
                                   constant_beta, shift_pad)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OptimSection, model_lr, policy_lr, value_lr, grad_clip, adam_eps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BatchSection, size, length)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PolicySection, horizon, gamma, lambda, init_std, min_std)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LoopSection, total_env_steps, prefill, train_every, train_steps,
                                   eval_every, eval_episodes, checkpoint_every, replay_capacity,
                                   save_replay)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DiagnosticsSection, conflict, conflict_every, conflict_warmup)

void to_json(nlohmann::json& j, const Config& c) {
  j = {{"env", c.env},         {"model", c.model},   {"schedule", c.schedule},
       {"objective", c.objective}, {"kl_ratio", c.kl_ratio}, {"optim", c.optim},
       {"batch", c.batch},     {"policy", c.policy}, {"loop", c.loop},
       {"diagnostics", c.diagnostics}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, Config& c) {
  j.at("env").get_to(c.env);
  j.at("model").get_to(c.model);
  j.at("schedule").get_to(c.schedule);
  j.at("objective").get_to(c.objective);
  j.at("kl_ratio").get_to(c.kl_ratio);
  j.at("optim").get_to(c.optim);
  j.at("batch").get_to(c.batch);
  j.at("policy").get_to(c.policy);
  j.at("loop").get_to(c.loop);
  j.at("diagnostics").get_to(c.diagnostics);
  j.at("seed").get_to(c.seed);
}

namespace {

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string closest_key(const std::string& key, const nlohmann::json& flat_defaults) {
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& [k, _] : flat_defaults.items()) {
    const auto d = edit_distance(key, k);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

// JSON pointer "/schedule/a" <-> dotted "schedule.a".
std::string to_dotted(const std::string& pointer) {
  std::string s = pointer.substr(1);
  std::replace(s.begin(), s.end(), '/', '.');
  return s;
}

std::string to_pointer(const std::string& dotted) {
  std::string s = "/" + dotted;
  std::replace(s.begin(), s.end(), '.', '/');
  return s;
}

nlohmann::json flatten_dotted(const nlohmann::json& j) {
  nlohmann::json out = nlohmann::json::object();
  const auto flat = j.flatten();
  for (const auto& [k, v] : flat.items()) out[to_dotted(k)] = v;
  return out;
}

void apply_value(nlohmann::json& flat, const nlohmann::json& flat_defaults, const std::string& key,
                 nlohmann::json value) {
  if (!flat_defaults.contains(key)) {
    throw ConfigError("unknown config key '" + key + "' (did you mean '" +
                      closest_key(key, flat_defaults) + "'?)");
  }
  const auto& expected = flat_defaults.at(key);
  const bool ok = [&] {
    if (expected.is_boolean()) return value.is_boolean();
    if (expected.is_string()) return value.is_string();
    if (expected.is_number_unsigned()) return value.is_number_unsigned();
    if (expected.is_number_integer()) return value.is_number_integer();
    if (expected.is_number_float()) return value.is_number();
    return false;
  }();
  if (!ok) {
    throw ConfigError("type mismatch for config key '" + key + "': expected " +
                      std::string(expected.type_name()) + ", got " + value.dump());
  }
  if (expected.is_number_float()) value = value.get<double>();
  flat[key] = std::move(value);
}

bool is_section(const nlohmann::json& flat_defaults, const std::string& key) {
  const auto prefix = key + ".";
  for (const auto& [k, _] : flat_defaults.items())
    if (k.rfind(prefix, 0) == 0) return true;
  return false;
}

nlohmann::json parse_override_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;  // bare strings such as clean or dreamer
  }
}

}  // namespace

Config resolve_config(const nlohmann::json& document, const std::vector<std::string>& overrides) {
  const nlohmann::json defaults = Config{};
  const auto flat_defaults = flatten_dotted(defaults);
  auto flat = flat_defaults;

  if (!document.is_null()) {
    if (!document.is_object()) throw ConfigError("config document must be a JSON object");
    const auto flat_document = document.flatten();
    for (const auto& [k, v] : flat_document.items()) {
      // flatten() turns empty objects into null leaves; an empty section is a no-op.
      if (k.empty()) continue;
      const auto key = to_dotted(k);
      if (v.is_null() && is_section(flat_defaults, key)) continue;
      apply_value(flat, flat_defaults, key, v);
    }
  }
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "' must look like key=value");
    }
    apply_value(flat, flat_defaults, item.substr(0, eq), parse_override_value(item.substr(eq + 1)));
  }

  nlohmann::json nested = nlohmann::json::object();
  for (const auto& [k, v] : flat.items()) nested[nlohmann::json::json_pointer(to_pointer(k))] = v;
  Config config = nested.get<Config>();
  validate(config);
  return config;
}

Config load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  nlohmann::json document;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos) {
      try {
        document = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
      }
    }
  }
  return resolve_config(document, overrides);
}

void validate(const Config& c) {
  const auto require = [](bool cond, const std::string& what) {
    if (!cond) throw ConfigError("invalid config: " + what);
  };
  require(c.env.mode == "clean" || c.env.mode == "distracted", "env.mode must be clean|distracted");
  require(c.env.episode_length > 0, "env.episode_length must be > 0");
  require(c.env.action_repeat > 0, "env.action_repeat must be > 0");
  require(c.env.image_size >= 8, "env.image_size must be >= 8");
  require(c.env.max_speed > 0.0, "env.max_speed must be > 0");
  require(c.model.deter > 0 && c.model.stoch > 0 && c.model.hidden > 0, "model sizes must be > 0");
  require(c.model.cnn_depth > 0 && c.model.cnn_layers > 0, "model.cnn_* must be > 0");
  require(c.model.predictor_hidden > 0 && c.model.inverse_hidden > 0, "model head widths must be > 0");
  require(c.model.min_std > 0, "model.min_std must be > 0");
  require(c.schedule.a > 0 && c.schedule.b > 0 && c.schedule.c > 0, "schedule a, b, c must be > 0");
  require(c.schedule.t_unit == "env_steps" || c.schedule.t_unit == "train_steps",
          "schedule.t_unit must be env_steps|train_steps");
  require(c.objective.variant == "minco" || c.objective.variant == "dreamer",
          "objective.variant must be minco|dreamer");
  require(c.objective.dreamer_beta > 0, "objective.dreamer_beta must be > 0");
  require(c.objective.shift_pad >= 0, "objective.shift_pad must be >= 0");
  require(c.kl_ratio > 0, "kl_ratio must be > 0");
  require(c.optim.model_lr > 0 && c.optim.policy_lr > 0 && c.optim.value_lr > 0,
          "learning rates must be > 0");
  require(c.optim.grad_clip > 0 && c.optim.adam_eps > 0, "optim.grad_clip/adam_eps must be > 0");
  require(c.batch.size > 0, "batch.size must be > 0");
  require(c.batch.length >= 2, "batch.length must be >= 2");
  require(c.batch.length <= c.env.episode_length + 1, "batch.length exceeds stored episode length");
  require(c.policy.horizon > 0, "policy.horizon must be > 0");
  require(c.policy.gamma > 0 && c.policy.gamma < 1, "policy.gamma must be in (0, 1)");
  require(c.policy.lambda >= 0 && c.policy.lambda <= 1, "policy.lambda must be in [0, 1]");
  require(c.policy.min_std > 0, "policy.min_std must be > 0");
  require(c.loop.total_env_steps > 0, "loop.total_env_steps must be > 0");
  require(c.loop.prefill >= 0, "loop.prefill must be >= 0");
  require(c.loop.train_every > 0 && c.loop.train_steps > 0, "loop.train_* must be > 0");
  require(c.loop.eval_every > 0 && c.loop.eval_episodes >= 0, "loop.eval_* invalid");
  require(c.loop.checkpoint_every > 0, "loop.checkpoint_every must be > 0");
  require(c.loop.replay_capacity > 0, "loop.replay_capacity must be > 0");
  require(c.diagnostics.conflict_every > 0 && c.diagnostics.conflict_warmup >= 0,
          "diagnostics cadence invalid");
}

const std::vector<SchedulePreset>& schedule_presets() {
  static const std::vector<SchedulePreset> presets = {
      {"hopper_stand", 8e-5, 4.3, 0.015},   {"cheetah_run", 8e-5, 5.0, 0.007},
      {"cartpole_swingup", 8e-5, 4.0, 0.0025}, {"walker_stand", 8e-5, 5.0, 0.15},
      {"walker_walk", 8e-5, 5.0, 0.15},     {"walker_run", 8e-6, 5.0, 0.015},
      {"maniskill", 8e-6, 4.0, 0.0025},
  };
  return presets;
}

}  // namespace minco
