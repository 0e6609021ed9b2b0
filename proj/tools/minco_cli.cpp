// Command-line entry point: train, eval, diagnose, verify-bounds.

#include "minco/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json bounds_json(const minco::info::BoundsReport& r) {
  const auto one = [](const minco::info::FuzzReport& f) {
    return json{{"name", f.name},
                {"instances", f.instances},
                {"violations", f.violations},
                {"max_violation", f.max_violation},
                {"max_equality_gap", f.max_equality_gap},
                {"passed", f.passed()}};
  };
  return {{"prop1", one(r.prop1)}, {"prop2", one(r.prop2)}, {"infonce", one(r.infonce)},
          {"passed", r.passed()}};
}

fs::path default_run_dir(const fs::path& config_path, const minco::Config& config) {
  const std::string stem = config_path.empty() ? "default" : config_path.stem().string();
  return minco::artifact_root() / (stem + "_" + config.objective.variant + "_seed" +
                                   std::to_string(config.seed));
}

std::vector<minco::env::RenderMode> modes_from(const std::string& mode) {
  if (mode.empty()) return {minco::env::RenderMode::kDistracted, minco::env::RenderMode::kClean};
  return {minco::env::parse_render_mode(mode)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MInCo world-model training and diagnostics"};
  app.require_subcommand(1);

  std::string config_path, run_dir, checkpoint, mode, out_dir;
  std::vector<std::string> overrides;
  bool resume = false, verbose = false;
  int episodes = 0, trials = 1000, batches = 1, probe_steps = 1000;
  std::uint64_t seed = 0;
  std::int64_t stop_after = 0;

  auto* train = app.add_subcommand("train", "Train an agent");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--set", overrides, "Override as dotted.key=value")->take_all();
  train->add_option("--run-dir", run_dir, "Run directory (default: under the artifact root)");
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in the run directory");
  train->add_flag("-v,--verbose", verbose, "Log episode returns to stderr");
  train->add_option("--stop-after", stop_after, "Stop at the first checkpoint past this env step");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes)->required();
  eval->add_option("--mode", mode)->check(CLI::IsMember({"clean", "distracted"}));
  eval->add_option("--seed", seed);

  auto* diagnose = app.add_subcommand("diagnose", "Diagnostics");
  diagnose->require_subcommand(1);
  auto* conflict = diagnose->add_subcommand("conflict", "Gradient conflict of both objective variants");
  conflict->add_option("--config", config_path)->required();
  conflict->add_option("--set", overrides)->take_all();
  conflict->add_option("--out", out_dir);
  auto* probe = diagnose->add_subcommand("probe", "Probe decoder on frozen latents");
  probe->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  probe->add_option("--batches", batches, "Held-out episodes to render");
  probe->add_option("--steps", probe_steps, "Probe decoder training steps");
  probe->add_option("--seed", seed);
  probe->add_option("--out", out_dir);
  auto* bounds = diagnose->add_subcommand("bounds", "Information-bound fuzz suites");
  bounds->add_option("--trials", trials);
  bounds->add_option("--seed", seed);

  auto* verify = app.add_subcommand("verify-bounds", "Information-bound fuzz suites");
  verify->add_option("--trials", trials)->required();
  verify->add_option("--seed", seed)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << std::endl;
    return 2;
  }

  try {
    minco::use_deterministic_threads();
    if (*train) {
      const auto config = minco::load_config(config_path, overrides);
      const fs::path dir = run_dir.empty() ? default_run_dir(config_path, config) : fs::path(run_dir);
      minco::TrainOptions opts;
      opts.resume = resume;
      opts.verbose = verbose;
      opts.stop_after = stop_after;
      const auto art = minco::train(config, dir, opts);
      std::cout << json{{"run_dir", art.run_dir.string()},
                        {"env_steps", art.env_steps},
                        {"train_steps", art.train_steps},
                        {"metrics", art.metrics.string()},
                        {"final_checkpoint", art.checkpoints.empty() ? "" : art.checkpoints.back().string()}}
                       .dump()
                << std::endl;
    } else if (*eval) {
      const auto summaries = minco::evaluate(checkpoint, episodes, modes_from(mode), seed);
      json out = json::object();
      for (const auto& s : summaries) {
        out[minco::env::to_string(s.mode)] = {{"mean", s.mean}, {"std", s.std}, {"returns", s.returns}};
      }
      std::cout << out.dump() << std::endl;
    } else if (*diagnose) {
      if (*conflict) {
        const auto config = minco::load_config(config_path, overrides);
        const fs::path dir = out_dir.empty() ? minco::artifact_root() / "conflict" : fs::path(out_dir);
        json out = json::array();
        for (const auto& r : minco::diagnose_conflict(config, dir)) {
          out.push_back({{"variant", r.variant}, {"records", r.records.size()}, {"positive_ratio", r.ratio}});
        }
        std::cout << json{{"out_dir", dir.string()}, {"variants", out}}.dump() << std::endl;
      } else if (*probe) {
        minco::ProbeOptions popts;
        popts.steps = probe_steps;
        const fs::path dir = out_dir.empty() ? minco::artifact_root() / "probe" : fs::path(out_dir);
        const auto r = minco::diagnose_probe(checkpoint, dir, popts, batches, seed);
        json grids = json::array();
        for (const auto& g : r.grids) grids.push_back(g.string());
        std::cout << json{{"grids", grids},
                          {"sprite_error", r.sprite_error},
                          {"background_error", r.background_error}}
                         .dump()
                  << std::endl;
      } else if (*bounds) {
        minco::info::BoundsOptions bopts;
        bopts.trials = trials;
        bopts.seed = seed;
        const auto report = minco::info::run_bound_suites(bopts);
        std::cout << bounds_json(report).dump() << std::endl;
        return report.passed() ? 0 : 1;
      }
    } else if (*verify) {
      minco::info::BoundsOptions bopts;
      bopts.trials = trials;
      bopts.seed = seed;
      const auto report = minco::info::run_bound_suites(bopts);
      std::cout << bounds_json(report).dump() << std::endl;
      return report.passed() ? 0 : 1;
    }
  } catch (const minco::ConfigError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "config"}}.dump() << std::endl;
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "invalid_argument"}}.dump() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "runtime"}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
