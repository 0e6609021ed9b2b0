#pragma once

// Training loop, evaluation, checkpoints and diagnostics orchestration.

#include "minco/config.hpp"
#include "minco/diagnostics.hpp"
#include "minco/infotheory.hpp"
#include "minco/objectives.hpp"
#include "minco/policy.hpp"
#include "minco/replay.hpp"
#include "minco/toyenv.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace minco {

inline constexpr int kCheckpointVersion = 1;

/// $MINCO_ARTIFACT_ROOT, or ./runs when unset.
std::filesystem::path artifact_root();

/// Pins libtorch to one intra-op thread so runs are bitwise reproducible.
void use_deterministic_threads();

env::EnvConfig env_config_from(const Config& config);

/// World model, actor and critic together with their optimizers.
struct Agent {
  explicit Agent(const Config& config);

  Config config;
  WorldModel model{nullptr};
  Actor actor{nullptr};
  Critic critic{nullptr};
  std::unique_ptr<torch::optim::Adam> model_optim;
  std::unique_ptr<torch::optim::Adam> actor_optim;
  std::unique_ptr<torch::optim::Adam> critic_optim;
};

/// Recursive posterior filter that turns observations into actions.
class PolicyRunner {
public:
  PolicyRunner(Agent& agent, ActMode mode);
  void reset();
  /// Updates the latent state with `observation` (following the previous
  /// action) and returns the next action, shape [A].
  torch::Tensor act(const torch::Tensor& observation, OptGenerator gen);
  /// Updates the latent state with `observation` and records an externally
  /// chosen `action` as the next previous action.
  void observe(const torch::Tensor& observation, const torch::Tensor& action, OptGenerator gen);

private:
  Agent& agent_;
  ActMode mode_;
  LatentState state_;
  torch::Tensor prev_action_;
};

struct EvalSummary {
  env::RenderMode mode = env::RenderMode::kDistracted;
  std::vector<double> returns;
  double mean = 0.0;
  double std = 0.0;
};

/// Eval-mode episodes for each render mode. Episode k resets the environment
/// from the same seed in every mode, so start states, goals and distractor
/// processes match across modes.
std::vector<EvalSummary> evaluate_agent(Agent& agent, int episodes,
                                        const std::vector<env::RenderMode>& modes,
                                        std::uint64_t seed);

/// Loads a checkpoint and evaluates it. Throws std::invalid_argument for
/// episodes <= 0 and std::runtime_error for an incompatible checkpoint.
std::vector<EvalSummary> evaluate(const std::filesystem::path& checkpoint, int episodes,
                                  const std::vector<env::RenderMode>& modes, std::uint64_t seed);

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::filesystem::path config_snapshot;  // config.json
  std::filesystem::path metrics;          // metrics.csv, one row per train step
  std::filesystem::path sidecar;          // run.json
  std::filesystem::path episodes;         // episodes.csv
  std::filesystem::path evals;            // evals.csv
  std::filesystem::path conflicts;        // conflict.csv
  std::vector<std::filesystem::path> checkpoints;
  std::vector<std::filesystem::path> plots;
  std::int64_t env_steps = 0;
  std::int64_t train_steps = 0;
};

struct TrainOptions {
  bool resume = false;
  bool verbose = false;
  /// When > 0, stop after the first checkpoint at or past this env step
  /// (status "stopped"); a later resume continues the same run.
  std::int64_t stop_after = 0;
};

/// Raised when a loss turns non-finite; a dump is written to the run directory first.
class NonFiniteLossError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Runs (or resumes) a training run inside `run_dir`.
RunArtifacts train(const Config& config, const std::filesystem::path& run_dir,
                   const TrainOptions& options = {});

void save_checkpoint(const std::filesystem::path& path, const Agent& agent,
                     std::int64_t env_steps, std::int64_t train_steps,
                     const std::string& rng_state = {});

struct LoadedCheckpoint {
  std::unique_ptr<Agent> agent;
  std::int64_t env_steps = 0;
  std::int64_t train_steps = 0;
  std::string rng_state;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Parsed metrics.csv.
struct MetricsTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::vector<double> column(const std::string& name) const;
};
MetricsTable read_metrics(const std::filesystem::path& path);

/// Records of conflict.csv.
std::vector<ConflictRecord> read_conflicts(const std::filesystem::path& path);

struct ConflictReport {
  std::string variant;
  std::vector<ConflictRecord> records;
  double ratio = 0.0;
};

/// Trains both objective variants from `base` with the conflict meter on
/// and reports their positive-inner-product ratios. Writes conflict.json and
/// a histogram per variant under `out_dir`.
std::vector<ConflictReport> diagnose_conflict(const Config& base, const std::filesystem::path& out_dir);

/// Trains a probe decoder on a checkpoint's frozen latents over freshly
/// collected episodes, then writes an observation/reconstruction grid for
/// each of `batches` held-out batches. Returns the grid paths.
struct ProbeReport {
  std::vector<std::filesystem::path> grids;
  std::vector<double> losses;
  double sprite_error = 0.0;      // mean squared error on agent-sprite pixels
  double background_error = 0.0;  // mean squared error on background pixels
};
ProbeReport diagnose_probe(const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
                           const ProbeOptions& options, int batches, std::uint64_t seed);

}  // namespace minco
