#include "minco/harness.hpp"

#include "minco/image_io.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

namespace minco {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kMetricsColumns = {
    "train_step", "env_step",   "schedule_t", "beta",  "simsiam",        "recon",
    "reward",     "tvd",        "kl",         "c_inv", "total",          "kl_value",
    "actor_loss", "critic_loss", "imagined_return", "episode_return", "conflict"};

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

at::Generator make_generator(std::uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

std::string generator_state(const at::Generator& gen) {
  auto state = gen.get_state();
  const auto* p = state.data_ptr<std::uint8_t>();
  return std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(state.numel()));
}

void set_generator_state(at::Generator& gen, const std::string& bytes) {
  auto state = torch::empty({static_cast<std::int64_t>(bytes.size())}, torch::kUInt8);
  std::memcpy(state.data_ptr<std::uint8_t>(), bytes.data(), bytes.size());
  gen.set_state(state);
}

std::string engine_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_engine_state(std::mt19937_64& rng, const std::string& text) {
  std::istringstream is(text);
  is >> rng;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell) {
  if (cell.empty() || cell == "nan") return std::nan("");
  return std::stod(cell);
}

// Keeps the header and every row whose first column is below `limit`.
void truncate_csv(const fs::path& path, double limit) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::vector<std::string> kept;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header || parse_cell(split_csv(line).front()) < limit) kept.push_back(line);
    header = false;
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : kept) out << l << '\n';
}

std::ofstream open_csv(const fs::path& path, const std::vector<std::string>& header) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (fresh) {
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
  }
  return out;
}

void write_json(const fs::path& path, const json& j) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

env::TrajectoryBatch as_batch(const env::Episode& e) {
  env::TrajectoryBatch b;
  b.observations = e.observations.unsqueeze(0);
  b.actions = e.actions.unsqueeze(0);
  b.rewards = e.rewards.unsqueeze(0);
  b.continues = e.continues.unsqueeze(0);
  b.episode_ids = {0};
  b.offsets = {0};
  return b;
}

}  // namespace

fs::path artifact_root() {
  const char* root = std::getenv("MINCO_ARTIFACT_ROOT");
  return root && *root ? fs::path(root) : fs::path("runs");
}

void use_deterministic_threads() {
  torch::set_num_threads(1);
}

env::EnvConfig env_config_from(const Config& config) {
  env::EnvConfig e;
  e.mode = env::parse_render_mode(config.env.mode);
  e.episode_length = config.env.episode_length;
  e.action_repeat = config.env.action_repeat;
  e.image_size = config.env.image_size;
  e.max_speed = config.env.max_speed;
  return e;
}

Agent::Agent(const Config& cfg) : config(cfg) {
  torch::manual_seed(cfg.seed);
  const auto wm = WorldModelOptions::from_config(cfg);
  model = WorldModel(wm);
  ActorOptions ao;
  ao.feature_dim = model->rssm->feature_dim();
  ao.action_dim = env::DistractedPointMass::action_dim();
  ao.hidden = cfg.model.hidden;
  ao.init_std = cfg.policy.init_std;
  ao.min_std = cfg.policy.min_std;
  actor = Actor(ao);
  critic = Critic(ao.feature_dim, cfg.model.hidden);
  model_optim = std::make_unique<torch::optim::Adam>(
      model->parameters(), torch::optim::AdamOptions(cfg.optim.model_lr).eps(cfg.optim.adam_eps));
  actor_optim = std::make_unique<torch::optim::Adam>(
      actor->parameters(), torch::optim::AdamOptions(cfg.optim.policy_lr).eps(cfg.optim.adam_eps));
  critic_optim = std::make_unique<torch::optim::Adam>(
      critic->parameters(), torch::optim::AdamOptions(cfg.optim.value_lr).eps(cfg.optim.adam_eps));
}

PolicyRunner::PolicyRunner(Agent& agent, ActMode mode) : agent_(agent), mode_(mode) { reset(); }

void PolicyRunner::reset() {
  state_ = agent_.model->rssm->initial_state(1);
  prev_action_ = torch::zeros({1, env::DistractedPointMass::action_dim()});
}

torch::Tensor PolicyRunner::act(const torch::Tensor& observation, OptGenerator gen) {
  torch::NoGradGuard no_grad;
  auto embed = agent_.model->encoder(observation.unsqueeze(0));
  state_ = agent_.model->rssm->posterior_step(state_, prev_action_, embed, gen).state;
  prev_action_ = agent_.actor->act(state_.features(), mode_, gen);
  return prev_action_[0];
}

void PolicyRunner::observe(const torch::Tensor& observation, const torch::Tensor& action,
                           OptGenerator gen) {
  torch::NoGradGuard no_grad;
  auto embed = agent_.model->encoder(observation.unsqueeze(0));
  state_ = agent_.model->rssm->posterior_step(state_, prev_action_, embed, gen).state;
  prev_action_ = action.reshape({1, -1}).to(torch::kFloat);
}

std::vector<EvalSummary> evaluate_agent(Agent& agent, int episodes,
                                        const std::vector<env::RenderMode>& modes,
                                        std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("evaluate: episodes must be > 0");
  std::vector<EvalSummary> out;
  for (const auto mode : modes) {
    auto cfg = env_config_from(agent.config);
    cfg.mode = mode;
    env::DistractedPointMass environment(cfg);
    PolicyRunner runner(agent, ActMode::kEval);
    EvalSummary summary;
    summary.mode = mode;
    for (int k = 0; k < episodes; ++k) {
      std::mt19937_64 rng(seed + static_cast<std::uint64_t>(k));
      auto gen = make_generator(seed + static_cast<std::uint64_t>(k));
      auto obs = environment.reset(rng);
      runner.reset();
      double ret = 0.0;
      while (true) {
        auto step = environment.step(runner.act(obs, gen));
        ret += step.reward;
        obs = step.observation;
        if (step.done) break;
      }
      summary.returns.push_back(ret);
    }
    summary.mean = mean_of(summary.returns);
    summary.std = std_of(summary.returns);
    out.push_back(std::move(summary));
  }
  return out;
}

void save_checkpoint(const fs::path& path, const Agent& agent, std::int64_t env_steps,
                     std::int64_t train_steps, const std::string& rng_state) {
  torch::serialize::OutputArchive root;
  root.write("version", c10::IValue(static_cast<std::int64_t>(kCheckpointVersion)));
  root.write("config", c10::IValue(json(agent.config).dump()));
  root.write("env_steps", c10::IValue(env_steps));
  root.write("train_steps", c10::IValue(train_steps));
  root.write("rng_state", c10::IValue(rng_state));
  const auto put = [&root](const std::string& key, const auto& saveable) {
    torch::serialize::OutputArchive sub;
    saveable.save(sub);
    root.write(key, sub);
  };
  put("model", *agent.model);
  put("actor", *agent.actor);
  put("critic", *agent.critic);
  put("model_optim", *agent.model_optim);
  put("actor_optim", *agent.actor_optim);
  put("critic_optim", *agent.critic_optim);
  const auto tmp = fs::path(path.string() + ".tmp");
  root.save_to(tmp.string());
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const fs::path& path) {
  if (!fs::exists(path)) throw std::runtime_error("checkpoint not found: " + path.string());
  torch::serialize::InputArchive root;
  root.load_from(path.string());
  c10::IValue v;
  if (!root.try_read("version", v) || !v.isInt() || v.toInt() != kCheckpointVersion) {
    throw std::runtime_error("incompatible checkpoint version in " + path.string() +
                             " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  root.read("config", v);
  const auto config = resolve_config(json::parse(v.toStringRef()));
  LoadedCheckpoint out;
  out.agent = std::make_unique<Agent>(config);
  root.read("env_steps", v);
  out.env_steps = v.toInt();
  root.read("train_steps", v);
  out.train_steps = v.toInt();
  root.read("rng_state", v);
  out.rng_state = v.toStringRef();
  const auto get = [&root](const std::string& key, auto& loadable) {
    torch::serialize::InputArchive sub;
    root.read(key, sub);
    loadable.load(sub);
  };
  get("model", *out.agent->model);
  get("actor", *out.agent->actor);
  get("critic", *out.agent->critic);
  get("model_optim", *out.agent->model_optim);
  get("actor_optim", *out.agent->actor_optim);
  get("critic_optim", *out.agent->critic_optim);
  return out;
}

std::vector<EvalSummary> evaluate(const fs::path& checkpoint, int episodes,
                                  const std::vector<env::RenderMode>& modes, std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("evaluate: episodes must be > 0");
  auto loaded = load_checkpoint(checkpoint);
  return evaluate_agent(*loaded.agent, episodes, modes, seed);
}

namespace {

constexpr std::uint64_t kEvalSeedOffset = 0x5EED0000ULL;
constexpr std::uint64_t kConflictSeedOffset = 0xC0F1ULL;

class Trainer {
public:
  Trainer(const Config& config, const fs::path& run_dir, const TrainOptions& options)
      : config_(config),
        options_(options),
        objective_(ObjectiveOptions::from_config(config)),
        env_(env_config_from(config)),
        buffer_(config.loop.replay_capacity),
        rng_(config.seed),
        gen_(make_generator(config.seed + 1)),
        conflict_rng_(config.seed + kConflictSeedOffset),
        conflict_gen_(make_generator(config.seed + kConflictSeedOffset + 1)) {
    art_.run_dir = run_dir;
    art_.config_snapshot = run_dir / "config.json";
    art_.metrics = run_dir / "metrics.csv";
    art_.sidecar = run_dir / "run.json";
    art_.episodes = run_dir / "episodes.csv";
    art_.evals = run_dir / "evals.csv";
    art_.conflicts = run_dir / "conflict.csv";
    policy_opts_.horizon = config.policy.horizon;
    policy_opts_.gamma = config.policy.gamma;
    policy_opts_.lambda = config.policy.lambda;
    policy_opts_.grad_clip = config.optim.grad_clip;
  }

  RunArtifacts run() {
    fs::create_directories(art_.run_dir / "checkpoints");
    if (options_.resume) {
      restore();
    } else {
      for (const auto& p : {art_.metrics, art_.episodes, art_.evals, art_.conflicts}) fs::remove(p);
      agent_ = std::make_unique<Agent>(config_);
    }
    write_json(art_.config_snapshot, json(config_));
    write_sidecar("running");
    runner_ = std::make_unique<PolicyRunner>(*agent_, ActMode::kExplore);

    metrics_ = open_csv(art_.metrics, kMetricsColumns);
    episodes_csv_ = open_csv(art_.episodes, {"env_step", "episode", "return"});
    evals_csv_ = open_csv(art_.evals, {"env_step", "mode", "mean", "std", "episodes"});
    conflict_csv_ = open_csv(art_.conflicts, {"train_step", "inner_product"});

    const auto& loop = config_.loop;
    std::int64_t next_checkpoint = (env_steps_ / loop.checkpoint_every + 1) * loop.checkpoint_every;
    torch::Tensor obs;
    std::uniform_real_distribution<double> uniform(-1.0, 1.0);

    while (env_steps_ < loop.total_env_steps) {
      if (builder_.empty()) {
        obs = env_.reset(rng_);
        builder_.start(obs, env::DistractedPointMass::action_dim());
        runner_->reset();
        episode_return_ = 0.0;
      }
      torch::Tensor action;
      if (env_steps_ < loop.prefill) {
        action = torch::tensor({static_cast<float>(uniform(rng_)), static_cast<float>(uniform(rng_))});
        runner_->observe(obs, action, gen_);
      } else {
        action = runner_->act(obs, gen_);
      }
      auto step = env_.step(action);
      // Time-limit ends are not terminal states.
      builder_.append(step.observation, action, step.reward, false);
      obs = step.observation;
      episode_return_ += step.reward;
      const auto before = env_steps_;
      env_steps_ += config_.env.action_repeat;

      if (step.done) {
        buffer_.add(builder_.finish());
        last_return_ = episode_return_;
        episodes_csv_ << env_steps_ << ',' << episode_count_++ << ',' << fmt_double(episode_return_)
                      << '\n';
        episodes_csv_.flush();
        if (options_.verbose) {
          std::cerr << "[minco] env_step " << env_steps_ << " episode_return " << episode_return_ << '\n';
        }
      }
      if (crossed(before, env_steps_, loop.train_every) && env_steps_ >= loop.prefill &&
          buffer_.can_sample(config_.batch.length)) {
        for (int i = 0; i < loop.train_steps; ++i) train_step();
        metrics_.flush();
        conflict_csv_.flush();
      }
      if (loop.eval_episodes > 0 && crossed(before, env_steps_, loop.eval_every)) run_eval();
      if (builder_.empty() && env_steps_ >= next_checkpoint) {
        checkpoint("ckpt_" + std::to_string(env_steps_) + ".pt");
        next_checkpoint = (env_steps_ / loop.checkpoint_every + 1) * loop.checkpoint_every;
        if (options_.stop_after > 0 && env_steps_ >= options_.stop_after) return finish("stopped");
      }
    }
    checkpoint("final.pt");
    write_plots_on_finish_ = true;
    return finish("completed");
  }

private:
  RunArtifacts finish(const std::string& status) {
    metrics_.close();
    episodes_csv_.close();
    evals_csv_.close();
    conflict_csv_.close();
    if (write_plots_on_finish_) write_plots();
    write_sidecar(status);
    art_.env_steps = env_steps_;
    art_.train_steps = train_steps_;
    return art_;
  }

  static bool crossed(std::int64_t before, std::int64_t after, std::int64_t every) {
    return after / every > before / every;
  }

  double schedule_t() const {
    return static_cast<double>(config_.schedule.t_unit == "train_steps" ? train_steps_ : env_steps_);
  }

  void train_step() {
    const double t = schedule_t();
    auto batch = buffer_.sample(rng_, config_.batch.size, config_.batch.length);
    auto& model = agent_->model;

    double conflict = std::nan("");
    const auto& diag = config_.diagnostics;
    if (diag.conflict && train_steps_ >= diag.conflict_warmup && train_steps_ % diag.conflict_every == 0) {
      auto rec = gradient_conflict_sample(model, batch, objective_, t, train_steps_, conflict_rng_,
                                          conflict_gen_);
      if (rec) {
        conflict = rec->inner_product;
        conflict_csv_ << train_steps_ << ',' << fmt_double(conflict) << '\n';
      }
    }

    auto out = model_objective(model, batch, t, objective_, rng_, gen_);
    const double total = out.losses.total.item<double>();
    if (!std::isfinite(total)) abort_non_finite("model objective", out.losses, t);
    agent_->model_optim->zero_grad();
    (-out.losses.total).backward();
    torch::nn::utils::clip_grad_norm_(model->parameters(), config_.optim.grad_clip);
    agent_->model_optim->step();

    auto pol = policy_update(model, agent_->actor, agent_->critic, out.posterior.flatten_detached(),
                             policy_opts_, *agent_->actor_optim, *agent_->critic_optim, gen_);
    if (!std::isfinite(pol.actor_loss) || !std::isfinite(pol.critic_loss)) {
      abort_non_finite("policy update", out.losses, t);
    }

    const auto& l = out.losses;
    const auto opt = [&l](const char* name) {
      return l.term(name).defined() ? fmt_double(l.value(name)) : std::string("nan");
    };
    metrics_ << train_steps_ << ',' << env_steps_ << ',' << fmt_double(t) << ',' << fmt_double(l.beta)
             << ',' << opt("simsiam") << ',' << opt("recon") << ',' << opt("reward") << ','
             << opt("tvd") << ',' << opt("kl") << ',' << opt("c_inv") << ',' << fmt_double(total)
             << ',' << fmt_double(l.kl_value) << ',' << fmt_double(pol.actor_loss) << ','
             << fmt_double(pol.critic_loss) << ',' << fmt_double(pol.mean_imagined_return) << ','
             << fmt_double(last_return_) << ',' << fmt_double(conflict) << '\n';
    ++train_steps_;
  }

  [[noreturn]] void abort_non_finite(const std::string& where, const LossBreakdown& l, double t) {
    json dump;
    dump["where"] = where;
    dump["train_step"] = train_steps_;
    dump["env_step"] = env_steps_;
    dump["schedule_t"] = t;
    dump["beta"] = l.beta;
    json terms = json::object();
    for (const auto& name : l.active_terms()) terms[name] = fmt_double(l.value(name));
    dump["terms"] = terms;
    json norms = json::object();
    for (const auto& item : agent_->model->named_parameters()) {
      norms[item.key()] = fmt_double(item.value().detach().norm().item<double>());
    }
    dump["parameter_norms"] = norms;
    write_json(art_.run_dir / "nan_dump.json", dump);
    metrics_.flush();
    write_sidecar("aborted");
    throw NonFiniteLossError("non-finite loss in " + where + " at train step " +
                             std::to_string(train_steps_) + "; dump in " +
                             (art_.run_dir / "nan_dump.json").string());
  }

  void run_eval() {
    const std::uint64_t seed = config_.seed + kEvalSeedOffset;
    auto summaries = evaluate_agent(*agent_, config_.loop.eval_episodes,
                                    {env::RenderMode::kDistracted, env::RenderMode::kClean}, seed);
    for (const auto& s : summaries) {
      evals_csv_ << env_steps_ << ',' << env::to_string(s.mode) << ',' << fmt_double(s.mean) << ','
                 << fmt_double(s.std) << ',' << s.returns.size() << '\n';
    }
    evals_csv_.flush();
  }

  std::string rng_blob() const {
    json j;
    j["rng"] = engine_state(rng_);
    j["conflict_rng"] = engine_state(conflict_rng_);
    const auto g = generator_state(gen_);
    j["gen"] = json::binary_t(std::vector<std::uint8_t>(g.begin(), g.end()));
    const auto cg = generator_state(conflict_gen_);
    j["conflict_gen"] = json::binary_t(std::vector<std::uint8_t>(cg.begin(), cg.end()));
    j["episode_count"] = episode_count_;
    j["last_return"] = fmt_double(last_return_);
    const auto bytes = json::to_cbor(j);
    return std::string(bytes.begin(), bytes.end());
  }

  void checkpoint(const std::string& name) {
    const auto path = art_.run_dir / "checkpoints" / name;
    save_checkpoint(path, *agent_, env_steps_, train_steps_, rng_blob());
    if (config_.loop.save_replay) buffer_.save(art_.run_dir / "replay");
    {
      std::ofstream latest(art_.run_dir / "checkpoints" / "latest");
      latest << name << '\n';
    }
    art_.checkpoints.push_back(path);
  }

  void restore() {
    const auto dir = art_.run_dir / "checkpoints";
    std::ifstream latest(dir / "latest");
    std::string name;
    if (!latest || !(latest >> name)) {
      throw std::runtime_error("resume: no checkpoint recorded in " + dir.string());
    }
    auto loaded = load_checkpoint(dir / name);
    if (json(loaded.agent->config) != json(config_)) {
      throw std::runtime_error("resume: config differs from the checkpointed run");
    }
    if (!fs::exists(art_.run_dir / "replay" / "index.json")) {
      throw std::runtime_error("resume: replay store missing (loop.save_replay was off)");
    }
    agent_ = std::move(loaded.agent);
    env_steps_ = loaded.env_steps;
    train_steps_ = loaded.train_steps;
    const auto blob = loaded.rng_state;
    const auto j = json::from_cbor(std::vector<std::uint8_t>(blob.begin(), blob.end()));
    set_engine_state(rng_, j.at("rng").get<std::string>());
    set_engine_state(conflict_rng_, j.at("conflict_rng").get<std::string>());
    const auto& g = j.at("gen").get_binary();
    set_generator_state(gen_, std::string(g.begin(), g.end()));
    const auto& cg = j.at("conflict_gen").get_binary();
    set_generator_state(conflict_gen_, std::string(cg.begin(), cg.end()));
    episode_count_ = j.at("episode_count").get<std::int64_t>();
    last_return_ = parse_cell(j.at("last_return").get<std::string>());
    buffer_ = env::ReplayBuffer::load(art_.run_dir / "replay", config_.loop.replay_capacity);
    // Rows written after the checkpoint are replayed by the resumed run.
    truncate_csv(art_.metrics, static_cast<double>(train_steps_));
    truncate_csv(art_.conflicts, static_cast<double>(train_steps_));
    truncate_csv(art_.episodes, static_cast<double>(env_steps_) + 0.5);
    truncate_csv(art_.evals, static_cast<double>(env_steps_) + 0.5);
  }

  void write_sidecar(const std::string& status) {
    json j;
    j["format_version"] = 1;
    j["status"] = status;
    j["seed"] = config_.seed;
    j["variant"] = config_.objective.variant;
    j["torch_version"] = TORCH_VERSION;
    j["env_steps"] = env_steps_;
    j["train_steps"] = train_steps_;
    j["files"] = {{"config", "config.json"},   {"metrics", "metrics.csv"},
                  {"episodes", "episodes.csv"}, {"evals", "evals.csv"},
                  {"conflict", "conflict.csv"}, {"checkpoints", "checkpoints/"}};
    j["metrics_columns"] = kMetricsColumns;
    j["metrics_notes"] =
        "one row per train step; objective terms are maximized quantities, empty terms are nan; "
        "episode_return is the most recent completed training episode";
    write_json(art_.sidecar, j);
  }

  void write_plots() {
    const auto metrics = read_metrics(art_.metrics);
    // Return vs env steps: training episodes plus eval means per mode.
    std::vector<io::Series> returns;
    {
      io::Series train{"train", {}, {}};
      std::ifstream in(art_.episodes);
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        const auto cells = split_csv(line);
        train.x.push_back(parse_cell(cells[0]));
        train.y.push_back(parse_cell(cells[2]));
      }
      returns.push_back(std::move(train));
      io::Series dist{"eval_distracted", {}, {}}, clean{"eval_clean", {}, {}};
      std::ifstream ev(art_.evals);
      std::getline(ev, line);
      while (std::getline(ev, line)) {
        const auto cells = split_csv(line);
        auto& s = cells[1] == "clean" ? clean : dist;
        s.x.push_back(parse_cell(cells[0]));
        s.y.push_back(parse_cell(cells[2]));
      }
      returns.push_back(std::move(dist));
      returns.push_back(std::move(clean));
    }
    const auto plot = [this](const std::string& name, const torch::Tensor& img) {
      const auto path = art_.run_dir / name;
      io::write_png(path, img);
      art_.plots.push_back(path);
    };
    plot("returns.png", io::render_line_chart(returns));
    if (!metrics.rows.empty()) {
      plot("beta.png", io::render_line_chart({{"beta", metrics.column("train_step"), metrics.column("beta")}}));
    }
    const auto records = read_conflicts(art_.conflicts);
    if (!records.empty()) {
      std::vector<double> ips;
      for (const auto& r : records) ips.push_back(r.inner_product);
      plot("conflict_hist.png", io::render_histogram(ips, -1.0, 1.0, 40));
    }
  }

  Config config_;
  TrainOptions options_;
  ObjectiveOptions objective_;
  PolicyUpdateOptions policy_opts_;
  env::DistractedPointMass env_;
  env::ReplayBuffer buffer_;
  env::EpisodeBuilder builder_;
  std::mt19937_64 rng_;
  at::Generator gen_;
  std::mt19937_64 conflict_rng_;
  at::Generator conflict_gen_;
  std::unique_ptr<Agent> agent_;
  std::unique_ptr<PolicyRunner> runner_;
  RunArtifacts art_;
  std::ofstream metrics_, episodes_csv_, evals_csv_, conflict_csv_;
  std::int64_t env_steps_ = 0;
  std::int64_t train_steps_ = 0;
  std::int64_t episode_count_ = 0;
  double episode_return_ = 0.0;
  double last_return_ = std::nan("");
  bool write_plots_on_finish_ = false;
};

}  // namespace

RunArtifacts train(const Config& config, const fs::path& run_dir, const TrainOptions& options) {
  validate(config);
  Trainer trainer(config, run_dir, options);
  return trainer.run();
}

std::vector<double> MetricsTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::out_of_range("metrics: no column " + name);
  const auto idx = static_cast<std::size_t>(it - header.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(idx));
  return out;
}

MetricsTable read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  MetricsTable table;
  std::string line;
  if (!std::getline(in, line)) return table;
  table.header = split_csv(line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    for (const auto& cell : split_csv(line)) row.push_back(parse_cell(cell));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<ConflictRecord> read_conflicts(const fs::path& path) {
  std::vector<ConflictRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cells = split_csv(line);
    out.push_back({std::stoll(cells[0]), parse_cell(cells[1])});
  }
  return out;
}

std::vector<ConflictReport> diagnose_conflict(const Config& base, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<ConflictReport> reports;
  json summary = json::array();
  for (const std::string variant : {"minco", "dreamer"}) {
    auto cfg = base;
    cfg.objective.variant = variant;
    cfg.diagnostics.conflict = true;
    const auto run = train(cfg, out_dir / variant);
    ConflictReport r;
    r.variant = variant;
    r.records = read_conflicts(run.conflicts);
    r.ratio = r.records.empty() ? std::nan("") : conflict_ratio(r.records);
    std::vector<double> ips;
    for (const auto& rec : r.records) ips.push_back(rec.inner_product);
    io::write_png(out_dir / (variant + "_conflict_hist.png"), io::render_histogram(ips, -1.0, 1.0, 40));
    summary.push_back({{"variant", variant},
                       {"records", r.records.size()},
                       {"positive_ratio", r.records.empty() ? json(nullptr) : json(r.ratio)}});
    reports.push_back(std::move(r));
  }
  write_json(out_dir / "conflict.json", {{"seed", base.seed}, {"variants", summary}});
  return reports;
}

ProbeReport diagnose_probe(const fs::path& checkpoint, const fs::path& out_dir,
                           const ProbeOptions& options, int batches, std::uint64_t seed) {
  if (batches <= 0) throw std::invalid_argument("probe: batches must be > 0");
  fs::create_directories(out_dir);
  auto loaded = load_checkpoint(checkpoint);
  Agent& agent = *loaded.agent;
  env::DistractedPointMass environment(env_config_from(agent.config));
  PolicyRunner runner(agent, ActMode::kExplore);
  std::mt19937_64 rng(seed);
  auto gen = make_generator(seed + 1);

  struct Collected {
    env::Episode episode;
    torch::Tensor agent_mask;       // [T, H, W]
    torch::Tensor background_mask;  // [T, H, W]
  };
  const auto collect = [&]() {
    env::EpisodeBuilder builder;
    std::vector<torch::Tensor> am, bm;
    auto obs = environment.reset(rng);
    runner.reset();
    builder.start(obs, env::DistractedPointMass::action_dim());
    am.push_back(environment.agent_mask());
    bm.push_back(environment.background_mask());
    while (true) {
      auto action = runner.act(obs, gen);
      auto step = environment.step(action);
      builder.append(step.observation, action, step.reward, false);
      am.push_back(environment.agent_mask());
      bm.push_back(environment.background_mask());
      obs = step.observation;
      if (step.done) break;
    }
    return Collected{builder.finish(), torch::stack(am), torch::stack(bm)};
  };

  const int train_episodes = 8;
  env::ReplayBuffer dataset(std::int64_t{1} << 40);
  for (int i = 0; i < train_episodes; ++i) dataset.add(collect().episode);
  ProbeReport report;
  auto probe = train_probe_decoder(agent.model, dataset, options, rng, gen);
  report.losses = probe.losses;

  double sprite_sum = 0.0, sprite_n = 0.0, bg_sum = 0.0, bg_n = 0.0;
  for (int b = 0; b < batches; ++b) {
    auto held = collect();
    auto features = probe_features(agent.model, as_batch(held.episode), gen).squeeze(1);
    torch::Tensor recon;
    {
      torch::NoGradGuard no_grad;
      recon = probe.decoder(features);
    }
    auto target = normalize_pixels(held.episode.observations);
    auto err = (recon - target).pow(2).mean(-1);  // [T, H, W]
    const auto am = held.agent_mask.to(torch::kFloat);
    const auto bm = held.background_mask.to(torch::kFloat);
    sprite_sum += (err * am).sum().item<double>();
    sprite_n += am.sum().item<double>();
    bg_sum += (err * bm).sum().item<double>();
    bg_n += bm.sum().item<double>();

    const auto T = held.episode.length();
    const int cols = 8;
    auto idx = torch::linspace(0, static_cast<double>(T - 1), cols).round().to(torch::kLong);
    auto originals = held.episode.observations.index_select(0, idx);
    auto decoded = denormalize_pixels(recon.index_select(0, idx));
    auto grid = io::make_grid(torch::cat({originals, decoded}), cols);
    const auto path = out_dir / ("probe_batch_" + std::to_string(b) + ".png");
    io::write_png(path, grid);
    report.grids.push_back(path);
  }
  report.sprite_error = sprite_n > 0 ? sprite_sum / sprite_n : std::nan("");
  report.background_error = bg_n > 0 ? bg_sum / bg_n : std::nan("");
  write_json(out_dir / "probe.json", {{"checkpoint", checkpoint.string()},
                                      {"final_loss", report.losses.empty() ? 0.0 : report.losses.back()},
                                      {"sprite_error", report.sprite_error},
                                      {"background_error", report.background_error},
                                      {"grids", batches}});
  return report;
}

}  // namespace minco
