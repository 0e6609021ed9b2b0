#include "minco/replay.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace minco::env {

namespace {

constexpr int kStoreVersion = 1;

std::string episode_file_name(std::int64_t id) {
  std::ostringstream os;
  os << "episode_" << std::setw(6) << std::setfill('0') << id << ".bin";
  return os.str();
}

void write_tensor(std::ofstream& out, const torch::Tensor& t) {
  auto c = t.contiguous();
  out.write(static_cast<const char*>(c.data_ptr()), static_cast<std::streamsize>(c.nbytes()));
}

torch::Tensor read_tensor(std::ifstream& in, at::IntArrayRef shape, torch::ScalarType dtype) {
  auto t = torch::empty(shape, dtype);
  in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  if (!in) throw std::runtime_error("replay store: truncated episode blob");
  return t;
}

}  // namespace

double Episode::total_reward() const {
  return rewards.defined() ? rewards.sum().item<double>() : 0.0;
}

void EpisodeBuilder::start(const torch::Tensor& first_observation, std::int64_t action_dim) {
  observations_.assign(1, first_observation.clone());
  actions_.assign(1, torch::zeros({action_dim}));
  rewards_.assign(1, 0.0f);
  continues_.assign(1, 1.0f);
}

void EpisodeBuilder::append(const torch::Tensor& observation, const torch::Tensor& action,
                            double reward, bool terminal) {
  if (observations_.empty()) throw std::logic_error("EpisodeBuilder: append before start");
  observations_.push_back(observation.clone());
  actions_.push_back(action.detach().to(torch::kFloat).reshape({-1}).clone());
  rewards_.push_back(static_cast<float>(reward));
  continues_.push_back(terminal ? 0.0f : 1.0f);
}

Episode EpisodeBuilder::finish() {
  if (observations_.empty()) throw std::logic_error("EpisodeBuilder: nothing to finish");
  Episode e;
  e.observations = torch::stack(observations_);
  e.actions = torch::stack(actions_);
  e.rewards = torch::tensor(rewards_);
  e.continues = torch::tensor(continues_);
  observations_.clear();
  actions_.clear();
  rewards_.clear();
  continues_.clear();
  return e;
}

ReplayBuffer::ReplayBuffer(std::int64_t capacity_steps) : capacity_(capacity_steps) {
  if (capacity_steps <= 0) throw std::invalid_argument("ReplayBuffer: capacity must be > 0");
}

void ReplayBuffer::add(Episode episode) {
  if (episode.length() == 0) throw std::invalid_argument("ReplayBuffer: empty episode");
  total_steps_ += episode.length();
  episodes_.push_back(std::move(episode));
  while (total_steps_ > capacity_ && episodes_.size() > 1) {
    total_steps_ -= episodes_.front().length();
    episodes_.pop_front();
    ++first_id_;
  }
}

bool ReplayBuffer::can_sample(std::int64_t length) const {
  for (const auto& e : episodes_)
    if (e.length() >= length) return true;
  return false;
}

TrajectoryBatch ReplayBuffer::sample(std::mt19937_64& rng, std::int64_t batch,
                                     std::int64_t length) const {
  if (batch <= 0 || length <= 0) throw std::invalid_argument("sample: batch and length must be > 0");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < episodes_.size(); ++i)
    if (episodes_[i].length() >= length) eligible.push_back(i);
  if (eligible.empty()) {
    throw NotReadyError("replay buffer has no episode with at least " + std::to_string(length) +
                        " steps");
  }

  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  std::vector<torch::Tensor> obs, act, rew, cont;
  TrajectoryBatch out;
  for (std::int64_t b = 0; b < batch; ++b) {
    const std::size_t idx = eligible[pick(rng)];
    const auto& e = episodes_[idx];
    std::uniform_int_distribution<std::int64_t> offset_dist(0, e.length() - length);
    const std::int64_t offset = offset_dist(rng);
    obs.push_back(e.observations.narrow(0, offset, length));
    act.push_back(e.actions.narrow(0, offset, length));
    rew.push_back(e.rewards.narrow(0, offset, length));
    cont.push_back(e.continues.narrow(0, offset, length));
    out.episode_ids.push_back(first_id_ + static_cast<std::int64_t>(idx));
    out.offsets.push_back(offset);
  }
  out.observations = torch::stack(obs);
  out.actions = torch::stack(act);
  out.rewards = torch::stack(rew);
  out.continues = torch::stack(cont);
  return out;
}

void ReplayBuffer::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index;
  index["version"] = kStoreVersion;
  index["capacity_steps"] = capacity_;
  std::int64_t max_len = 0;
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < episodes_.size(); ++i) {
    const auto& e = episodes_[i];
    const std::int64_t id = first_id_ + static_cast<std::int64_t>(i);
    const auto name = episode_file_name(id);
    const auto path = dir / name;
    if (!fs::exists(path)) {
      const auto tmp = dir / (name + ".tmp");
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw std::runtime_error("replay store: cannot write " + tmp.string());
      write_tensor(out, e.observations);
      write_tensor(out, e.actions);
      write_tensor(out, e.rewards);
      write_tensor(out, e.continues);
      out.close();
      fs::rename(tmp, path);
    }
    entries.push_back({{"id", id}, {"file", name}, {"length", e.length()}});
    max_len = std::max(max_len, e.length());
  }
  index["episode_length"] = max_len;
  if (!episodes_.empty()) {
    const auto& e = episodes_.front();
    index["shapes"] = {{"observation", std::vector<std::int64_t>(e.observations.sizes().begin() + 1,
                                                                 e.observations.sizes().end())},
                       {"action", {e.actions.size(1)}},
                       {"reward", nlohmann::json::array()},
                       {"continue", nlohmann::json::array()}};
  }
  index["dtypes"] = {
      {"observation", "uint8"}, {"action", "float32"}, {"reward", "float32"}, {"continue", "float32"}};
  index["episodes"] = entries;

  // Drop blobs of episodes that have been evicted.
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto fname = entry.path().filename().string();
    if (fname.rfind("episode_", 0) != 0 || entry.path().extension() != ".bin") continue;
    const std::int64_t id = std::stoll(fname.substr(8, 6));
    if (id < first_id_) fs::remove(entry.path());
  }
  std::ofstream idx(dir / "index.json");
  idx << index.dump(2) << "\n";
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& dir, std::int64_t capacity_steps) {
  std::ifstream idx(dir / "index.json");
  if (!idx) throw std::runtime_error("replay store: missing index.json in " + dir.string());
  const auto index = nlohmann::json::parse(idx);
  if (index.at("version").get<int>() != kStoreVersion) {
    throw std::runtime_error("replay store: unsupported version");
  }
  ReplayBuffer buffer(capacity_steps);
  const auto& episodes = index.at("episodes");
  if (episodes.empty()) return buffer;
  const auto obs_shape = index.at("shapes").at("observation").get<std::vector<std::int64_t>>();
  const auto act_dim = index.at("shapes").at("action").at(0).get<std::int64_t>();
  buffer.first_id_ = episodes.front().at("id").get<std::int64_t>();
  for (const auto& entry : episodes) {
    const auto len = entry.at("length").get<std::int64_t>();
    std::ifstream in(dir / entry.at("file").get<std::string>(), std::ios::binary);
    if (!in) throw std::runtime_error("replay store: missing episode blob");
    std::vector<std::int64_t> shape{len};
    shape.insert(shape.end(), obs_shape.begin(), obs_shape.end());
    Episode e;
    e.observations = read_tensor(in, shape, torch::kUInt8);
    e.actions = read_tensor(in, {len, act_dim}, torch::kFloat);
    e.rewards = read_tensor(in, {len}, torch::kFloat);
    e.continues = read_tensor(in, {len}, torch::kFloat);
    buffer.total_steps_ += len;
    buffer.episodes_.push_back(std::move(e));
  }
  return buffer;
}

}  // namespace minco::env
