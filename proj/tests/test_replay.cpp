#include "minco/replay.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace minco::env;
using minco::testutil::TempDir;

namespace {

// Frame t of every episode is filled with the value `tag + t`.
Episode make_episode(std::int64_t length, int tag) {
  EpisodeBuilder b;
  b.start(torch::full({4, 4, 3}, tag, torch::kUInt8), 2);
  for (std::int64_t t = 1; t < length; ++t) {
    b.append(torch::full({4, 4, 3}, tag + t, torch::kUInt8), torch::full({2}, 0.01f * t),
             static_cast<double>(t), t == length - 1);
  }
  return b.finish();
}

}  // namespace

TEST(EpisodeBuilder, LayoutAndErrors) {
  auto e = make_episode(5, 0);
  EXPECT_EQ(e.length(), 5);
  EXPECT_EQ(e.actions[0].abs().sum().item<float>(), 0.0f);
  EXPECT_EQ(e.rewards[0].item<float>(), 0.0f);
  EXPECT_EQ(e.continues[4].item<float>(), 0.0f);
  EXPECT_EQ(e.continues[3].item<float>(), 1.0f);
  EXPECT_DOUBLE_EQ(e.total_reward(), 1 + 2 + 3 + 4);
  EpisodeBuilder b;
  EXPECT_THROW(b.append(torch::zeros({4, 4, 3}), torch::zeros({2}), 0, false), std::logic_error);
  EXPECT_THROW(b.finish(), std::logic_error);
}

TEST(Replay, NotReadyUntilLongEnough) {
  ReplayBuffer buf(1000);
  std::mt19937_64 rng(0);
  EXPECT_FALSE(buf.can_sample(1));
  EXPECT_THROW(buf.sample(rng, 2, 3), NotReadyError);
  buf.add(make_episode(4, 0));
  EXPECT_THROW(buf.sample(rng, 2, 5), NotReadyError);
  EXPECT_TRUE(buf.can_sample(4));
  EXPECT_THROW(buf.sample(rng, 0, 2), std::invalid_argument);
}

TEST(Replay, FullLengthSegmentStartsAtZero) {
  ReplayBuffer buf(1000);
  buf.add(make_episode(10, 0));
  std::mt19937_64 rng(1);
  auto b = buf.sample(rng, 5, 10);
  for (auto off : b.offsets) EXPECT_EQ(off, 0);
  EXPECT_EQ(b.observations.sizes(), (std::vector<std::int64_t>{5, 10, 4, 4, 3}));
}

TEST(Replay, SegmentsNeverSpanEpisodes) {
  ReplayBuffer buf(1000);
  for (int k = 0; k < 4; ++k) buf.add(make_episode(6 + k, 50 * k));
  std::mt19937_64 rng(2);
  auto b = buf.sample(rng, 200, 5);
  for (std::int64_t i = 0; i < 200; ++i) {
    const auto tag = 50 * b.episode_ids[i];
    for (std::int64_t t = 0; t < 5; ++t) {
      EXPECT_EQ(b.observations[i][t][0][0][0].item<int>(), tag + b.offsets[i] + t);
    }
  }
}

TEST(Replay, OffsetsUniform) {
  ReplayBuffer buf(1000);
  buf.add(make_episode(12, 0));
  std::mt19937_64 rng(3);
  std::map<std::int64_t, int> counts;
  const int n = 8000;
  auto b = buf.sample(rng, n, 5);
  for (auto off : b.offsets) ++counts[off];
  ASSERT_EQ(counts.size(), 8u);
  double chi2 = 0.0;
  for (const auto& [_, c] : counts) chi2 += (c - n / 8.0) * (c - n / 8.0) / (n / 8.0);
  // 7 degrees of freedom; the 0.999 quantile is about 24.3.
  EXPECT_LT(chi2, 24.3);
}

TEST(Replay, EvictsOldestBeyondCapacity) {
  ReplayBuffer buf(20);
  for (int k = 0; k < 5; ++k) buf.add(make_episode(8, k));
  EXPECT_EQ(buf.num_episodes(), 2u);
  EXPECT_EQ(buf.total_steps(), 16);
  EXPECT_EQ(buf.first_episode_id(), 3);
  EXPECT_EQ(buf.episodes().front().observations[0][0][0][0].item<int>(), 3);
  ReplayBuffer tiny(3);
  tiny.add(make_episode(8, 0));
  EXPECT_EQ(tiny.num_episodes(), 1u);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
}

TEST(Replay, SaveLoadRoundTrip) {
  TempDir dir("replay");
  ReplayBuffer buf(30);
  for (int k = 0; k < 5; ++k) buf.add(make_episode(7, 10 * k));
  buf.save(dir.path());
  auto loaded = ReplayBuffer::load(dir.path(), 30);
  EXPECT_EQ(loaded.num_episodes(), buf.num_episodes());
  EXPECT_EQ(loaded.first_episode_id(), buf.first_episode_id());
  EXPECT_EQ(loaded.total_steps(), buf.total_steps());
  std::mt19937_64 r1(4), r2(4);
  auto a = buf.sample(r1, 6, 4);
  auto b = loaded.sample(r2, 6, 4);
  EXPECT_TRUE(torch::equal(a.observations, b.observations));
  EXPECT_TRUE(torch::equal(a.actions, b.actions));
  EXPECT_TRUE(torch::equal(a.rewards, b.rewards));
  EXPECT_EQ(a.episode_ids, b.episode_ids);
  EXPECT_THROW(ReplayBuffer::load(dir / "missing", 30), std::runtime_error);
}
