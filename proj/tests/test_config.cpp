#include "minco/config.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace minco;
using minco::testutil::TempDir;

namespace {

std::filesystem::path write_file(const TempDir& dir, const std::string& name, const std::string& text) {
  const auto p = dir / name;
  std::ofstream(p) << text;
  return p;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  TempDir dir("config");
  const auto c = load_config(write_file(dir, "empty.json", ""));
  EXPECT_EQ(nlohmann::json(c), nlohmann::json(Config{}));
  EXPECT_EQ(c.batch.size, 50);
  EXPECT_DOUBLE_EQ(c.schedule.a, 8e-5);
  EXPECT_EQ(nlohmann::json(load_config(write_file(dir, "obj.json", "{}"))), nlohmann::json(Config{}));
  EXPECT_EQ(nlohmann::json(load_config({})), nlohmann::json(Config{}));
  EXPECT_EQ(nlohmann::json(load_config(write_file(dir, "sec.json", R"({"loop": {}})"))), nlohmann::json(Config{}));
}

TEST(Config, FileThenOverrides) {
  TempDir dir("config");
  const auto p = write_file(dir, "c.json", R"({"schedule": {"a": 1e-4}, "seed": 3})");
  auto c = load_config(p);
  EXPECT_DOUBLE_EQ(c.schedule.a, 1e-4);
  EXPECT_EQ(c.seed, 3u);
  c = load_config(p, {"schedule.a=8e-6", "objective.variant=dreamer", "objective.tvd=false", "seed=5"});
  EXPECT_DOUBLE_EQ(c.schedule.a, 8e-6);
  EXPECT_EQ(c.objective.variant, "dreamer");
  EXPECT_FALSE(c.objective.tvd);
  EXPECT_EQ(c.seed, 5u);
  // Integers are accepted where a real is expected.
  EXPECT_DOUBLE_EQ(load_config({}, {"schedule.b=4"}).schedule.b, 4.0);
}

TEST(Config, UnknownKeySuggestsClosest) {
  const auto msg = error_of([] { load_config({}, {"shedule.a=1"}); });
  EXPECT_NE(msg.find("shedule.a"), std::string::npos);
  EXPECT_NE(msg.find("did you mean 'schedule.a'"), std::string::npos);
  TempDir dir("config");
  const auto p = write_file(dir, "bad.json", R"({"loop": {"total_env_step": 5}})");
  EXPECT_NE(error_of([&] { load_config(p); }).find("loop.total_env_steps"), std::string::npos);
}

TEST(Config, TypeMismatchAndInvalidValues) {
  EXPECT_NE(error_of([] { load_config({}, {"batch.size=\"big\""}); }).find("type mismatch"), std::string::npos);
  EXPECT_THROW(load_config({}, {"objective.simsiam=1"}), ConfigError);
  EXPECT_THROW(load_config({}, {"batch.size=1.5"}), ConfigError);
  EXPECT_THROW(load_config({}, {"objective.variant=planet"}), ConfigError);
  EXPECT_THROW(load_config({}, {"policy.gamma=1.0"}), ConfigError);
  EXPECT_THROW(load_config({}, {"schedule.t_unit=hours"}), ConfigError);
  EXPECT_THROW(load_config({}, {"noequals"}), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
  TempDir dir("config");
  EXPECT_THROW(load_config(write_file(dir, "broken.json", "{ not json")), ConfigError);
  EXPECT_THROW(load_config(write_file(dir, "array.json", "[1]")), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = testutil::tiny_config();
  c.seed = 42;
  c.objective.constant_beta = 0.02;
  const Config back = nlohmann::json(c).get<Config>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
  EXPECT_EQ(nlohmann::json(resolve_config(nlohmann::json(c))), nlohmann::json(c));
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"default.json", "smoke.json", "desk.json"}) {
    const auto path = std::filesystem::path(MINCO_SOURCE_DIR) / "configs" / name;
    EXPECT_NO_THROW(load_config(path)) << name;
  }
}
