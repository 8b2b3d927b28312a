#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "facet/config/run_config.hpp"

using namespace facet;
using namespace facet::config;

namespace {

std::string error_of(const std::string& text) {
  try {
    from_json(parse_toml(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Toml, ScalarsArraysAndSections) {
  const auto j = parse_toml(R"(# run
seed = 7
out = "runs/a"   # trailing comment

[bvae]
hidden = [64, 32,]
beta = 4.0
lr = 1e-3
[translate]
train_generator = false
name = "a \"quoted\" \\ path"
neg = -3
)");
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["out"], "runs/a");
  EXPECT_EQ(j["bvae"]["hidden"], nlohmann::json::array({64, 32}));
  EXPECT_TRUE(j["bvae"]["beta"].is_number_float());
  EXPECT_DOUBLE_EQ(j["bvae"]["lr"].get<double>(), 1e-3);
  EXPECT_EQ(j["translate"]["train_generator"], false);
  EXPECT_EQ(j["translate"]["name"], "a \"quoted\" \\ path");
  EXPECT_EQ(j["translate"]["neg"], -3);
}

TEST(Toml, SyntaxErrorsCarryLine) {
  try {
    parse_toml("seed = 1\nout = \"x\n", "run.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.toml:2"), std::string::npos);
  }
  EXPECT_THROW(parse_toml("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(parse_toml("[x]\n[x]\n"), ConfigError);
  EXPECT_THROW(parse_toml("a = 1 2\n"), ConfigError);
  EXPECT_THROW(parse_toml("a = [1, 2\n"), ConfigError);
  EXPECT_THROW(parse_toml("= 3\n"), ConfigError);
}

TEST(Toml, MissingFile) { EXPECT_THROW(load_toml("/nonexistent/run.toml"), ConfigError); }

TEST(RunConfig, DefaultsFromEmptyDocument) {
  const RunConfig c = from_json(parse_toml(""));
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.data.clip_length, 64u);
  EXPECT_DOUBLE_EQ(c.data.split_ratio, 0.9);
  EXPECT_EQ(c.translate.model.partition, translate::PartitionKind::variable);
  EXPECT_EQ(c.translate.model.c, 2u);
  EXPECT_EQ(c.direction, "xy");
  EXPECT_EQ(c.analysis.split, "test");
}

TEST(RunConfig, ReadsEverySection) {
  const RunConfig c = from_json(parse_toml(R"(
seed = 5
out = "o"
[data]
clip_length = 32
stride = 16
format = "jsonl"
[bvae]
latent_dim = 8
hidden = [16, 8]
[translate]
mode = "fixed_set"
partition = "fixed_chunks"
c = 3
p = 4
seed = 99
direction = "yx"
[analysis]
k = 2
include_phi = true
[synth]
plant = "null"
clip_count = 10
)"));
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.data.stride, 16u);
  EXPECT_EQ(c.bvae.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(c.translate.model.mode, translate::GenMode::fixed_set);
  EXPECT_EQ(c.translate.model.c, 3u);
  EXPECT_EQ(c.translate.seed, 99u);
  EXPECT_EQ(c.direction, "yx");
  EXPECT_EQ(c.analysis.k, 2u);
  EXPECT_TRUE(c.analysis.include_phi);
  EXPECT_EQ(c.synth.plant, "null");
  EXPECT_EQ(c.synth_seed(), 5u);
}

TEST(RunConfig, UnknownKeysAreNamed) {
  EXPECT_NE(error_of("[bvae]\nlatent_dims = 8\n").find("'bvae.latent_dims'"), std::string::npos);
  EXPECT_NE(error_of("sed = 1\n").find("'sed'"), std::string::npos);
  EXPECT_NE(error_of("[bvea]\nlatent_dim = 8\n").find("'bvea'"), std::string::npos);
}

TEST(RunConfig, TypeAndRangeErrors) {
  EXPECT_NE(error_of("[bvae]\nlatent_dim = \"8\"\n").find("bvae.latent_dim"), std::string::npos);
  EXPECT_NE(error_of("[bvae]\nlatent_dim = -1\n").find("bvae.latent_dim"), std::string::npos);
  EXPECT_FALSE(error_of("[data]\nsplit_ratio = 1.0\n").empty());
  EXPECT_FALSE(error_of("[translate]\npartition = \"none\"\n").empty());  // c = 2 needs a partition
  EXPECT_FALSE(error_of("[translate]\nmode = \"other\"\n").empty());
  EXPECT_FALSE(error_of("[analysis]\nsplit = \"val\"\n").empty());
  EXPECT_FALSE(error_of("[synth]\nplant = \"half\"\n").empty());
  EXPECT_FALSE(error_of("[data]\nformat = \"csv\"\n").empty());
  EXPECT_TRUE(error_of("[bvae]\nlr = 1\n").empty());  // integers widen to floats
}

TEST(RunConfig, HashTracksEffectiveConfig) {
  const RunConfig a = from_json(parse_toml("seed = 1\n"));
  const RunConfig b = from_json(parse_toml("# same\nseed = 1\n[bvae]\n"));
  RunConfig c = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  apply_seed_override(c, 2);
  EXPECT_NE(config_hash(a), config_hash(c));
  EXPECT_EQ(c.translate.seed, 2u);
}

TEST(RunConfig, SeedOverrideClearsSectionSeeds) {
  RunConfig c = from_json(parse_toml("seed = 1\n[translate]\nseed = 9\n[synth]\nseed = 4\n"));
  EXPECT_EQ(c.translate.seed, 9u);
  apply_seed_override(c, 3);
  EXPECT_EQ(c.translate_run_seed(), 3u);
  EXPECT_EQ(c.synth_seed(), 3u);
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(RunConfig, ShippedConfigsParse) {
  const std::filesystem::path dir = std::filesystem::path(FACET_SOURCE_DIR) / "configs";
  ASSERT_TRUE(std::filesystem::exists(dir));
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".toml") continue;
    EXPECT_NO_THROW(load_run_config(e.path())) << e.path();
    ++n;
  }
  EXPECT_GT(n, 0u);
}

TEST(RunConfig, HashIgnoresOutputDirectory) {
  RunConfig a = from_json(parse_toml("out = \"a\"\n"));
  RunConfig b = from_json(parse_toml("out = \"b\"\n"));
  EXPECT_EQ(config_hash(a), config_hash(b));
}
