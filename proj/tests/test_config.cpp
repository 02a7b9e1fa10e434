#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "structgan/config.hpp"

using namespace structgan;

TEST(Presets, Cycle) {
  const auto c = builtin_config("cycle");
  EXPECT_EQ(c.lambda_cyc_A, 10.0);
  EXPECT_EQ(c.lambda_cyc_B, 10.0);
  for (PairTag t : kAllPairTags) {
    EXPECT_EQ(c.lambda_p_of(t), 0.0);
    EXPECT_EQ(c.lambda_ep_of(t), 0.0);
    EXPECT_EQ(c.lambda_ei_of(t), 0.0);
  }
}

TEST(Presets, CyclePdist) {
  const auto c = builtin_config("cycle+pdist");
  EXPECT_EQ(c.lambda_cyc_A, 10.0);
  EXPECT_EQ(c.lambda_cyc_B, 10.0);
  for (PairTag t : kAllPairTags) {
    EXPECT_EQ(c.lambda_p_of(t), 0.25);
    EXPECT_EQ(c.lambda_ep_of(t), 0.0);
    EXPECT_EQ(c.lambda_ei_of(t), 0.0);
  }
}

TEST(Presets, CycleEdge) {
  const auto c = builtin_config("cycle+edge");
  EXPECT_EQ(c.lambda_cyc_A, 10.0);
  EXPECT_EQ(c.lambda_cyc_B, 5.0);
  EXPECT_EQ(c.lambda_ep_of(PairTag::afb), 100.0);
  EXPECT_EQ(c.lambda_ep_of(PairTag::farb), 100.0);
  EXPECT_EQ(c.lambda_ep_of(PairTag::bfa), 0.0);
  EXPECT_EQ(c.lambda_ep_of(PairTag::fbra), 0.0);
  EXPECT_EQ(c.lambda_ei_of(PairTag::bfa), 10.0);
  EXPECT_EQ(c.lambda_ei_of(PairTag::fbra), 10.0);
  EXPECT_EQ(c.lambda_ei_of(PairTag::afb), 0.0);
  EXPECT_EQ(c.lambda_ei_of(PairTag::farb), 0.0);
  for (PairTag t : kAllPairTags) EXPECT_EQ(c.lambda_p_of(t), 0.0);
}

TEST(Presets, SharedConstants) {
  for (const char* name : {"cycle", "cycle+pdist", "cycle+edge"}) {
    const auto c = builtin_config(name);
    EXPECT_EQ(c.base_lr, 0.0002) << name;
    EXPECT_EQ(c.beta1, 0.5) << name;
    EXPECT_EQ(c.n_iter, 100) << name;
    EXPECT_EQ(c.n_iter_decay, 100) << name;
    EXPECT_EQ(c.pool_size, 50) << name;
  }
}

TEST(Presets, UnknownNameThrows) {
  try {
    builtin_config("cycle+magic");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "preset");
  }
}

TEST(Schedule, Anchors) {
  const LrSchedule s{100, 100, 0.0002};
  EXPECT_EQ(learning_rate_at(s, 0), 0.0002);
  EXPECT_EQ(learning_rate_at(s, 99), 0.0002);
  EXPECT_EQ(learning_rate_at(s, 150), 0.0001);
  EXPECT_EQ(learning_rate_at(s, 200), 0.0);
  EXPECT_EQ(learning_rate_at(s, 1000), 0.0);
}

TEST(Schedule, NonIncreasing) {
  for (auto s : {LrSchedule{100, 100, 0.0002}, LrSchedule{3, 7, 0.01}, LrSchedule{1, 1, 1.0}}) {
    double prev = learning_rate_at(s, 0);
    for (int e = 1; e <= s.n_iter + s.n_iter_decay; ++e) {
      const double lr = learning_rate_at(s, e);
      EXPECT_LE(lr, prev);
      prev = lr;
    }
    EXPECT_EQ(learning_rate_at(s, s.n_iter + s.n_iter_decay), 0.0);
  }
}

TEST(ConfigFile, EmptyWithPresetEqualsPreset) {
  EXPECT_EQ(parse_experiment_config("preset = cycle\n"), builtin_config("cycle"));
  EXPECT_EQ(parse_experiment_config("# comment only\npreset = cycle+edge  # trailing\n"),
            builtin_config("cycle+edge"));
}

TEST(ConfigFile, RoundTripsEveryPreset) {
  for (const char* name : {"cycle", "cycle+pdist", "cycle+edge"}) {
    const auto c = builtin_config(name);
    EXPECT_EQ(parse_experiment_config(serialize_config(c)), c) << name;
  }
  auto custom = builtin_config("cycle+edge");
  custom.lambda_p[PairTag::fbra] = 0.125;
  custom.load_size = {512, 288};
  custom.crop_size = {256, 256};
  custom.n_scales = 8;
  custom.base_lr = 1.0 / 3.0;
  custom.input_skip = true;
  EXPECT_EQ(parse_experiment_config(serialize_config(custom)), custom);
}

TEST(ConfigFile, DerivesScalesFromCrop) {
  auto c = parse_experiment_config("preset = cycle+edge\nload_size = 512x288\ncrop_size = 256\n");
  EXPECT_EQ(c.n_scales, 8);
  c = parse_experiment_config("preset = cycle+edge\ncrop_size = 192x192\n");
  EXPECT_EQ(c.n_scales, 6);
}

TEST(ConfigFile, LoadsFromDisk) {
  const auto path = std::filesystem::temp_directory_path() / "structgan_config_test.cfg";
  std::ofstream(path) << "preset = cycle\nlambda_cyc_B = 2.5\nlambda_ep_afb = 7\nflip = false\n";
  const auto c = load_experiment_config(path);
  EXPECT_EQ(c.lambda_cyc_B, 2.5);
  EXPECT_EQ(c.lambda_ep_of(PairTag::afb), 7.0);
  EXPECT_FALSE(c.flip);
  std::filesystem::remove(path);
  EXPECT_THROW(load_experiment_config(path), ConfigError);
}

namespace {

std::string error_key(const std::string& text) {
  try {
    parse_experiment_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST(ConfigFile, ErrorsNameTheKey) {
  EXPECT_EQ(error_key("preset = cycle\nlambda_cyc_A = -1\n"), "lambda_cyc_A");
  EXPECT_EQ(error_key("preset = cycle\nload_size = 64\ncrop_size = 128\n"), "crop_size");
  EXPECT_EQ(error_key("preset = cycle\nlambda_ep_xyz = 1\n"), "lambda_ep_xyz");
  EXPECT_EQ(error_key("preset = cycle\nnonsense = 1\n"), "nonsense");
  EXPECT_EQ(error_key("preset = cycle\nbeta1 = 1.5\n"), "beta1");
  EXPECT_EQ(error_key("preset = cycle\npool_size = many\n"), "pool_size");
  EXPECT_EQ(error_key("preset = nope\n"), "preset");
  EXPECT_EQ(error_key("preset = cycle\ngenerator_arch = fcdensenet\ncrop_size = 96\nn_scales = 6\n"), "n_scales");
}

TEST(ConfigHash, TracksContent) {
  auto a = builtin_config("cycle"), b = builtin_config("cycle");
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.pool_size = 49;
  EXPECT_NE(config_hash(a), config_hash(b));
}
