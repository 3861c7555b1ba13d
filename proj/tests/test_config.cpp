#include <gtest/gtest.h>

#include "ulab/config.hpp"

namespace ulab {
namespace {

const char* kMinimal = "[experiment]\nseeds = 1, 2\n";

ConfigError error_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError for:\n" << text;
  return ConfigError("none");
}

TEST(Config, MinimalUsesDefaults) {
  const auto c = parse_config_text(kMinimal);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.dataset.n_train, 2000u);
  EXPECT_EQ(c.train.epochs, 60);
  EXPECT_DOUBLE_EQ(c.holdout.lr, c.train.base_lr / 10.0);
  EXPECT_TRUE(c.has_block("experiment"));
  EXPECT_FALSE(c.has_block("mem"));
}

TEST(Config, ParsesValuesAndComments) {
  const auto c = parse_config_text(
      "# leading comment\n[experiment]\nseeds = 7\noutput_dir = runs/a  # trailing\n"
      "; another comment\n[model]\nhidden = 32, 16\nactivation = tanh\n"
      "[train]\nschedule = multistep\nmilestones = 10, 20\nfactor = 0.5\n"
      "[rum]\napproaches = rum_f, vanilla\nproxies = holdout_retraining\n");
  EXPECT_EQ(c.output_dir, "runs/a");
  EXPECT_EQ(c.model.hidden, (std::vector<int>{32, 16}));
  EXPECT_EQ(c.model.activation, Activation::tanh);
  EXPECT_EQ(c.train.schedule.kind, ScheduleKind::multistep);
  EXPECT_EQ(c.train.schedule.milestones, (std::vector<int>{10, 20}));
  EXPECT_EQ(c.rum.approaches, (std::vector<Approach>{Approach::rum_f, Approach::vanilla}));
  EXPECT_EQ(c.block_lines.at("model"), 6);
}

TEST(Config, ErrorsCarryLineAndField) {
  auto e = error_of(std::string(kMinimal) + "[dataset]\nnoise_fraction = lots\n");
  EXPECT_EQ(e.line(), 4);
  EXPECT_EQ(e.field(), "dataset.noise_fraction");

  e = error_of(std::string(kMinimal) + "[dataset]\nn_clases = 3\n");
  EXPECT_EQ(e.line(), 4);
  EXPECT_EQ(e.field(), "dataset.n_clases");

  e = error_of(std::string(kMinimal) + "[datset]\n");
  EXPECT_EQ(e.line(), 3);

  e = error_of(std::string(kMinimal) + "[train]\nepochs = 3\nepochs = 4\n");
  EXPECT_EQ(e.line(), 5);
  EXPECT_EQ(e.field(), "train.epochs");

  e = error_of("seeds = 1\n");
  EXPECT_EQ(e.line(), 1);

  e = error_of(std::string(kMinimal) + "[train]\njust words\n");
  EXPECT_EQ(e.line(), 4);

  e = error_of(std::string(kMinimal) + "[unlearn]\nbeta = 0.2\n");
  EXPECT_EQ(e.line(), 3);
  EXPECT_EQ(e.field(), "unlearn");

  e = error_of(std::string(kMinimal) + "[rum]\nk = 1\n");
  EXPECT_EQ(e.field(), "rum");

  e = error_of(std::string(kMinimal) + "[unlearn]\nalgorithms = retrain\n");
  EXPECT_EQ(e.field(), "unlearn.algorithms");
}

TEST(Config, RequiredBlocks) {
  EXPECT_THROW(parse_config_text("[dataset]\nn_classes = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[experiment]\noutput_dir = x\n"), ConfigError);
  const auto c = parse_config_text(kMinimal);
  EXPECT_THROW(require_blocks(c, {"experiment", "mem"}), ConfigError);
  EXPECT_NO_THROW(require_blocks(c, {"experiment"}));
  EXPECT_THROW(load_config("/nonexistent/config.ini"), ConfigError);
}

TEST(Config, DigestTracksResultAffectingValues) {
  const auto a = parse_config_text(kMinimal);
  const auto b = parse_config_text("[experiment]\nseeds = 9\noutput_dir = elsewhere\n");
  EXPECT_EQ(config_digest(a), config_digest(b));
  const auto c = parse_config_text(std::string(kMinimal) + "[train]\nepochs = 61\n");
  EXPECT_NE(config_digest(a), config_digest(c));
  // spelling the default explicitly changes nothing
  const auto d = parse_config_text(std::string(kMinimal) + "[train]\nepochs = 60\n");
  EXPECT_EQ(config_digest(a), config_digest(d));
}

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"default.ini", "small.ini"}) {
    const auto c = load_config(std::string(ULAB_SOURCE_DIR) + "/configs/" + name);
    EXPECT_FALSE(c.seeds.empty()) << name;
  }
  const auto def = load_config(std::string(ULAB_SOURCE_DIR) + "/configs/default.ini");
  EXPECT_EQ(def.seeds.size(), 5u);
  EXPECT_EQ(def.dataset.n_train, 2000u);
  EXPECT_DOUBLE_EQ(def.dataset.noise_fraction, 0.1);
}

}  // namespace
}  // namespace ulab
