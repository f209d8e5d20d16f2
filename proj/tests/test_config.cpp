#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

using namespace iloci;
using namespace iloci::testing;

namespace {

std::filesystem::path write_ini(const std::string& name, const std::string& text) {
  const auto dir = temp_dir("config_" + name);
  const auto p = dir / "run.ini";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST(Config, ShippedConfigsLoadAndValidate) {
  for (const char* name : {"toy.ini", "lasa8.ini", "lasa.ini"}) {
    const auto path = source_dir() / "configs" / name;
    RunConfig c;
    ASSERT_NO_THROW(c = load_config(path)) << name;
    EXPECT_NO_THROW(c.validate()) << name;
    EXPECT_TRUE(std::filesystem::path(c.corpus_dir).is_absolute());
    EXPECT_TRUE(std::filesystem::exists(c.label_map)) << c.label_map;
  }
}

TEST(Config, RelativePathsResolveAgainstTheFile) {
  const auto p = write_ini("relative", "[paths]\ncorpus_dir=data\noutput_dir=/abs/out\n");
  const auto c = load_config(p);
  EXPECT_EQ(c.corpus_dir, (p.parent_path() / "data").string());
  EXPECT_EQ(c.output_dir, "/abs/out");
}

TEST(Config, RoundTripIsStable) {
  RunConfig c;
  c.net.learn_rate_w = 0.123456789012345;
  c.net.stop_rule = StopRule::max;
  c.engine.k_cutoff = 0.75;
  c.preprocess.arm.link_lengths = {0.3, 0.25, 0.15, 0.1};
  c.corpus_dir = "/x/y";
  c.label_map = "/x/y/m.csv";
  c.output_dir = "/x/out";
  const auto dir = temp_dir("config_roundtrip");
  save_config(c, dir / "c.ini");
  const auto back = load_config(dir / "c.ini");
  EXPECT_EQ(config_text(back), config_text(c));
  EXPECT_EQ(back.net, c.net);
  EXPECT_EQ(back.preprocess.arm.link_lengths, c.preprocess.arm.link_lengths);
}

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors) {
  EXPECT_THROW(load_config(write_ini("unknown", "[network]\nlearning_rate=0.1\n")), ConfigError);
  EXPECT_THROW(load_config(write_ini("badrule", "[network]\nstop_rule=median\n")), ConfigError);
  EXPECT_THROW(load_config(write_ini("badnum", "[network]\nhidden_dim=many\n")), ConfigError);
  EXPECT_THROW(load_config(write_ini("badarm", "[arm]\nlink_lengths=0.1 0.2\n")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/run.ini"), ConfigError);
  EXPECT_THROW(load_config(write_ini("neg", "[run]\njobs=0\n")), ConfigError);
}
