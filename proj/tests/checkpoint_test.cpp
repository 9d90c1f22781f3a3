#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "lasdiff/checkpoint.hpp"
#include "lasdiff/config.hpp"
#include "lasdiff/dense_unet.hpp"
#include "lasdiff/error.hpp"

using namespace lasdiff;
namespace fs = std::filesystem;

namespace {

DenseUNetConfig tiny() {
  DenseUNetConfig c;
  c.levels = {{8, 4}, {4, 8}};
  c.attention_levels = {4};
  c.bottleneck_blocks = 1;
  c.time_dim = 8;
  c.cond = CondKind::category;
  c.cond_dim = 8;
  c.heads = 2;
  return c;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("lasdiff_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string expect_code(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "no error";
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  DenseUNet net(tiny());
  Adam opt(net.parameters(), adam_options("adamw", 1e-3));
  for (int i = 0; i < 2; ++i) {
    opt.zero_grad();
    net.forward(torch::randn({1, 1, 8, 8, 8}), torch::zeros({1, 1, 8, 8, 8}), torch::rand({1}), {})
        .pow(2)
        .mean()
        .backward();
    opt.step();
  }
  auto gen = make_generator(7);
  torch::randn({5}, gen);
  const auto ck = capture_checkpoint(net, {{"a", 1}}, {{"epoch", 3}}, &opt, &gen);
  const auto dir = temp_dir("ckpt");
  save_checkpoint(dir / "x.lasc", ck);
  const auto back = load_checkpoint(dir / "x.lasc");
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
  EXPECT_EQ(back.meta["epoch"], 3);
  EXPECT_EQ(back.config["a"], 1);

  auto cfg = tiny();
  cfg.seed = 99;
  DenseUNet other(cfg);
  restore_module(other, back);
  auto pa = net.named_parameters(), pb = other.named_parameters();
  for (const auto& p : pa) EXPECT_TRUE(torch::equal(p.value(), pb[p.key()])) << p.key();

  Adam opt2(other.parameters(), adam_options("adamw", 1e-3));
  restore_optimizer(opt2, back);
  EXPECT_EQ(opt2.steps(), 2);
  for (size_t i = 0; i < opt.first_moments().size(); ++i) {
    EXPECT_TRUE(torch::equal(opt.first_moments()[i], opt2.first_moments()[i]));
    EXPECT_TRUE(torch::equal(opt.second_moments()[i], opt2.second_moments()[i]));
  }
  auto g2 = make_generator(0);
  restore_generator(g2, back);
  EXPECT_TRUE(torch::equal(torch::randn({4}, gen), torch::randn({4}, g2)));
  fs::remove_all(dir);
}

TEST(Checkpoint, MalformedInputIsRejected) {
  DenseUNet net(tiny());
  auto bytes = encode_checkpoint(capture_checkpoint(net, {}));
  EXPECT_EQ(expect_code([&] { decode_checkpoint({}); }), "malformed-checkpoint");
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(expect_code([&] { decode_checkpoint(bad); }), "malformed-checkpoint");
  bad = bytes;
  bad[4] = 9;
  EXPECT_EQ(expect_code([&] { decode_checkpoint(bad); }), "malformed-checkpoint");
  for (size_t cut : {size_t{6}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<uint8_t> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_EQ(expect_code([&] { decode_checkpoint(t); }), "malformed-checkpoint") << cut;
  }
  bad = bytes;
  bad.push_back(0);
  EXPECT_EQ(expect_code([&] { decode_checkpoint(bad); }), "malformed-checkpoint");
}

TEST(Checkpoint, MismatchedModuleIsRejected) {
  DenseUNet net(tiny());
  const auto ck = capture_checkpoint(net, {});
  auto cfg = tiny();
  cfg.levels = {{8, 8}, {4, 8}};
  DenseUNet wider(cfg);
  EXPECT_EQ(expect_code([&] { restore_module(wider, ck); }), "checkpoint-mismatch");
  auto cfg2 = tiny();
  cfg2.cond = CondKind::none;
  DenseUNet fewer(cfg2);
  EXPECT_EQ(expect_code([&] { restore_module(fewer, ck); }), "checkpoint-mismatch");
}

TEST(Config, DefaultsAreConsistent) {
  const auto c = default_config();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.coarse, 16);
  EXPECT_EQ(c.fine, 32);
  EXPECT_DOUBLE_EQ(c.threshold(), 4.0 / 32);
  EXPECT_EQ(c.occupancy_net.resolution(), 16);
  EXPECT_EQ(c.sdf_net.resolution(), 32);
  EXPECT_DOUBLE_EQ(c.self_cond_probability, 0.5);
  EXPECT_DOUBLE_EQ(c.cond_dropout, 0.1);
  EXPECT_EQ(c.sampler.steps, 50);
  EXPECT_DOUBLE_EQ(c.sampler.guidance, 3.0);
  const auto big = default_config(64);
  EXPECT_EQ(big.fine, 128);
  EXPECT_NO_THROW(big.validate());
}

TEST(Config, InvalidCombinationsAreRejected) {
  auto c = default_config();
  c.fine = 48;
  EXPECT_EQ(expect_code([&] { c.validate(); }), "invalid-config");
  c = default_config();
  c.occupancy_net.levels[0].first = 8;
  EXPECT_EQ(expect_code([&] { c.validate(); }), "invalid-config");
}

TEST(Config, JsonRoundTrip) {
  auto c = default_config();
  c.sampler.steps = 17;
  c.occupancy_net.mode = AttentionMode::global;
  c.data.toy_shapes = 12;
  const auto dir = temp_dir("cfg");
  save_config(dir / "config.json", c);
  const auto back = load_config(dir / "config.json");
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(c));
  fs::remove_all(dir);
}

TEST(Config, EnvironmentOverridesLeaves) {
  std::map<std::string, std::string> env{{"LAS_SAMPLER_STEPS", "25"},
                                         {"LAS_SERVICE_HOST", "0.0.0.0"},
                                         {"LAS_SAMPLER_DILATE", "true"},
                                         {"LAS_UNRELATED", "1"}};
  auto j = apply_env_overrides(nlohmann::json(default_config()), [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  });
  const auto c = j.get<RunConfig>();
  EXPECT_EQ(c.sampler.steps, 25);
  EXPECT_EQ(c.service.host, "0.0.0.0");
  EXPECT_TRUE(c.sampler.dilate);
  EXPECT_FALSE(j.contains("unrelated"));
}

TEST(Config, MalformedFileIsInvalid) {
  const auto dir = temp_dir("badcfg");
  std::ofstream(dir / "config.json") << "{ not json";
  EXPECT_EQ(expect_code([&] { load_config(dir / "config.json"); }), "invalid-config");
  fs::remove_all(dir);
}
