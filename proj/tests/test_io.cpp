// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mdunet/checkpoint.hpp"
#include "mdunet/datapipe.hpp"
#include "mdunet/error.hpp"
#include "mdunet/run_config.hpp"

using namespace mdunet;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mdunet_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const auto& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("dataset round trip is exact") {
  const fs::path root = scratch("roundtrip");
  SynthParams p;
  p.n_cases = 3;
  p.n_raters = 4;
  p.height = 20;
  p.width = 24;
  auto cases = synth_generate(p);
  cases[1] = preprocess_case(cases[1], {}, 16);
  save_dataset(root, cases);
  const auto loaded = load_dataset(root);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].case_id == cases[i].case_id);
    CHECK(loaded[i].image == cases[i].image);
    CHECK(loaded[i].raters == cases[i].raters);
    CHECK(loaded[i].crop == cases[i].crop);
  }
  CHECK(fs::file_size(root / "case_000" / "image.f32") == 4u * 20 * 24);
  CHECK(fs::file_size(root / "case_000" / "rater_03.u8") == 20u * 24);
}

TEST_CASE("image.f32 is little-endian float32") {
  const fs::path root = scratch("endian");
  CaseRecord c;
  c.case_id = "one";
  c.image = Tensor(1, 1, 2);
  c.image.data = {1.0f, -2.5f};
  c.raters = {Mask(Shape2{1, 2}, {1, 0})};
  save_dataset(root, {c});
  const std::string bytes = slurp(root / "one" / "image.f32");
  const unsigned char expect[8] = {0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x20, 0xc0};
  REQUIRE(bytes.size() == 8);
  CHECK(std::memcmp(bytes.data(), expect, 8) == 0);
}

TEST_CASE("load errors are structured") {
  const fs::path root = scratch("errors");
  fs::create_directories(root / "lonely");
  const std::string msg = error_of([&] { load_dataset(root); });
  CHECK(msg.find((root / "lonely" / "meta.json").string()) != std::string::npos);

  const fs::path bad = scratch("badshape");
  CaseRecord c;
  c.case_id = "case_bad";
  c.image = Tensor(1, 4, 4);
  c.raters = {Mask(Shape2{4, 4})};
  save_dataset(bad, {c});
  std::ofstream(bad / "case_bad" / "rater_00.u8", std::ios::binary) << "short";
  const std::string m2 = error_of([&] { load_dataset(bad); });
  CHECK(m2.find("case_bad") != std::string::npos);

  try {
    load_dataset(root / "nope");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::MissingData);
  }
}

TEST_CASE("prediction round trip is bitwise") {
  const fs::path root = scratch("pred");
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SoftMap m(Shape2{13, 7});
  for (auto& v : m.data) v = u(rng);
  m.data[0] = 1e-30f;
  save_prediction(root, "abc", m);
  const SoftMap back = load_prediction(root, "abc");
  CHECK(back.shape == m.shape);
  CHECK(std::memcmp(back.data.data(), m.data.data(), m.size() * sizeof(float)) == 0);
  CHECK_THROWS_AS(load_prediction(root, "missing"), Error);
}

TEST_CASE("checkpoint round trip") {
  const fs::path root = scratch("ckpt");
  ModelConfig cfg;
  cfg.stage_channels = {4, 8, 8};
  cfg.n_decoders = 2;
  const MultiDecoderNet net(cfg, 42);
  save_checkpoint(root / "m.ckpt", net, 42);
  const MultiDecoderNet back = load_checkpoint(root / "m.ckpt");
  CHECK(back.config() == cfg);
  REQUIRE(back.params().all().size() == net.params().all().size());
  for (std::size_t k = 0; k < net.params().all().size(); ++k) {
    CHECK(back.params().all()[k].name == net.params().all()[k].name);
    CHECK(back.params().all()[k].value == net.params().all()[k].value);
  }
  const std::string bytes = slurp(root / "m.ckpt");
  CHECK(bytes.substr(0, 8) == "MDUNETCK");
  CHECK(bytes.size() == 16 + (static_cast<unsigned char>(bytes[12]) |
                              static_cast<unsigned char>(bytes[13]) << 8 |
                              static_cast<unsigned char>(bytes[14]) << 16) +
                            4 * net.parameter_count());

  std::ofstream(root / "junk.ckpt") << "not a checkpoint at all";
  CHECK_THROWS_AS(load_checkpoint(root / "junk.ckpt"), Error);
  CHECK_THROWS_AS(load_checkpoint(root / "absent.ckpt"), Error);
}

TEST_CASE("run config: defaults, unknown keys, overrides") {
  const RunConfig def = parse_run_config("{}");
  CHECK(def.model.stage_channels == std::vector<int>{16, 32, 48, 64, 64});
  CHECK(def.schedule.base_lr == 3e-4);
  CHECK(def.schedule.warmup_epochs == 10);
  CHECK(def.schedule.weight_decay == 1e-5);
  CHECK(def.schedule.cross_enable_epoch == 20);

  CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})"), Error);
  CHECK_THROWS_AS(parse_run_config(R"({"schedule": {"epochs": 3}})"), Error);
  CHECK_THROWS_AS(parse_run_config(R"({"loss": {"betas": [1, 1]}})"), Error);
  CHECK_THROWS_AS(parse_run_config(R"({"model": {"n_classes": 1}})"), Error);
  CHECK_THROWS_AS(parse_run_config("not json"), Error);

  RunConfig c = def;
  apply_override(c, "schedule.total_epochs", "7");
  apply_override(c, "loss.betas", "[0.5, 1, 1.5]");
  CHECK(c.schedule.total_epochs == 7);
  CHECK(c.loss.betas == std::vector<double>{0.5, 1, 1.5});
  CHECK_THROWS_AS(apply_override(c, "schedule.nope", "1"), Error);
  CHECK_THROWS_AS(apply_override(c, "schedule.total_epochs", "0"), Error);
  CHECK(c.schedule.total_epochs == 7);

  // Re-feeding the resolved config reproduces it.
  const std::string resolved = run_config_to_json(c);
  CHECK(run_config_to_json(parse_run_config(resolved)) == resolved);
}
