// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mdunet/error.hpp"
#include "mdunet/net.hpp"
#include "ops.hpp"

using namespace mdunet;

namespace {

ModelConfig default_config(int n) {
  ModelConfig c;
  c.n_decoders = n;
  return c;
}

Tensor random_image(std::uint64_t seed, int c, int h, int w) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  Tensor t(c, h, w);
  for (auto& v : t.data) v = d(rng);
  return t;
}

bool any_grad(const Param& p) {
  for (float g : p.grad) {
    if (g != 0.0f) return true;
  }
  return false;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("build_model topology") {
  const MultiDecoderNet three(default_config(3), 0);
  const MultiDecoderNet one(default_config(1), 0);
  CHECK(three.n_decoders() == 3);
  CHECK(parameter_count(three) < 3 * parameter_count(one));
  CHECK(parameter_count(three) > parameter_count(one));

  ModelConfig small;
  small.stage_channels = {16, 32};
  small.n_decoders = 1;
  const MultiDecoderNet minimal(small, 0);
  CHECK(minimal.config().downsampling_steps() == 1);
  CHECK(minimal.config().grid_multiple() == 2);

  const MultiDecoderNet seven(default_config(7), 0);
  CHECK(seven.n_decoders() == 7);
  CHECK(seven.params().index_of("decoder6.head.weight") >= 0);
  CHECK(seven.params().index_of("decoder7.head.weight") < 0);
}

TEST_CASE("parameter_count properties") {
  CHECK(parameter_count(MultiDecoderNet(default_config(3), 1)) ==
        parameter_count(MultiDecoderNet(default_config(3), 2)));
  ModelConfig wide = default_config(3);
  for (auto& c : wide.stage_channels) c *= 2;
  CHECK(parameter_count(MultiDecoderNet(wide, 0)) > parameter_count(MultiDecoderNet(default_config(3), 0)));

  // Hand count for the smallest config: stage(1->2) + decoder stage(4->2) + head(2->2).
  ModelConfig tiny;
  tiny.stage_channels = {2, 2};
  tiny.n_decoders = 1;
  const std::size_t group_1_2 = 2 * 1 * 9 + 2 + 2 + 2;  // conv + bias + scale + shift
  const std::size_t group_2_2 = 2 * 2 * 9 + 2 + 2 + 2;
  const std::size_t group_4_2 = 2 * 4 * 9 + 2 + 2 + 2;
  const std::size_t enc = (group_1_2 + group_2_2 + 2 * 1 + 2) + (2 * group_2_2);
  const std::size_t dec = group_4_2 + group_2_2 + (2 * 4 + 2) + (2 * 2 + 2);
  CHECK(parameter_count(MultiDecoderNet(tiny, 0)) == enc + dec);
}

TEST_CASE("build_model rejects invalid configs") {
  ModelConfig c;
  c.stage_channels = {16, 0, 32};
  CHECK_THROWS_AS(MultiDecoderNet(c, 0), Error);
  c = ModelConfig{};
  c.stage_channels = {16};
  CHECK_THROWS_AS(MultiDecoderNet(c, 0), Error);
  c = ModelConfig{};
  c.n_decoders = 0;
  CHECK_THROWS_AS(MultiDecoderNet(c, 0), Error);
  c = ModelConfig{};
  c.n_classes = 1;
  CHECK_THROWS_AS(MultiDecoderNet(c, 0), Error);
}

TEST_CASE("forward_all shapes and softmax normalization") {
  const MultiDecoderNet net(default_config(3), 0);
  const auto out = net.forward_all(random_image(1, 1, 64, 64));
  REQUIRE(out.probs.size() == 3);
  for (const auto& p : out.probs) {
    CHECK(p.channels == 2);
    CHECK(p.height == 64);
    CHECK(p.width == 64);
    for (std::size_t i = 0; i < p.plane(); ++i) {
      const float a = p.data[i], b = p.data[p.plane() + i];
      CHECK(a >= 0.0f);
      CHECK(b <= 1.0f);
      CHECK(std::fabs(a + b - 1.0) < 1e-6);
    }
  }
  CHECK(out.mean_foreground.shape == Shape2{64, 64});
  for (std::size_t i = 0; i < out.mean_foreground.size(); ++i) {
    const double m = (static_cast<double>(out.probs[0].data[4096 + i]) + out.probs[1].data[4096 + i] +
                      out.probs[2].data[4096 + i]) / 3.0;
    CHECK(std::fabs(out.mean_foreground.data[i] - m) < 1e-7);
  }
}

TEST_CASE("output size equals input size across legal shapes") {
  ModelConfig c;
  c.stage_channels = {4, 6, 8};
  c.n_decoders = 2;
  c.n_classes = 3;
  c.in_channels = 2;
  const MultiDecoderNet net(c, 5);
  for (auto [h, w] : {std::pair{4, 4}, {8, 12}, {20, 8}}) {
    const auto out = net.forward_all(random_image(2, 2, h, w));
    for (const auto& p : out.probs) {
      CHECK(p.height == h);
      CHECK(p.width == w);
      CHECK(p.channels == 3);
      for (std::size_t i = 0; i < p.plane(); ++i) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += p.data[k * p.plane() + i];
        CHECK(std::fabs(s - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("forward_all rejects illegal shapes with expected-vs-actual") {
  const MultiDecoderNet net(default_config(3), 0);
  try {
    net.forward_all(Tensor(1, 40, 64));
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ShapeMismatch);
    const std::string msg = e.what();
    CHECK(msg.find("(1,40,64)") != std::string::npos);
    CHECK(msg.find("16") != std::string::npos);
  }
  CHECK_THROWS_AS(net.forward_all(Tensor(2, 64, 64)), Error);
  // 48 = 3 * 16 is a legal height.
  CHECK_NOTHROW(net.forward_all(Tensor(1, 48, 64)));
}

TEST_CASE("encoder is shared, decoders are disjoint") {
  MultiDecoderNet net(default_config(3), 0);
  const Tensor img = random_image(3, 1, 32, 32);
  const auto base = net.forward_all(img);

  auto& enc = net.params()[net.params().index_of("encoder.stage1.conv1.weight")];
  const float saved = enc.value[5];
  enc.value[5] += 0.5f;
  const auto after_enc = net.forward_all(img);
  for (int b = 0; b < 3; ++b) CHECK(after_enc.probs[b].data != base.probs[b].data);
  enc.value[5] = saved;
  CHECK(net.forward_all(img).probs[0].data == base.probs[0].data);

  auto& dec = net.params()[net.params().index_of("decoder2.stage0.conv2.weight")];
  dec.value[3] += 0.5f;
  const auto after_dec = net.forward_all(img);
  CHECK(after_dec.probs[0].data == base.probs[0].data);
  CHECK(after_dec.probs[1].data == base.probs[1].data);
  CHECK(after_dec.probs[2].data != base.probs[2].data);
}

TEST_CASE("same seed and input give bitwise-identical outputs") {
  const Tensor img = random_image(4, 1, 32, 32);
  const auto a = MultiDecoderNet(default_config(2), 9).forward_all(img);
  const auto b = MultiDecoderNet(default_config(2), 9).forward_all(img);
  for (int i = 0; i < 2; ++i) CHECK(a.probs[i].data == b.probs[i].data);
  const auto c = MultiDecoderNet(default_config(2), 10).forward_all(img);
  CHECK(c.probs[0].data != a.probs[0].data);
}

TEST_CASE("gradient of one branch leaves other decoders untouched") {
  MultiDecoderNet net(default_config(3), 0);
  TapePtr tape;
  const auto out = net.forward_train(random_image(5, 1, 32, 32), tape);
  std::mt19937_64 rng(6);
  std::normal_distribution<float> d;
  Tensor g(2, 32, 32);
  for (auto& v : g.data) v = d(rng);
  net.params().zero_grad();
  net.backward(*tape, {Tensor{}, g, Tensor{}});
  bool encoder_moved = false;
  for (const auto& p : net.params().all()) {
    if (p.name.starts_with("decoder0.") || p.name.starts_with("decoder2.")) {
      CHECK_MESSAGE(!any_grad(p), p.name);
    }
    if (p.name.starts_with("encoder.")) encoder_moved = encoder_moved || any_grad(p);
  }
  CHECK(encoder_moved);
  CHECK(any_grad(net.params()[net.params().index_of("decoder1.head.weight")]));
}

TEST_CASE("network gradients match central differences") {
  ModelConfig c;
  c.stage_channels = {3, 4, 5};
  c.n_decoders = 2;
  c.in_channels = 2;
  MultiDecoderNet net(c, 3);
  const Tensor img = random_image(7, 2, 8, 8);
  std::mt19937_64 rng(8);
  std::normal_distribution<float> d;
  std::vector<Tensor> weights(2, Tensor(2, 8, 8));
  for (auto& w : weights) {
    for (auto& v : w.data) v = d(rng);
  }
  // objective = sum_b <weights_b, probs_b>
  const auto objective = [&] {
    const auto out = net.forward_all(img);
    return dot(out.probs[0], weights[0]) + dot(out.probs[1], weights[1]);
  };
  TapePtr tape;
  const auto out = net.forward_train(img, tape);
  std::vector<Tensor> grad_logits;
  for (int b = 0; b < 2; ++b) grad_logits.push_back(ops::softmax_backward(out.probs[b], weights[b]));
  net.params().zero_grad();
  net.backward(*tape, grad_logits);

  double num = 0.0, den = 0.0;
  std::uniform_int_distribution<std::size_t> pick(0, 1000000);
  for (auto& p : net.params().all()) {
    for (int s = 0; s < 3; ++s) {
      const std::size_t i = pick(rng) % p.size();
      const float orig = p.value[i];
      const float h = 1e-2f;
      p.value[i] = orig + h;
      const double fp = objective();
      p.value[i] = orig - h;
      const double fm = objective();
      p.value[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      num += (fd - p.grad[i]) * (fd - p.grad[i]);
      den += fd * fd;
    }
  }
  // float32 forward plus ReLU / max-pool kinks: loose bound, catches wiring errors.
  CHECK(std::sqrt(num / den) < 5e-2);
}

TEST_CASE("bilinear upsampling values and adjointness") {
  Tensor x2(1, 2, 2);
  x2.data = {0, 1, 0, 1};
  const Tensor y = ops::upsample2_forward(x2);
  CHECK(y.height == 4);
  CHECK(y(0, 0, 0) == 0.0f);
  CHECK(y(0, 0, 1) == doctest::Approx(0.25));
  CHECK(y(0, 0, 2) == doctest::Approx(0.75));
  CHECK(y(0, 3, 3) == 1.0f);

  const Tensor a = random_image(11, 3, 5, 6);
  const Tensor b = random_image(12, 3, 10, 12);
  CHECK(dot(ops::upsample2_forward(a), b) ==
        doctest::Approx(dot(a, ops::upsample2_backward(b, a.spatial()))).epsilon(1e-5));
}

TEST_CASE("max pooling routes gradient to the argmax") {
  Tensor x(1, 2, 2);
  x.data = {1, 4, 3, 2};
  std::vector<int> idx;
  const Tensor y = ops::maxpool2_forward(x, &idx);
  CHECK(y.data[0] == 4.0f);
  Tensor g(1, 1, 1);
  g.data = {2.0f};
  const Tensor dx = ops::maxpool2_backward(idx, 1, {2, 2}, g);
  CHECK(dx.data == std::vector<float>{0, 2, 0, 0});
}
