// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mdunet/error.hpp"
#include "mdunet/losses.hpp"
#include "oracles.hpp"

using namespace mdunet;

namespace {

ProbMap random_logits(std::mt19937_64& rng, int k, int h, int w, double scale = 2.0) {
  std::normal_distribution<double> d(0.0, scale);
  ProbMap l(k, h, w);
  for (auto& v : l.data) v = d(rng);
  return l;
}

Mask random_mask(std::mt19937_64& rng, int h, int w, double p = 0.4) {
  std::bernoulli_distribution b(p);
  Mask m(Shape2{h, w});
  for (auto& v : m.data) v = b(rng);
  return m;
}

oracle::Maps to_maps(const ProbMap& p) {
  oracle::Maps m(static_cast<std::size_t>(p.channels));
  for (int c = 0; c < p.channels; ++c) {
    const auto ch = p.channel(c);
    m[static_cast<std::size_t>(c)].assign(ch.begin(), ch.end());
  }
  return m;
}

}  // namespace

TEST_CASE("dice_loss: perfect overlap, disjoint and worked example") {
  Mask t(Shape2{2, 2}, {1, 0, 1, 0});
  const ProbMap target = one_hot(t, 2);
  const std::vector<int> fg{1};
  CHECK(std::fabs(dice_loss(target, target, fg)) < 1e-6);

  ProbMap empty(2, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) empty.data[i] = 1.0;  // all background
  CHECK(std::fabs(dice_loss(empty, target, fg) - 1.0) < 1e-5);

  ProbMap half(2, 2, 2, 0.5);
  // intersection 1.0, sums 2.0 + 2 -> dice 0.5
  CHECK(std::fabs(dice_loss(half, target, fg) - 0.5) < 1e-5);
  CHECK(dice_loss(half, target, fg) ==
        doctest::Approx(oracle::dice_loss(to_maps(half), to_maps(target), fg)).epsilon(1e-14));
}

TEST_CASE("dice_loss rejects bad inputs") {
  const ProbMap a(2, 4, 4, 0.5);
  const ProbMap b(2, 4, 2, 0.5);
  const std::vector<int> fg{1};
  CHECK_THROWS_AS(dice_loss(a, b, fg), Error);
  CHECK_THROWS_AS(dice_loss(a, a, fg), Error);  // 0.5 is not one-hot
  const ProbMap t = one_hot(Mask(Shape2{4, 4}), 2);
  CHECK_THROWS_AS(dice_loss(a, t, std::vector<int>{}), Error);
}

TEST_CASE("cross_entropy_loss: closed forms") {
  std::mt19937_64 rng(3);
  const ProbMap t = one_hot(random_mask(rng, 6, 5), 2);
  CHECK(cross_entropy_loss(t, t) == 0.0);
  const ProbMap uniform(2, 6, 5, 0.5);
  CHECK(cross_entropy_loss(uniform, t) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(cross_entropy_loss(uniform, t) ==
        doctest::Approx(oracle::cross_entropy(to_maps(uniform), to_maps(t))).epsilon(1e-14));

  ProbMap near = t;
  const std::size_t n = near.plane();
  for (std::size_t i = 0; i < n; ++i) {
    if (t.data[n + i] == 1.0) {
      near.data[n + i] = 1.0 - 1e-12;
      near.data[i] = 1e-12;
    }
  }
  CHECK(cross_entropy_loss(near, t) < 1e-10);
  CHECK_THROWS_AS(cross_entropy_loss(uniform, ProbMap(2, 6, 4)), Error);
}

TEST_CASE("branch_cross_loss: plug-in arithmetic") {
  BranchLoss b;
  b.ce_self = 0.2;
  b.dice_self = 0.1;
  b.dice_cross = {0.0, 0.4, 0.6};
  LossWeights w = LossWeights::uniform(3);
  CHECK(recombine_branch_loss(b, 0, w) == doctest::Approx(0.8).epsilon(1e-15));
  w.cross_enabled = false;
  CHECK(recombine_branch_loss(b, 0, w) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("branch_cross_loss: N=1 has no cross term; index checks") {
  std::mt19937_64 rng(11);
  const std::vector<ProbMap> u{softmax(random_logits(rng, 2, 8, 8))};
  const std::vector<ProbMap> v{one_hot(random_mask(rng, 8, 8), 2)};
  const auto fg = foreground_classes(2);
  const LossWeights w{0.7, {1.0}, true};
  const auto b = branch_cross_loss(0, u, v, w, fg);
  CHECK(b.loss == doctest::Approx(0.7 * b.ce_self + b.dice_self).epsilon(1e-15));
  CHECK(b.dice_cross_mean() == 0.0);
  CHECK_THROWS_AS(branch_cross_loss(1, u, v, w, fg), Error);
  CHECK_THROWS_AS(branch_cross_loss(-1, u, v, w, fg), Error);
}

TEST_CASE("total_training_loss matches the scalar-loop oracle") {
  const auto fg = foreground_classes(2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<ProbMap> u, v;
    std::vector<oracle::Maps> ou, ov;
    for (int i = 0; i < 3; ++i) {
      u.push_back(softmax(random_logits(rng, 2, 8, 8)));
      v.push_back(one_hot(random_mask(rng, 8, 8), 2));
      ou.push_back(to_maps(u.back()));
      ov.push_back(to_maps(v.back()));
    }
    LossWeights w{0.8, {0.5, 1.0, 1.5}, true};
    const auto report = total_training_loss(u, v, w, fg);
    CHECK(std::fabs(report.total - oracle::total_loss(ou, ov, 0.8, w.betas, true, fg)) < 1e-10);
    for (int i = 0; i < 3; ++i) {
      const auto& b = report.per_branch[static_cast<std::size_t>(i)];
      CHECK(std::fabs(b.loss - recombine_branch_loss(b, i, w)) < 1e-12);
      CHECK(b.dice_self >= 0.0);
      CHECK(b.dice_self <= 1.0);
      CHECK(b.ce_self >= 0.0);
    }
  }
}

TEST_CASE("total_training_loss: N=1 and identical branches") {
  std::mt19937_64 rng(5);
  const auto fg = foreground_classes(2);
  const ProbMap p = softmax(random_logits(rng, 2, 8, 8));
  const ProbMap t = one_hot(random_mask(rng, 8, 8), 2);
  const std::vector<ProbMap> u1{p}, v1{t};
  const auto single = total_training_loss(u1, v1, LossWeights::uniform(1), fg);
  CHECK(single.total == single.per_branch[0].loss);

  const std::vector<ProbMap> u3{p, p, p}, v3{t, t, t};
  const auto same = total_training_loss(u3, v3, LossWeights::uniform(3), fg);
  CHECK(same.total == doctest::Approx(same.per_branch[1].loss).epsilon(1e-14));
}

TEST_CASE("permuting branches with labels and betas permutes losses") {
  std::mt19937_64 rng(21);
  const auto fg = foreground_classes(2);
  std::vector<ProbMap> u, v;
  for (int i = 0; i < 3; ++i) {
    u.push_back(softmax(random_logits(rng, 2, 8, 8)));
    v.push_back(one_hot(random_mask(rng, 8, 8), 2));
  }
  const LossWeights w{1.3, {0.2, 1.1, 1.7}, true};
  const auto base = total_training_loss(u, v, w, fg);
  const std::vector<int> perm{2, 0, 1};
  std::vector<ProbMap> up, vp;
  LossWeights wp = w;
  for (std::size_t i = 0; i < 3; ++i) {
    up.push_back(u[static_cast<std::size_t>(perm[i])]);
    vp.push_back(v[static_cast<std::size_t>(perm[i])]);
    wp.betas[i] = w.betas[static_cast<std::size_t>(perm[i])];
  }
  const auto permuted = total_training_loss(up, vp, wp, fg);
  CHECK(permuted.total == doctest::Approx(base.total).epsilon(1e-13));
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(permuted.per_branch[i].loss ==
          doctest::Approx(base.per_branch[static_cast<std::size_t>(perm[i])].loss).epsilon(1e-13));
  }
}

TEST_CASE("enabling the cross term never decreases a branch loss") {
  const auto fg = foreground_classes(2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<ProbMap> u, v;
    std::uniform_real_distribution<double> beta(0.0, 2.0);
    LossWeights w{1.0, {}, true};
    for (int i = 0; i < 4; ++i) {
      u.push_back(softmax(random_logits(rng, 2, 6, 6)));
      v.push_back(one_hot(random_mask(rng, 6, 6), 2));
      w.betas.push_back(beta(rng));
    }
    LossWeights off = w;
    off.cross_enabled = false;
    for (int i = 0; i < 4; ++i) {
      CHECK(branch_cross_loss(i, u, v, w, fg).loss >= branch_cross_loss(i, u, v, off, fg).loss);
    }
  }
}

TEST_CASE("loss gradients w.r.t. logits match central differences") {
  const auto fg = foreground_classes(2);
  std::mt19937_64 rng(99);
  ProbMap logits = random_logits(rng, 2, 8, 8);
  const ProbMap target = one_hot(random_mask(rng, 8, 8), 2);
  const auto g = dice_loss_grad(softmax(logits), target, fg);
  const ProbMap analytic = softmax_backward(softmax(logits), g.grad);
  const double h = 1e-6;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < logits.data.size(); ++i) {
    ProbMap lp = logits, lm = logits;
    lp.data[i] += h;
    lm.data[i] -= h;
    const double fd = (dice_loss(softmax(lp), target, fg) - dice_loss(softmax(lm), target, fg)) / (2 * h);
    num += (fd - analytic.data[i]) * (fd - analytic.data[i]);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) < 1e-4);
}
