// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "mdunet/error.hpp"
#include "mdunet/metrics.hpp"
#include "oracles.hpp"

using namespace mdunet;

namespace {

SoftMap row(std::vector<float> v) {
  const int n = static_cast<int>(v.size());
  return SoftMap(Shape2{1, n}, std::move(v));
}

SoftMap random_soft(std::mt19937_64& rng, Shape2 s, int levels) {
  std::uniform_int_distribution<int> d(0, levels);
  SoftMap m(s);
  for (auto& v : m.data) v = static_cast<float>(d(rng)) / static_cast<float>(levels);
  return m;
}

}  // namespace

TEST_CASE("binarize_mask uses a strict threshold") {
  CHECK(binarize_mask(row({1.0f, 0.5f, 0.0f}), 0.5).data == std::vector<unsigned char>{1, 0, 0});
  CHECK(binarize_mask(row({0.2f, 0.0f, 1e-7f}), 0.0).data == std::vector<unsigned char>{1, 0, 1});
  const SoftMap zeros(Shape2{3, 3});
  for (double tau : ThresholdLadder::standard().taus) {
    const Mask m = binarize_mask(zeros, tau);
    CHECK(std::count(m.data.begin(), m.data.end(), 1) == 0);
  }
  CHECK_THROWS_AS(binarize_mask(zeros, 1.0), Error);
  CHECK_THROWS_AS(binarize_mask(zeros, -0.1), Error);
}

TEST_CASE("binary_dice conventions") {
  const Mask a(Shape2{1, 4}, {1, 1, 0, 0});
  CHECK(binary_dice(a, a) == 1.0);
  const Mask empty(Shape2{1, 4});
  CHECK(binary_dice(empty, empty) == 1.0);
  CHECK(binary_dice(a, empty) == 0.0);
  const Mask b(Shape2{1, 4}, {1, 1, 1, 0});
  CHECK(binary_dice(a, b) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(binary_dice(a, Mask(Shape2{2, 2})), Error);
}

TEST_CASE("staple_score worked example") {
  const SoftMap gt = row({1.0f, 0.5f, 0.0f});
  const SoftMap pred = row({0.9f, 0.5f, 0.1f});
  CHECK(staple_score(pred, gt) == doctest::Approx(0.88).epsilon(1e-12));
  CHECK(std::fabs(oracle::staple_brute_force(pred.data, gt.data, ThresholdLadder::standard().taus) -
                  0.88) < 1e-12);
  CHECK(staple_score(gt, gt) == 1.0);
}

TEST_CASE("staple_score of complementary masks is zero") {
  const SoftMap gt = row({1, 0, 1, 1, 0});
  SoftMap pred = gt;
  for (auto& v : pred.data) v = 1.0f - v;
  CHECK(staple_score(pred, gt) == 0.0);
}

TEST_CASE("staple_score matches the brute-force oracle and is symmetric") {
  std::mt19937_64 rng(17);
  const auto taus = ThresholdLadder::standard().taus;
  std::uniform_real_distribution<float> unit(0.0f, 1.0f);
  for (int trial = 0; trial < 50; ++trial) {
    const Shape2 s{7, 9};
    SoftMap a(s), b = random_soft(rng, s, 3);
    for (auto& v : a.data) v = unit(rng);
    const double score = staple_score(a, b);
    CHECK(std::fabs(score - oracle::staple_brute_force(a.data, b.data, taus)) < 1e-12);
    CHECK(score == staple_score(b, a));
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);
    CHECK(staple_score(a, a) == 1.0);

    // Pixel order does not matter.
    std::vector<std::size_t> perm(a.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    SoftMap pa(s), pb(s);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      pa.data[i] = a.data[perm[i]];
      pb.data[i] = b.data[perm[i]];
    }
    CHECK(staple_score(pa, pb) == score);
  }
}

TEST_CASE("ThresholdLadder validation") {
  CHECK_NOTHROW(ThresholdLadder::standard().validate());
  CHECK(ThresholdLadder::standard().taus.size() == 10);
  CHECK_THROWS_AS((ThresholdLadder{{0.2, 0.1}}.validate()), Error);
  CHECK_THROWS_AS((ThresholdLadder{{0.0, 1.0}}.validate()), Error);
  CHECK_THROWS_AS((ThresholdLadder{{}}.validate()), Error);
}

TEST_CASE("evaluate_dataset means") {
  const SoftMap gt = row({1, 0, 1});
  SoftMap inv = gt;
  for (auto& v : inv.data) v = 1.0f - v;
  auto one = evaluate_dataset("t", {"a"}, {gt}, {gt});
  CHECK(one.mean == 1.0);
  auto two = evaluate_dataset("t", {"a", "b"}, {gt, inv}, {gt, gt});
  CHECK(two.mean == 0.5);
  CHECK(evaluation_csv(two) == "task,case_id,score\nt,a,1\nt,b,0\n");

  std::mt19937_64 rng(8);
  std::vector<SoftMap> p, g;
  std::vector<std::string> ids;
  double acc = 0.0;
  for (int i = 0; i < 8; ++i) {
    p.push_back(random_soft(rng, {6, 6}, 10));
    g.push_back(random_soft(rng, {6, 6}, 3));
    ids.push_back("c" + std::to_string(i));
    acc += staple_score(p.back(), g.back());
  }
  CHECK(std::fabs(evaluate_dataset("t", ids, p, g).mean - acc / 8.0) < 1e-12);
  CHECK_THROWS_AS(evaluate_dataset("t", {"a"}, {gt, gt}, {gt}), Error);
}
