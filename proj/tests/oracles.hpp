// SPDX-License-Identifier: Apache-2.0
// Independent scalar-loop reference computations used as test oracles.
// Nothing here calls into the library's loss or metric code.
#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <set>
#include <vector>

namespace oracle {

// Row-major [k][pixel] layout.
using Maps = std::vector<std::vector<double>>;

inline double dice_loss(const Maps& u, const Maps& v, const std::vector<int>& classes,
                        double eps = 1e-5) {
  double acc = 0.0;
  for (int k : classes) {
    double inter = 0.0, su = 0.0, sv = 0.0;
    for (std::size_t p = 0; p < u[k].size(); ++p) {
      inter += u[k][p] * v[k][p];
      su += u[k][p];
      sv += v[k][p];
    }
    acc += (2.0 * inter + eps) / (su + sv + eps);
  }
  return 1.0 - acc / static_cast<double>(classes.size());
}

inline double cross_entropy(const Maps& u, const Maps& v) {
  const std::size_t n = u[0].size();
  double acc = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t k = 0; k < u.size(); ++k) {
      if (v[k][p] != 0.0) acc -= v[k][p] * std::log(std::max(u[k][p], 1e-12));
    }
  }
  return acc / static_cast<double>(n);
}

inline double branch_loss(int i, const std::vector<Maps>& u, const std::vector<Maps>& v,
                          double alpha, const std::vector<double>& betas, bool cross,
                          const std::vector<int>& classes) {
  const int n = static_cast<int>(u.size());
  double l = alpha * cross_entropy(u[i], v[i]) + dice_loss(u[i], v[i], classes);
  if (cross && n > 1) {
    double c = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j != i) c += betas[j] * dice_loss(u[i], v[j], classes);
    }
    l += c / (n - 1);
  }
  return l;
}

inline double total_loss(const std::vector<Maps>& u, const std::vector<Maps>& v, double alpha,
                         const std::vector<double>& betas, bool cross,
                         const std::vector<int>& classes) {
  double t = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    t += branch_loss(static_cast<int>(i), u, v, alpha, betas, cross, classes);
  }
  return t / static_cast<double>(u.size());
}

// Per-threshold binary dice computed with explicit index sets.
inline double staple_brute_force(const std::vector<float>& pred, const std::vector<float>& gt,
                                 const std::vector<double>& taus) {
  double acc = 0.0;
  for (double tau : taus) {
    std::set<std::size_t> a, b;
    const float t = static_cast<float>(tau);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] > t) a.insert(i);
      if (gt[i] > t) b.insert(i);
    }
    std::size_t both = 0;
    for (std::size_t i : a) both += b.count(i);
    if (a.empty() && b.empty()) {
      acc += 1.0;
    } else {
      acc += 2.0 * static_cast<double>(both) / static_cast<double>(a.size() + b.size());
    }
  }
  return acc / static_cast<double>(taus.size());
}

// average >= k/N decided on exact rationals: votes/N >= k/N <=> votes*N >= k*N.
inline bool rational_at_least(long votes, long n, long k) { return votes * n >= k * n; }

}  // namespace oracle
