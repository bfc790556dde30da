// SPDX-License-Identifier: Apache-2.0
#include "mdunet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mdunet/error.hpp"

namespace mdunet {
namespace {

void check_same_shape(const ProbMap& a, const ProbMap& b, const char* what) {
  if (a.channels != b.channels || a.height != b.height || a.width != b.width ||
      a.data.size() != b.data.size()) {
    fail(ErrorKind::ShapeMismatch,
         std::string(what) + ": shape (" + std::to_string(a.channels) + "," +
             std::to_string(a.height) + "," + std::to_string(a.width) + ") vs (" +
             std::to_string(b.channels) + "," + std::to_string(b.height) + "," +
             std::to_string(b.width) + ")");
  }
}

void check_one_hot(const ProbMap& t) {
  const std::size_t n = t.plane();
  for (std::size_t i = 0; i < n; ++i) {
    int ones = 0;
    for (int c = 0; c < t.channels; ++c) {
      const double v = t.data[c * n + i];
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        fail(ErrorKind::InvalidArgument, "target is not one-hot");
      }
    }
    require(ones == 1, ErrorKind::InvalidArgument, "target is not one-hot");
  }
}

void check_classes(std::span<const int> classes, int k) {
  require(!classes.empty(), ErrorKind::InvalidArgument, "dice class set is empty");
  for (int c : classes) {
    require(c >= 0 && c < k, ErrorKind::InvalidArgument, "dice class out of range");
  }
}

double dice_impl(const ProbMap& pred, const ProbMap& target, std::span<const int> classes,
                 ProbMap* grad) {
  check_same_shape(pred, target, "dice_loss");
  check_one_hot(target);
  check_classes(classes, pred.channels);
  const std::size_t n = pred.plane();
  const double inv_k = 1.0 / static_cast<double>(classes.size());
  double score = 0.0;
  if (grad) *grad = ProbMap(pred.channels, pred.height, pred.width);
  for (int c : classes) {
    const double* u = pred.data.data() + c * n;
    const double* v = target.data.data() + c * n;
    double inter = 0.0, su = 0.0, sv = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inter += u[i] * v[i];
      su += u[i];
      sv += v[i];
    }
    const double num = 2.0 * inter + kDiceSmoothing;
    const double den = su + sv + kDiceSmoothing;
    score += num / den;
    if (grad) {
      double* g = grad->data.data() + c * n;
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = -inv_k * (2.0 * v[i] * den - num) / (den * den);
      }
    }
  }
  return 1.0 - inv_k * score;
}

double ce_impl(const ProbMap& pred, const ProbMap& target, ProbMap* grad) {
  check_same_shape(pred, target, "cross_entropy_loss");
  const std::size_t n = pred.plane();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (grad) *grad = ProbMap(pred.channels, pred.height, pred.width);
  double acc = 0.0;
  for (std::size_t idx = 0; idx < pred.data.size(); ++idx) {
    const double v = target.data[idx];
    if (v == 0.0) continue;
    const double u = pred.data[idx];
    const double clamped = std::clamp(u, kLogClamp, 1.0);
    acc -= v * std::log(clamped);
    if (grad && u > kLogClamp && u < 1.0) grad->data[idx] = -v / u * inv_n;
  }
  return acc * inv_n;
}

}  // namespace

std::vector<int> foreground_classes(int n_classes) {
  std::vector<int> c;
  for (int k = 1; k < n_classes; ++k) c.push_back(k);
  return c;
}

ProbMap one_hot(const Mask& mask, int n_classes) {
  require(n_classes >= 2, ErrorKind::InvalidArgument, "one_hot needs K >= 2");
  ProbMap t(n_classes, mask.shape.height, mask.shape.width);
  const std::size_t n = mask.size();
  for (std::size_t i = 0; i < n; ++i) {
    require(mask.data[i] <= 1, ErrorKind::InvalidArgument, "mask is not binary");
    t.data[(mask.data[i] ? n : 0) + i] = 1.0;
  }
  return t;
}

double dice_loss(const ProbMap& pred, const ProbMap& target, std::span<const int> classes) {
  return dice_impl(pred, target, classes, nullptr);
}

LossGrad dice_loss_grad(const ProbMap& pred, const ProbMap& target,
                        std::span<const int> classes) {
  LossGrad r;
  r.value = dice_impl(pred, target, classes, &r.grad);
  return r;
}

double cross_entropy_loss(const ProbMap& pred, const ProbMap& target) {
  return ce_impl(pred, target, nullptr);
}

LossGrad cross_entropy_loss_grad(const ProbMap& pred, const ProbMap& target) {
  LossGrad r;
  r.value = ce_impl(pred, target, &r.grad);
  return r;
}

double BranchLoss::dice_cross_mean() const {
  if (dice_cross.size() <= 1) return 0.0;
  double acc = 0.0;
  for (double d : dice_cross) acc += d;  // self entry is 0
  return acc / static_cast<double>(dice_cross.size() - 1);
}

double recombine_branch_loss(const BranchLoss& b, int branch, const LossWeights& w) {
  double loss = w.alpha * b.ce_self + b.dice_self;
  const std::size_t n = b.dice_cross.size();
  if (w.cross_enabled && n > 1) {
    double cross = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (static_cast<int>(j) != branch) cross += w.betas[j] * b.dice_cross[j];
    }
    loss += cross / static_cast<double>(n - 1);
  }
  return loss;
}

BranchLoss branch_cross_loss(int branch, std::span<const ProbMap> preds,
                             std::span<const ProbMap> labels, const LossWeights& w,
                             std::span<const int> classes, ProbMap* grad) {
  const int n = static_cast<int>(preds.size());
  require(branch >= 0 && branch < n, ErrorKind::InvalidArgument,
          "branch index " + std::to_string(branch) + " out of range [0," + std::to_string(n) + ")");
  require(labels.size() == preds.size(), ErrorKind::InvalidArgument,
          "label count " + std::to_string(labels.size()) + " does not match branch count " +
              std::to_string(n));
  w.validate(n);
  const auto bi = static_cast<std::size_t>(branch);
  const ProbMap& u = preds[bi];

  BranchLoss out;
  out.dice_cross.assign(static_cast<std::size_t>(n), 0.0);
  const bool cross = w.cross_enabled && n > 1;
  const double cross_scale = n > 1 ? 1.0 / static_cast<double>(n - 1) : 0.0;

  if (grad) {
    auto ce = cross_entropy_loss_grad(u, labels[bi]);
    auto dc = dice_loss_grad(u, labels[bi], classes);
    out.ce_self = ce.value;
    out.dice_self = dc.value;
    *grad = std::move(dc.grad);
    for (std::size_t k = 0; k < grad->data.size(); ++k) {
      grad->data[k] += w.alpha * ce.grad.data[k];
    }
    for (int j = 0; j < n; ++j) {
      if (j == branch) continue;
      const auto ju = static_cast<std::size_t>(j);
      auto cj = dice_loss_grad(u, labels[ju], classes);
      out.dice_cross[ju] = cj.value;
      if (cross) {
        const double s = w.betas[ju] * cross_scale;
        for (std::size_t k = 0; k < grad->data.size(); ++k) grad->data[k] += s * cj.grad.data[k];
      }
    }
  } else {
    out.ce_self = cross_entropy_loss(u, labels[bi]);
    out.dice_self = dice_loss(u, labels[bi], classes);
    for (int j = 0; j < n; ++j) {
      if (j == branch) continue;
      const auto ju = static_cast<std::size_t>(j);
      out.dice_cross[ju] = dice_loss(u, labels[ju], classes);
    }
  }
  out.loss = recombine_branch_loss(out, branch, w);
  return out;
}

LossReport total_training_loss(std::span<const ProbMap> preds, std::span<const ProbMap> labels,
                               const LossWeights& w, std::span<const int> classes,
                               std::vector<ProbMap>* grads) {
  const int n = static_cast<int>(preds.size());
  require(n >= 1, ErrorKind::InvalidArgument, "no branch predictions");
  LossReport report;
  if (grads) grads->assign(static_cast<std::size_t>(n), ProbMap{});
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int i = 0; i < n; ++i) {
    ProbMap* g = grads ? &(*grads)[static_cast<std::size_t>(i)] : nullptr;
    report.per_branch.push_back(branch_cross_loss(i, preds, labels, w, classes, g));
    report.total += report.per_branch.back().loss;
    if (g) {
      for (auto& v : g->data) v *= inv_n;
    }
  }
  report.total *= inv_n;
  return report;
}

ProbMap softmax(const ProbMap& logits) {
  ProbMap p(logits.channels, logits.height, logits.width);
  const std::size_t n = logits.plane();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.data[i];
    for (int c = 1; c < logits.channels; ++c) mx = std::max(mx, logits.data[c * n + i]);
    double sum = 0.0;
    for (int c = 0; c < logits.channels; ++c) {
      p.data[c * n + i] = std::exp(logits.data[c * n + i] - mx);
      sum += p.data[c * n + i];
    }
    for (int c = 0; c < logits.channels; ++c) p.data[c * n + i] /= sum;
  }
  return p;
}

ProbMap softmax_backward(const ProbMap& probs, const ProbMap& grad_probs) {
  check_same_shape(probs, grad_probs, "softmax_backward");
  ProbMap d(probs.channels, probs.height, probs.width);
  const std::size_t n = probs.plane();
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int c = 0; c < probs.channels; ++c) dot += probs.data[c * n + i] * grad_probs.data[c * n + i];
    for (int c = 0; c < probs.channels; ++c) {
      d.data[c * n + i] = probs.data[c * n + i] * (grad_probs.data[c * n + i] - dot);
    }
  }
  return d;
}

}  // namespace mdunet
