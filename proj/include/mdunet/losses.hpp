// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "mdunet/config.hpp"
#include "mdunet/tensor.hpp"

namespace mdunet {

/// Probability or one-hot map of shape (K, H, W) in double precision.
using ProbMap = Array3<double>;

inline constexpr double kDiceSmoothing = 1e-5;
inline constexpr double kLogClamp = 1e-12;

/// A loss value together with its gradient w.r.t. the prediction.
struct LossGrad {
  double value = 0.0;
  ProbMap grad;
};

/// Foreground classes 1..K-1.
std::vector<int> foreground_classes(int n_classes);

/// One-hot (K, H, W) encoding of a binary mask: class 1 where set, else 0.
ProbMap one_hot(const Mask& mask, int n_classes);

/// 1 - (1/|C|) sum_c (2 sum u v + eps) / (sum u + sum v + eps).
double dice_loss(const ProbMap& pred, const ProbMap& target, std::span<const int> classes);
LossGrad dice_loss_grad(const ProbMap& pred, const ProbMap& target,
                        std::span<const int> classes);

/// Mean over pixels of -sum_k v_k log(max(u_k, 1e-12)).
double cross_entropy_loss(const ProbMap& pred, const ProbMap& target);
LossGrad cross_entropy_loss_grad(const ProbMap& pred, const ProbMap& target);

/// Components of one branch's loss.
struct BranchLoss {
  double ce_self = 0.0;
  double dice_self = 0.0;
  std::vector<double> dice_cross;  // length N; entry i (self) is 0 and unused
  double loss = 0.0;

  /// Mean of the cross-dice terms over j != i (0 when N = 1).
  double dice_cross_mean() const;
};

struct LossReport {
  std::vector<BranchLoss> per_branch;
  double total = 0.0;
};

/// alpha * L_ce(i,i) + L_dc(i,i) + 1/(N-1) sum_{j!=i} beta_j L_dc(i,j).
/// The cross term is 0 when N = 1 or the gate is off. Cross-dice terms are
/// always measured and recorded. When grad is non-null it receives dL/du_i.
BranchLoss branch_cross_loss(int branch, std::span<const ProbMap> preds,
                             std::span<const ProbMap> labels, const LossWeights& w,
                             std::span<const int> classes, ProbMap* grad = nullptr);

/// Mean of branch losses. grads (when non-null) receives dTotal/du_i per branch.
LossReport total_training_loss(std::span<const ProbMap> preds, std::span<const ProbMap> labels,
                               const LossWeights& w, std::span<const int> classes,
                               std::vector<ProbMap>* grads = nullptr);

/// Recombines a branch loss from its recorded components.
double recombine_branch_loss(const BranchLoss& b, int branch, const LossWeights& w);

ProbMap softmax(const ProbMap& logits);
/// Chain rule through the per-pixel softmax.
ProbMap softmax_backward(const ProbMap& probs, const ProbMap& grad_probs);

}  // namespace mdunet
