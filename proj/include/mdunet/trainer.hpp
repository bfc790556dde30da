// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mdunet/config.hpp"
#include "mdunet/datapipe.hpp"
#include "mdunet/losses.hpp"
#include "mdunet/metrics.hpp"
#include "mdunet/net.hpp"

namespace mdunet {

/// base_lr * (epoch + 1) / warmup_epochs during warmup, base_lr afterwards.
double warmup_lr(int epoch, const TrainSchedule& s);

/// beta_j = L_j / mean(L); the result has mean 1.
std::vector<double> adapt_betas(std::span<const double> pretrain_losses);

/// Adam with bias-corrected moments and decoupled weight decay.
class AdamW {
 public:
  AdamW(const ParamStore& params, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);
  void step(ParamStore& params, double lr);
  long steps() const noexcept { return t_; }

 private:
  double weight_decay_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  bool cross_enabled = false;
  std::vector<double> betas;
  std::vector<BranchLoss> branches;  // means over the epoch's training samples
  double total = 0.0;
  double val_score = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_score = 0.0;
  std::vector<std::vector<float>> best_weights;
  LossWeights final_weights;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Per-decoder training targets for one case.
std::vector<Mask> branch_targets(const CaseRecord& c, int n_decoders, const TrainSchedule& s);

/// Phased training. Epochs before cross_enable_epoch optimize each branch
/// against its own target only; at the boundary betas may be re-derived from
/// the last per-branch losses; afterwards the full cross loss is used. The
/// weights with the best validation staple score are kept in the result,
/// while the network itself ends with the final-epoch weights.
TrainResult train(MultiDecoderNet& net, const std::vector<CaseRecord>& dataset,
                  const TrainSchedule& schedule, LossWeights weights,
                  const EpochCallback& on_epoch = {});

/// argmax of validation scores, earliest epoch on ties.
int select_best_epoch(std::span<const EpochRecord> history);

void restore_weights(MultiDecoderNet& net, const std::vector<std::vector<float>>& weights);
std::vector<std::vector<float>> snapshot_weights(const MultiDecoderNet& net);

/// Branch-averaged foreground map, padded to the grid and cropped back.
SoftMap predict(const MultiDecoderNet& net, const Tensor& image);
SoftMap predict_case(const MultiDecoderNet& net, const CaseRecord& c);

/// Mean of per-model predictions.
SoftMap ensemble_predict(std::span<const MultiDecoderNet* const> models, const Tensor& image);
SoftMap ensemble_predict_case(std::span<const MultiDecoderNet* const> models, const CaseRecord& c);

/// Mean staple score of predictions against averaged rater masks.
double mean_staple(const MultiDecoderNet& net, const std::vector<CaseRecord>& cases,
                   std::span<const std::size_t> subset);

/// CSV header and rows for the per-epoch training log.
std::string train_log_header(int n_branches);
std::string train_log_row(const EpochRecord& r);
/// Loss-report rows: epoch,branch,L_ce,L_dc_self,L_dc_cross_mean,L_loss,total
std::string loss_report_header();
std::string loss_report_rows(const EpochRecord& r);

}  // namespace mdunet
