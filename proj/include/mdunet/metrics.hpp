// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mdunet/tensor.hpp"

namespace mdunet {

/// Soft segmentation map with entries in [0, 1].
using SoftMap = Plane<float>;

/// Binarization thresholds, strictly increasing in [0, 1).
struct ThresholdLadder {
  std::vector<double> taus;

  /// {0.0, 0.1, ..., 0.9}
  static ThresholdLadder standard();
  void validate() const;
};

/// pixel = 1 iff value > tau.
Mask binarize_mask(const SoftMap& m, double tau);

/// 2|a & b| / (|a| + |b|); 1 when both are empty.
double binary_dice(const Mask& a, const Mask& b);

/// Mean binary dice of the two maps binarized at every threshold of the
/// ladder. The training auxiliary loss is the negation of this value.
double staple_score(const SoftMap& pred, const SoftMap& gt,
                    const ThresholdLadder& ladder = ThresholdLadder::standard());

struct CaseScore {
  std::string case_id;
  double score = 0.0;
};

struct EvaluationReport {
  std::string task;
  std::vector<CaseScore> cases;
  double mean = 0.0;
};

EvaluationReport evaluate_dataset(const std::string& task, const std::vector<std::string>& ids,
                                  const std::vector<SoftMap>& preds,
                                  const std::vector<SoftMap>& gts,
                                  const ThresholdLadder& ladder = ThresholdLadder::standard());

/// "task,case_id,score" with a header line.
std::string evaluation_csv(const EvaluationReport& report);

}  // namespace mdunet
