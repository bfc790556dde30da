// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdunet/tensor.hpp"

namespace mdunet {

/// Topology of the multi-decoder U-Net.
struct ModelConfig {
  std::vector<int> stage_channels{16, 32, 48, 64, 64};
  int n_decoders = 3;
  int n_classes = 2;
  int in_channels = 1;
  double norm_epsilon = 1e-5;

  int downsampling_steps() const {
    return static_cast<int>(stage_channels.size()) - 1;
  }
  /// Spatial sizes must be multiples of this.
  int grid_multiple() const { return 1 << downsampling_steps(); }

  /// Throws InvalidConfig when an invariant is violated.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Coefficients of the per-branch loss: alpha scales cross-entropy, betas
/// scale the dice terms against the other branches' labels.
struct LossWeights {
  double alpha = 1.0;
  std::vector<double> betas;
  bool cross_enabled = true;

  static LossWeights uniform(int n_branches, double alpha = 1.0) {
    return {alpha, std::vector<double>(static_cast<std::size_t>(n_branches), 1.0), true};
  }
  void validate(int n_branches) const;
};

/// Target assignment: decoder i learns consensus level i+1, rater i, or a
/// single fixed consensus level shared by every decoder.
enum class LabelMode { Consensus, Raw, FixedLevel };

struct TrainSchedule {
  double base_lr = 3e-4;
  int warmup_epochs = 10;
  double weight_decay = 1e-5;
  int cross_enable_epoch = 20;
  int total_epochs = 200;
  std::uint64_t seed = 0;
  bool beta_adapt = true;
  int batch_size = 4;
  double val_fraction = 0.2;
  LabelMode label_mode = LabelMode::Consensus;
  int fixed_level = 1;  // used by LabelMode::FixedLevel, 1-based

  void validate() const;
};

struct EnsembleRun {
  double alpha = 1.0;
  std::vector<double> betas;  // empty means all ones
  std::uint64_t seed = 0;
};

struct EnsembleSpec {
  std::vector<EnsembleRun> runs;

  /// Three runs varying alpha and seed around the given base.
  static EnsembleSpec default_for(double alpha, std::uint64_t seed, int n_runs = 3);
};

/// Parameters of the synthetic multi-rater phantom generator.
struct SynthParams {
  int n_cases = 8;
  int n_raters = 3;
  int height = 32;
  int width = 32;
  double ambiguity = 0.3;
  std::uint64_t seed = 7;
  std::string modality = "MR";
};

struct PreprocessParams {
  double ct_window_lo = -100.0;
  double ct_window_hi = 300.0;
};

}  // namespace mdunet
