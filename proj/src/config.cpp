// SPDX-License-Identifier: Apache-2.0
#include "mdunet/config.hpp"

#include <cmath>

#include "mdunet/error.hpp"

namespace mdunet {

void LossWeights::validate(int n_branches) const {
  require(std::isfinite(alpha) && alpha >= 0.0, ErrorKind::InvalidConfig,
          "alpha must be finite and >= 0");
  require(static_cast<int>(betas.size()) == n_branches, ErrorKind::InvalidConfig,
          "betas has " + std::to_string(betas.size()) + " entries, expected " +
              std::to_string(n_branches));
  for (double b : betas) {
    require(std::isfinite(b) && b >= 0.0, ErrorKind::InvalidConfig,
            "betas must be finite and >= 0");
  }
}

void TrainSchedule::validate() const {
  require(std::isfinite(base_lr) && base_lr > 0.0, ErrorKind::InvalidConfig, "base_lr must be > 0");
  require(warmup_epochs >= 1, ErrorKind::InvalidConfig, "warmup_epochs must be >= 1");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, ErrorKind::InvalidConfig,
          "weight_decay must be >= 0");
  require(cross_enable_epoch >= 0, ErrorKind::InvalidConfig, "cross_enable_epoch must be >= 0");
  require(total_epochs >= 1, ErrorKind::InvalidConfig, "total_epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::InvalidConfig, "batch_size must be >= 1");
  require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorKind::InvalidConfig,
          "val_fraction must be in [0, 1)");
}

EnsembleSpec EnsembleSpec::default_for(double alpha, std::uint64_t seed, int n_runs) {
  static constexpr double kAlphaScale[] = {1.0, 0.5, 2.0};
  EnsembleSpec spec;
  for (int r = 0; r < n_runs; ++r) {
    spec.runs.push_back({alpha * kAlphaScale[r % 3], {}, seed + static_cast<std::uint64_t>(r)});
  }
  return spec;
}

const char* error_kind_name(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::InvalidConfig: return "invalid_config";
    case ErrorKind::MissingData: return "missing_data";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::ShapeMismatch: return "shape_mismatch";
    case ErrorKind::Io: return "io";
    case ErrorKind::Internal: return "internal";
  }
  return "unknown";
}

}  // namespace mdunet
