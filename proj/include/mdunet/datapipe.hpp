// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mdunet/config.hpp"
#include "mdunet/metrics.hpp"
#include "mdunet/tensor.hpp"

namespace mdunet {

enum class Modality { MR, CT };

Modality parse_modality(const std::string& s);
const char* modality_name(Modality m) noexcept;

/// Region of the padded grid that holds the original image.
struct CropRecord {
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  friend bool operator==(const CropRecord&, const CropRecord&) = default;
};

/// One image and its N rater masks.
struct CaseRecord {
  std::string case_id;
  Modality modality = Modality::MR;
  Tensor image;               // (C, H, W)
  std::vector<Mask> raters;   // N masks of shape (H, W)
  std::optional<CropRecord> crop;  // set once padded

  int n_raters() const noexcept { return static_cast<int>(raters.size()); }
  /// Throws when masks disagree with the image shape or are not binary.
  void validate() const;
};

/// Nested agreement masks: levels[k-1] = (counts >= k), k = 1..N.
struct ConsensusLabels {
  std::vector<Mask> levels;
  Plane<int> counts;
};

/// Per-channel standardization to mean 0, population std 1.
Tensor zscore_normalize(const Tensor& image);

/// Clip to [lo, hi] then map affinely onto [0, 1].
Tensor ct_rescale(const Tensor& image, double lo, double hi);

struct PaddedCase {
  CaseRecord record;
  CropRecord crop;
};

/// Zero-pads the image and masks up to the next multiple on each axis,
/// splitting the padding evenly with the odd pixel at the bottom/right.
PaddedCase pad_to_grid(const CaseRecord& c, int multiple);
CropRecord grid_crop(Shape2 shape, int multiple);
Tensor pad_tensor(const Tensor& t, const CropRecord& crop, Shape2 padded);
Tensor unpad(const Tensor& t, const CropRecord& crop);
template <typename T>
Plane<T> unpad(const Plane<T>& p, const CropRecord& crop);
CaseRecord unpad_case(const CaseRecord& c, const CropRecord& crop);

/// Agreement counts and nested consensus levels from integer votes.
ConsensusLabels relabel_consensus(const std::vector<Mask>& raters);

/// Per-pixel mean of the rater masks.
SoftMap average_annotations(const std::vector<Mask>& raters);

/// Deterministic blob phantoms with boundary-perturbed rater masks.
std::vector<CaseRecord> synth_generate(const SynthParams& params);

/// Modality-specific normalization followed by grid padding.
CaseRecord preprocess_case(const CaseRecord& c, const PreprocessParams& params, int multiple);

// On-disk layout: <root>/<case_id>/{meta.json, image.f32, rater_XX.u8}.
std::vector<CaseRecord> load_dataset(const std::filesystem::path& root);
void save_dataset(const std::filesystem::path& root, const std::vector<CaseRecord>& cases);

// <root>/<case_id>/{meta.json, pred.f32}
void save_prediction(const std::filesystem::path& root, const std::string& case_id,
                     const SoftMap& map);
SoftMap load_prediction(const std::filesystem::path& root, const std::string& case_id);

/// The last floor(n * fraction) cases by sorted case_id (at least one when
/// n >= 2 and fraction > 0) form the validation split.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split validation_split(const std::vector<CaseRecord>& cases, double fraction);

}  // namespace mdunet
