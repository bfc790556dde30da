// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "mdunet/metrics.hpp"

namespace mdunet {

/// Writes |pred - gt| as an RGB PNG using a black-red-yellow-white ramp,
/// each pixel enlarged to a scale x scale block.
void write_difference_png(const std::filesystem::path& path, const SoftMap& pred,
                          const SoftMap& gt, int scale = 8);

}  // namespace mdunet
