// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "mdunet/config.hpp"
#include "mdunet/params.hpp"
#include "mdunet/tensor.hpp"

namespace mdunet {

/// Per-branch softmax outputs plus the branch-averaged foreground map.
struct BranchPredictions {
  std::vector<Tensor> probs;  // N arrays of shape (K, H, W)
  Plane<float> mean_foreground;
};

/// Intermediate activations recorded by a training forward pass.
struct ForwardTape;

struct TapeDeleter {
  void operator()(ForwardTape* tape) const noexcept;
};
using TapePtr = std::unique_ptr<ForwardTape, TapeDeleter>;

namespace layers {

struct Conv2d {
  int in = 0;
  int out = 0;
  int kernel = 3;
  int weight = -1;
  int bias = -1;
};

struct InstanceNorm {
  int channels = 0;
  double eps = 1e-5;
  int scale = -1;
  int shift = -1;
};

/// convolution -> instance norm -> ReLU
struct ConvGroup {
  Conv2d conv;
  InstanceNorm norm;
};

/// Two conv groups with an additive shortcut (1x1 projection when the
/// channel count changes).
struct ResStage {
  ConvGroup first;
  ConvGroup second;
  bool projected = false;
  Conv2d projection;
};

struct Decoder {
  std::vector<ResStage> stages;  // stages[s] produces level s, s = 0..L-2
  Conv2d head;
};

}  // namespace layers

/// Residual instance-norm U-Net with one shared encoder and N decoders.
///
/// Decoder i upsamples the shared bottleneck by bilinear interpolation,
/// concatenates the matching encoder skip and applies a residual stage,
/// ending with a 1x1 convolution to K logits and a per-pixel softmax.
class MultiDecoderNet {
 public:
  MultiDecoderNet(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  int n_decoders() const noexcept { return config_.n_decoders; }

  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept {
    return params_.scalar_count();
  }

  /// Throws ShapeMismatch when the image cannot be processed.
  void check_input(const Tensor& image) const;

  /// Inference pass; encoder evaluated once and shared by all decoders.
  BranchPredictions forward_all(const Tensor& image) const;

  /// Training pass; records the activations needed by backward().
  BranchPredictions forward_train(const Tensor& image, TapePtr& tape) const;

  /// Accumulates parameter gradients from per-branch logit gradients.
  /// An empty tensor in grad_logits marks a branch that receives no gradient.
  void backward(const ForwardTape& tape, const std::vector<Tensor>& grad_logits);

 private:
  BranchPredictions run(const Tensor& image, ForwardTape* tape) const;

  ModelConfig config_;
  ParamStore params_;
  std::vector<layers::ResStage> encoder_;
  std::vector<layers::Decoder> decoders_;
};

std::size_t parameter_count(const MultiDecoderNet& net);

/// Mean over branches of the foreground (class 1) probability.
Plane<float> mean_foreground(const std::vector<Tensor>& probs);

}  // namespace mdunet
