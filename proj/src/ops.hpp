// SPDX-License-Identifier: Apache-2.0
// Forward/backward kernels for the layers used by MultiDecoderNet.
#pragma once

#include <vector>

#include "mdunet/net.hpp"

namespace mdunet::ops {

/// Same-size convolution (kernel 1 or 3, stride 1, zero padding).
Tensor conv_forward(const ParamStore& ps, const layers::Conv2d& conv, const Tensor& x);
/// Accumulates weight/bias gradients and returns the input gradient.
Tensor conv_backward(ParamStore& ps, const layers::Conv2d& conv, const Tensor& x,
                     const Tensor& dy);

struct NormCache {
  Tensor normalized;
  std::vector<double> inv_std;
};
Tensor instance_norm_forward(const ParamStore& ps, const layers::InstanceNorm& norm,
                             const Tensor& x, NormCache* cache);
Tensor instance_norm_backward(ParamStore& ps, const layers::InstanceNorm& norm,
                              const NormCache& cache, const Tensor& dy);

void relu_inplace(Tensor& x);
/// Zeroes dy wherever the ReLU output was not positive.
void relu_backward_inplace(const Tensor& out, Tensor& dy);

Tensor maxpool2_forward(const Tensor& x, std::vector<int>* argmax);
Tensor maxpool2_backward(const std::vector<int>& argmax, int channels, Shape2 in_shape,
                         const Tensor& dy);

/// Factor-2 bilinear upsampling, half-pixel centers (align_corners off).
Tensor upsample2_forward(const Tensor& x);
Tensor upsample2_backward(const Tensor& dy, Shape2 in_shape);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int first_channels, Tensor& da, Tensor& db);

void add_inplace(Tensor& acc, const Tensor& x);

/// Per-pixel softmax over channels.
Tensor softmax(const Tensor& logits);
/// Gradient w.r.t. logits given the gradient w.r.t. softmax outputs.
Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs);

}  // namespace mdunet::ops
