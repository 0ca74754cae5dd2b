#pragma once

#include "slidekit/ops.hpp"
#include "slidekit/raster.hpp"
#include "slidekit/tensor.hpp"

namespace slidekit {

// Constants for the structural-similarity reconstruction error. The window
// constants are the standard published values; dynamic_range must match the
// value span of the data being compared (see resolve_dynamic_range).
struct SsimConfig {
    int window_size = 11;  // odd, >= 3
    real window_sigma = real(1.5);
    real k1 = real(0.01);
    real k2 = real(0.03);
    real dynamic_range = real(1);
    // Per-channel maps averaged into the mean; false restricts the
    // comparison to channel 0.
    bool average_channels = true;
};

void validate(const SsimConfig& cfg);

struct SsimOutput {
    Tensor mean;  // scalar, differentiable w.r.t. both inputs
    Tensor map;   // [C,H,W] value-only, edge-replicated back to input size
};

// Gaussian-windowed local SSIM over the valid region; mean is taken over the
// valid map, the returned per-pixel map is padded back to input size.
SsimOutput ssim(const Tensor& x, const Tensor& y, const SsimConfig& cfg);

// 1 - ssim mean; in [0, 2), zero iff x == y up to floating point.
Tensor ssim_loss(const Tensor& x, const Tensor& y, const SsimConfig& cfg);

// (max - min) over a set of tensors, floored at 1e-3 so the stabilizers
// never vanish on constant data.
real resolve_dynamic_range(const std::vector<Tensor>& tensors);

// Binary cross-entropy on a [1] probability tensor; prob is clamped to
// [1e-7, 1 - 1e-7] so the value is always finite.
Tensor bce(const Tensor& prob, real label);

// Mean softmax cross-entropy of 2-class logits [2,H,W] against mask ids.
Tensor pixel_cross_entropy(const Tensor& logits, const Mask& mask);

}  // namespace slidekit
