#pragma once

#include <vector>

#include "msff/tensor.hpp"

namespace msff {

/// 2-D convolution, NCHW. weight is [outC, inC, k, k], bias is [1, outC, 1, 1].
/// Output spatial dims are floor((H + 2*pad - k) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Bilinear upsampling by an integer factor >= 2, align_corners = false:
/// output pixel centers map uniformly into the input grid.
Tensor bilinear_upsample(const Tensor& x, int factor);

/// Backward warp: out(p) = bilinear sample of feat at p + flow(p), flow is
/// [N, 2, H, W] with channel 0 = dx, channel 1 = dy in pixels. Out-of-range
/// sample positions clamp to the border (replicate edge).
Tensor warp_bilinear(const Tensor& feat, const Tensor& flow);

Tensor concat_channels(const std::vector<Tensor>& xs);
/// Channels [c0, c1) of x, order preserved.
Tensor slice_channels(const Tensor& x, int c0, int c1);

/// Spatial mean per (n, c); output is N x C x 1 x 1.
Tensor global_avg_pool(const Tensor& x);

// Elementwise ops. Shapes must match exactly, except that the second operand
// of add/mul may be N x C x 1 x 1 against an N x C x H x W first operand.
Tensor add(const Tensor& x, const Tensor& y);
Tensor sub(const Tensor& x, const Tensor& y);
Tensor mul(const Tensor& x, const Tensor& y);
/// Per-channel scaling: x [N,C,H,W] times s [N,C,1,1].
Tensor scale_broadcast(const Tensor& x, const Tensor& s);
Tensor abs(const Tensor& x);
Tensor mul_scalar(const Tensor& x, double s);
/// Mean over all elements; output is 1 x 1 x 1 x 1.
Tensor mean(const Tensor& x);

}  // namespace msff
