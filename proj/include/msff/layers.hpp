#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "msff/ops.hpp"
#include "msff/tensor.hpp"

namespace msff {

/// Named trainable tensors in a stable order (checkpointing, Adam).
using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct Conv2dLayer {
  Tensor weight;  // [outC, inC, k, k]
  Tensor bias;    // [1, outC, 1, 1]
  int stride = 1;
  int padding = 0;

  Conv2dLayer() = default;
  /// Centered uniform fan-in init; zero_init zeroes the weights instead
  /// (used for the last layer of flow estimators and RCABs).
  Conv2dLayer(int in_c, int out_c, int k, int stride_, std::mt19937_64& rng,
              bool zero_init = false);

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, stride, padding); }
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Residual channel attention block: y = x + u * a where
/// u = conv2(relu(conv1(x))) and a is a per-channel sigmoid gate computed
/// from the global average of u through a 1x1 bottleneck.
struct Rcab {
  Conv2dLayer conv1, conv2;       // 3x3, C -> C; conv2 zero-initialized
  Conv2dLayer att_down, att_up;   // 1x1, C -> C/ratio -> C
  int ratio = 4;

  Rcab() = default;
  Rcab(int channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Reduction ratio used for channel attention at a given width.
int rcab_ratio(int channels);

}  // namespace msff
