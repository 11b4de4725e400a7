#pragma once

#include <array>
#include <optional>

#include "msff/layers.hpp"

namespace msff {

/// 2-channel displacement map at some scale: channel 0 = dx, channel 1 = dy,
/// in pixels at that scale.
using FlowField = Tensor;

/// Per-image feature maps at scales 0, 1, 2; level s has spatial dims
/// (H / 2^s, W / 2^s) and a shared channel count.
struct FeaturePyramid {
  std::array<Tensor, 3> level;
};

/// Stride-1 conv followed by two stride-2 convs, all 3x3 with ReLU.
struct FeatureExtractor {
  Conv2dLayer conv0, conv1, conv2;

  FeatureExtractor() = default;
  FeatureExtractor(int in_c, int channels, std::mt19937_64& rng);
  FeaturePyramid operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Five 7x7 convs, [2C -> 64 -> 64 -> 32 -> 16 -> 2], ReLU after all but the
/// last, which is zero-initialized so training starts from the identity warp.
struct FlowEstimator {
  std::array<Conv2dLayer, 5> convs;

  FlowEstimator() = default;
  FlowEstimator(int feature_channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// Coarse-to-fine feature flow. One estimator per scale, untied weights.
struct MsFlow {
  std::array<FlowEstimator, 3> estimator;  // indexed by scale

  struct LevelResult {
    FlowField flow;
    Tensor warped;
  };
  struct Result {
    std::array<FlowField, 3> flows;
    std::array<Tensor, 3> warped;
  };

  MsFlow() = default;
  MsFlow(int feature_channels, std::mt19937_64& rng);

  /// One refinement level. With no upflow (coarsest scale) the estimator sees
  /// concat(F1, Fr) and its output is the flow; otherwise F1 is pre-warped by
  /// the upsampled flow and the estimator output is a residual added to it.
  LevelResult estimate_level(int scale, const Tensor& f1, const Tensor& fr,
                             const std::optional<FlowField>& upflow) const;

  /// Iterates scales 2 -> 1 -> 0. Between levels the flow is bilinearly
  /// upsampled by 2 and its values doubled.
  Result run(const FeaturePyramid& p1, const FeaturePyramid& pr) const;

  void collect(ParamList& out, const std::string& prefix) const;
};

/// Upsampled flow for the next finer scale: spatial x2, values x2.
FlowField upsample_flow(const FlowField& flow);

/// Per-scale conv + ReLU over concat(warped, reference), coarse outputs
/// bilinearly upsampled to scale 0, concatenated into Z0 with 3C channels.
struct MsFuse {
  std::array<Conv2dLayer, 3> convs;  // 2C -> C at each scale

  MsFuse() = default;
  MsFuse(int channels, std::mt19937_64& rng);
  Tensor operator()(const std::array<Tensor, 3>& warped, const FeaturePyramid& pr) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// HDR reconstruction from warped non-reference features only; supervises the
/// flow through the regularized loss.
struct HofHead {
  Conv2dLayer conv_in;             // 3C -> C
  std::array<Rcab, 5> rcabs;
  Conv2dLayer conv_out;            // C -> 3

  HofHead() = default;
  HofHead(int channels, std::mt19937_64& rng);
  Tensor operator()(const std::array<Tensor, 3>& warped) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

}  // namespace msff
