#pragma once

#include "msff/alignment.hpp"
#include "msff/dataset.hpp"

namespace msff {

/// Head conv + three RCABs whose outputs are concatenated (Z5), then three
/// convs with a global skip from the reference scale-0 features.
struct MergeNet {
  Conv2dLayer head;                // 3C -> C
  std::array<Rcab, 3> rcabs;
  Conv2dLayer tail1;               // 3C -> C
  Conv2dLayer tail2;               // C -> C
  Conv2dLayer tail3;               // C -> 3

  MergeNet() = default;
  MergeNet(int channels, std::mt19937_64& rng);
  Tensor operator()(const Tensor& z0, const Tensor& fr0) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

/// The full two-exposure HDR network: untied feature extractors per input
/// stream, coarse-to-fine feature flow, multi-scale fusion, the warped-feature
/// reconstruction head, and the RCAB merging network.
struct MsffNet {
  int channels = 16;
  FeatureExtractor extract1;   // non-reference stream
  FeatureExtractor extract_r;  // reference stream
  MsFlow flow;
  MsFuse fuse;
  HofHead hof;
  MergeNet merge;

  MsffNet() = default;
  MsffNet(int channels_, std::uint64_t seed);

  struct Outputs {
    Tensor h_hat;                     // final HDR, N x 3 x H x W in [0, 1]
    Tensor h_of;                      // flow-supervision reconstruction
    std::array<FlowField, 3> flows;   // per scale
    std::array<Tensor, 3> warped;
    Tensor fused;                     // Z0
  };

  /// Both inputs are 6-channel tensors from make_input; dims divisible by 4.
  Outputs forward(const Tensor& x1, const Tensor& xr) const;

  /// Convenience wrapper over make_input for a full stack.
  Outputs forward_stack(const ExposureStack& stack, double gamma = 2.2) const;

  /// Stable name -> tensor list covering every trainable parameter.
  ParamList parameters() const;
};

/// Full-image inference: reflect-pads to a multiple of 4, runs the network
/// without recording gradients, and crops back to the original size.
struct InferenceResult {
  HdrImage h_hat;
  HdrImage h_of;
  std::array<FlowImage, 3> flows;  // at padded scale-s resolution
};
InferenceResult infer_full(const MsffNet& net, const ExposureStack& stack, double gamma = 2.2);

}  // namespace msff
