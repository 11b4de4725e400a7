#pragma once

#include <cstdint>
#include <string>

#include "msff/image.hpp"

namespace msff {

struct SynthParams {
  std::uint64_t seed = 0;
  int size = 64;
  double dx = 0.0, dy = 0.0;   // displacement of image 1 toward the reference
  double t1 = 1.0, t2 = 4.0;   // relative exposure times, t1 <= t2
  double saturation_fraction = 0.0;  // of reference pixels driven into saturation
  double gamma = 2.2;
};

/// Renders a band-limited random scene (sums of random-frequency sinusoids
/// plus random rectangles) as a latent HDR image in [0, 1], exposes it twice,
/// and returns the pair with ground-truth flow and occlusion mask. The scene
/// is evaluated analytically at shifted coordinates, so integer translations
/// reproduce the reference exactly on interior pixels.
SyntheticSample synth_scene(const SynthParams& params);

/// Writes a sample in the dataset directory layout:
/// input_1.png, input_2.png (16-bit), exposures.txt, gt.pfm, gt_flow.pfm, mask.png.
void write_synthetic_scene(const std::string& dir, const SyntheticSample& sample);

}  // namespace msff
