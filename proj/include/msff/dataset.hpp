#pragma once

#include <optional>
#include <vector>

#include "msff/image.hpp"
#include "msff/image_io.hpp"

namespace msff {

/// H = L^gamma / t, elementwise.
HdrImage gamma_to_hdr(const LdrImage& img, double gamma = 2.2);

/// Network input X = [L, H] as a 1 x 6 x H x W tensor: channels 0-2 hold the
/// LDR image, channels 3-5 its gamma-domain mapping.
Tensor make_input(const LdrImage& img, double gamma = 2.2);
/// Batched variant; all images must share dimensions.
Tensor make_input_batch(const std::vector<const LdrImage*>& imgs, double gamma = 2.2);

/// Aligned crop of everything a scene carries.
struct PatchSample {
  LdrImage ldr[2];
  std::optional<HdrImage> gt;
  std::optional<FlowImage> gt_flow;
  std::optional<MaskImage> occlusion;
  int size() const { return ldr[0].height; }
};

/// Grid of aligned square crops with the given stride; trailing partial
/// windows are anchored to the far edge so the whole image is covered.
std::vector<PatchSample> crop_patches(const Scene& scene, int size, int stride);

/// Window start offsets along one axis (exposed for tests).
std::vector<int> patch_offsets(int extent, int size, int stride);

/// One of the 8 dihedral transforms of the square: index = flip * 4 + r where
/// r counts 90-degree rotations and flip is an initial horizontal mirror.
/// Flow vectors are rotated/mirrored along with the pixels.
PatchSample augment(const PatchSample& patch, int transform_index);
/// Transform drawn from the seeded RNG.
PatchSample augment(const PatchSample& patch, std::mt19937_64& rng);

/// Index of the inverse transform (augment(augment(p, k), inverse) == p).
int dihedral_inverse(int transform_index);

}  // namespace msff
