#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "msff/tensor.hpp"

namespace msff {

/// Display-referred image, interleaved RGB rows, values in [0, 1].
/// exposure_t is relative exposure time, t = 2^EV with the smallest EV in a
/// stack normalized to 0.
struct LdrImage {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;  // height * width * 3
  double exposure_t = 1.0;

  float& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Scene-linear radiance, nonnegative, normalized so ground truth is in [0, 1].
struct HdrImage {
  int height = 0;
  int width = 0;
  std::vector<float> rgb;

  float& at(int y, int x, int c) { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

/// Dense pixel displacement, interleaved (dx, dy) per pixel.
struct FlowImage {
  int height = 0;
  int width = 0;
  std::vector<float> xy;  // height * width * 2

  float dx(int y, int x) const { return xy[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float dy(int y, int x) const { return xy[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
  void set(int y, int x, float vx, float vy) {
    xy[(static_cast<std::size_t>(y) * width + x) * 2] = vx;
    xy[(static_cast<std::size_t>(y) * width + x) * 2 + 1] = vy;
  }
};

struct MaskImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> v;  // 0 or 1

  std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

/// The two input exposures, sorted ascending by exposure time. The reference
/// is the higher exposure, i.e. ldr[1] (index 2 in 1-based terms).
struct ExposureStack {
  LdrImage ldr[2];
  std::optional<HdrImage> gt;

  void validate() const;  // throws on broken invariants
  int height() const { return ldr[0].height; }
  int width() const { return ldr[0].width; }
};

/// Rendered sample with known ground truth, used for verification.
struct SyntheticSample {
  ExposureStack stack;
  FlowImage gt_flow;       // displacement of image 1 toward the reference
  MaskImage occlusion;     // 1 where the correspondence leaves the frame
};

// Conversions between interleaved images and NCHW tensors (current dtype).
Tensor ldr_to_tensor(const LdrImage& img);      // 1 x 3 x H x W
Tensor hdr_to_tensor(const HdrImage& img);      // 1 x 3 x H x W
HdrImage tensor_to_hdr(const Tensor& t, int batch_index = 0);
Tensor flow_to_tensor(const FlowImage& f);      // 1 x 2 x H x W

/// Reflect-pads an LDR image on the bottom/right so dims become multiples of m.
LdrImage reflect_pad_to_multiple(const LdrImage& img, int m);

}  // namespace msff
