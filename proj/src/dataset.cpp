#include "msff/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace msff {

HdrImage gamma_to_hdr(const LdrImage& img, double gamma) {
  if (gamma <= 0) throw std::runtime_error("gamma_to_hdr: gamma must be positive");
  HdrImage out;
  out.height = img.height;
  out.width = img.width;
  out.rgb.resize(img.rgb.size());
  const double inv_t = 1.0 / img.exposure_t;
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    out.rgb[i] = static_cast<float>(std::pow(static_cast<double>(img.rgb[i]), gamma) * inv_t);
  return out;
}

Tensor make_input(const LdrImage& img, double gamma) {
  return make_input_batch({&img}, gamma);
}

Tensor make_input_batch(const std::vector<const LdrImage*>& imgs, double gamma) {
  if (imgs.empty()) throw std::runtime_error("make_input_batch: empty batch");
  const int h = imgs[0]->height, w = imgs[0]->width;
  Tensor out = Tensor::zeros({static_cast<int>(imgs.size()), 6, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::size_t b = 0; b < imgs.size(); ++b) {
    const LdrImage& img = *imgs[b];
    if (img.height != h || img.width != w)
      throw ShapeError("make_input_batch: image dimensions differ within batch");
    const HdrImage mapped = gamma_to_hdr(img, gamma);
    dispatch_dtype(out.dtype(), [&](auto tag) {
      using T = decltype(tag);
      T* p = out.data<T>() + static_cast<std::int64_t>(b) * 6 * hw;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) {
            p[c * hw + y * static_cast<std::int64_t>(w) + x] = static_cast<T>(img.at(y, x, c));
            p[(c + 3) * hw + y * static_cast<std::int64_t>(w) + x] =
                static_cast<T>(mapped.at(y, x, c));
          }
    });
  }
  return out;
}

std::vector<int> patch_offsets(int extent, int size, int stride) {
  if (size > extent)
    throw std::runtime_error("crop_patches: patch size " + std::to_string(size) +
                             " exceeds image extent " + std::to_string(extent));
  std::vector<int> offsets;
  for (int o = 0; o + size <= extent; o += stride) offsets.push_back(o);
  if (offsets.back() + size < extent) offsets.push_back(extent - size);  // edge-anchored tail
  return offsets;
}

namespace {

LdrImage crop_ldr(const LdrImage& img, int oy, int ox, int size) {
  LdrImage out;
  out.height = out.width = size;
  out.exposure_t = img.exposure_t;
  out.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
  return out;
}

HdrImage crop_hdr(const HdrImage& img, int oy, int ox, int size) {
  HdrImage out;
  out.height = out.width = size;
  out.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
  return out;
}

FlowImage crop_flow(const FlowImage& f, int oy, int ox, int size) {
  FlowImage out;
  out.height = out.width = size;
  out.xy.resize(static_cast<std::size_t>(size) * size * 2);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out.set(y, x, f.dx(oy + y, ox + x), f.dy(oy + y, ox + x));
  return out;
}

MaskImage crop_mask(const MaskImage& m, int oy, int ox, int size) {
  MaskImage out;
  out.height = out.width = size;
  out.v.resize(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      out.v[static_cast<std::size_t>(y) * size + x] = m.at(oy + y, ox + x);
  return out;
}

}  // namespace

std::vector<PatchSample> crop_patches(const Scene& scene, int size, int stride) {
  const int h = scene.stack.height(), w = scene.stack.width();
  const std::vector<int> ys = patch_offsets(h, size, stride);
  const std::vector<int> xs = patch_offsets(w, size, stride);
  std::vector<PatchSample> patches;
  patches.reserve(ys.size() * xs.size());
  for (int oy : ys)
    for (int ox : xs) {
      PatchSample p;
      p.ldr[0] = crop_ldr(scene.stack.ldr[0], oy, ox, size);
      p.ldr[1] = crop_ldr(scene.stack.ldr[1], oy, ox, size);
      if (scene.stack.gt) p.gt = crop_hdr(*scene.stack.gt, oy, ox, size);
      if (scene.gt_flow) p.gt_flow = crop_flow(*scene.gt_flow, oy, ox, size);
      if (scene.occlusion) p.occlusion = crop_mask(*scene.occlusion, oy, ox, size);
      patches.push_back(std::move(p));
    }
  return patches;
}

namespace {

// Output -> input pixel map of dihedral transform k on an S x S square.
// k = flip * 4 + r: r counter-rotations are inverted first, then the mirror.
std::pair<int, int> dihedral_src(int k, int x, int y, int s) {
  const int r = k & 3, f = k >> 2;
  int cx = x, cy = y;
  for (int i = 0; i < r; ++i) {
    const int nx = s - 1 - cy, ny = cx;
    cx = nx;
    cy = ny;
  }
  if (f) cx = s - 1 - cx;
  return {cx, cy};
}

// Linear part A of the output->input map; flow vectors transform by A^T.
void dihedral_linear(int k, int a[2][2]) {
  const int r = k & 3, f = k >> 2;
  int m[2][2] = {{1, 0}, {0, 1}};
  for (int i = 0; i < r; ++i) {
    // left-multiply by [[0,-1],[1,0]]
    const int t00 = -m[1][0], t01 = -m[1][1];
    m[1][0] = m[0][0];
    m[1][1] = m[0][1];
    m[0][0] = t00;
    m[0][1] = t01;
  }
  if (f) {
    m[0][0] = -m[0][0];
    m[0][1] = -m[0][1];
  }
  a[0][0] = m[0][0];
  a[0][1] = m[0][1];
  a[1][0] = m[1][0];
  a[1][1] = m[1][1];
}

template <typename Img, typename CopyPixel>
Img remap_square(const Img& in, int k, CopyPixel copy) {
  Img out = in;
  const int s = in.height;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const auto [sx, sy] = dihedral_src(k, x, y, s);
      copy(out, x, y, in, sx, sy);
    }
  return out;
}

}  // namespace

int dihedral_inverse(int k) {
  if (k < 4) return (4 - k) & 3;
  return k;  // mirrored transforms are involutions
}

PatchSample augment(const PatchSample& patch, int k) {
  if (k < 0 || k > 7) throw std::runtime_error("augment: transform index out of range");
  if (patch.ldr[0].height != patch.ldr[0].width)
    throw std::runtime_error("augment: rotation requires square patches");
  PatchSample out;
  auto copy_rgb3 = [](auto& dst, int x, int y, const auto& src, int sx, int sy) {
    for (int c = 0; c < 3; ++c) dst.at(y, x, c) = src.at(sy, sx, c);
  };
  out.ldr[0] = remap_square(patch.ldr[0], k, copy_rgb3);
  out.ldr[1] = remap_square(patch.ldr[1], k, copy_rgb3);
  if (patch.gt) out.gt = remap_square(*patch.gt, k, copy_rgb3);
  if (patch.occlusion)
    out.occlusion = remap_square(*patch.occlusion, k,
                                 [](auto& dst, int x, int y, const auto& src, int sx, int sy) {
                                   dst.v[static_cast<std::size_t>(y) * dst.width + x] =
                                       src.at(sy, sx);
                                 });
  if (patch.gt_flow) {
    int a[2][2];
    dihedral_linear(k, a);
    FlowImage flow = *patch.gt_flow;
    const int s = flow.height;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const auto [sx, sy] = dihedral_src(k, x, y, s);
        const float fx = patch.gt_flow->dx(sy, sx);
        const float fy = patch.gt_flow->dy(sy, sx);
        flow.set(y, x, static_cast<float>(a[0][0]) * fx + static_cast<float>(a[1][0]) * fy,
                 static_cast<float>(a[0][1]) * fx + static_cast<float>(a[1][1]) * fy);
      }
    out.gt_flow = std::move(flow);
  }
  return out;
}

PatchSample augment(const PatchSample& patch, std::mt19937_64& rng) {
  return augment(patch, static_cast<int>(rng() % 8));
}

}  // namespace msff
