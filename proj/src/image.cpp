#include "msff/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace msff {

void ExposureStack::validate() const {
  if (ldr[0].exposure_t <= 0 || ldr[1].exposure_t <= 0)
    throw std::runtime_error("exposure stack: exposure times must be positive");
  if (!(ldr[0].exposure_t < ldr[1].exposure_t))
    throw std::runtime_error("exposure stack: images must be sorted ascending by exposure");
  if (ldr[0].height != ldr[1].height || ldr[0].width != ldr[1].width)
    throw std::runtime_error("exposure stack: image dimensions differ");
  if (gt && (gt->height != ldr[0].height || gt->width != ldr[0].width))
    throw std::runtime_error("exposure stack: ground truth dimensions differ");
}

namespace {

Tensor interleaved_to_tensor(const float* data, int h, int w, int channels) {
  Tensor t = Tensor::zeros({1, channels, h, w});
  dispatch_dtype(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* p = t.data<T>();
    const std::int64_t hw = static_cast<std::int64_t>(h) * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < channels; ++c)
          p[c * hw + y * static_cast<std::int64_t>(w) + x] =
              static_cast<T>(data[(static_cast<std::size_t>(y) * w + x) * channels + c]);
  });
  return t;
}

}  // namespace

Tensor ldr_to_tensor(const LdrImage& img) {
  return interleaved_to_tensor(img.rgb.data(), img.height, img.width, 3);
}

Tensor hdr_to_tensor(const HdrImage& img) {
  return interleaved_to_tensor(img.rgb.data(), img.height, img.width, 3);
}

Tensor flow_to_tensor(const FlowImage& f) {
  return interleaved_to_tensor(f.xy.data(), f.height, f.width, 2);
}

HdrImage tensor_to_hdr(const Tensor& t, int batch_index) {
  const Shape& s = t.shape();
  if (s.c != 3) throw ShapeError("tensor_to_hdr: expected 3 channels, got " + s.str());
  HdrImage img;
  img.height = s.h;
  img.width = s.w;
  img.rgb.resize(static_cast<std::size_t>(s.h) * s.w * 3);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(t.at(batch_index, c, y, x));
  return img;
}

LdrImage reflect_pad_to_multiple(const LdrImage& img, int m) {
  const int h = img.height, w = img.width;
  const int ph = (h % m == 0) ? h : h + (m - h % m);
  const int pw = (w % m == 0) ? w : w + (m - w % m);
  if (ph == h && pw == w) return img;
  LdrImage out;
  out.height = ph;
  out.width = pw;
  out.exposure_t = img.exposure_t;
  out.rgb.resize(static_cast<std::size_t>(ph) * pw * 3);
  auto reflect = [](int i, int n) {
    if (i < n) return i;
    const int r = 2 * n - 2 - i;  // mirror without repeating the edge
    return std::clamp(r, 0, n - 1);
  };
  for (int y = 0; y < ph; ++y) {
    const int sy = reflect(y, h);
    for (int x = 0; x < pw; ++x) {
      const int sx = reflect(x, w);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace msff
