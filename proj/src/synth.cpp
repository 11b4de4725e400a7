#include "msff/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <vector>

#include "msff/image_io.hpp"

namespace msff {

namespace {

struct Sinusoid {
  double ux, uy, phase, amp;
  double cw[3];  // per-channel weight
};

struct Rect {
  double x0, x1, y0, y1;
  double color[3];
};

// Procedural texture, evaluable at any real coordinate.
struct Texture {
  double base[3];
  double amp_norm[3];
  std::vector<Sinusoid> waves;
  std::vector<Rect> rects;
  double scale = 1.0;      // exposure shaping factor
  double sat_thr = 2.0;    // latent values above this saturate the reference

  double raw(double x, double y, int ch) const {
    double acc = 0.0;
    for (const Sinusoid& s : waves)
      acc += s.amp * s.cw[ch] * std::sin(2.0 * std::numbers::pi * (x * s.ux + y * s.uy) + s.phase);
    double v = base[ch] + 0.45 * acc / amp_norm[ch];
    for (const Rect& r : rects)
      if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) v = 0.35 * v + 0.65 * r.color[ch];
    return v;
  }

  // Latent HDR: scaled raw texture with highlights compressed smoothly into
  // (sat_thr, 1] so the ground truth keeps detail where the reference clips.
  double latent(double x, double y, int ch) const {
    const double v = scale * raw(x, y, ch);
    if (v <= sat_thr) return std::max(v, 0.0);
    const double span = 1.0 - sat_thr;
    return sat_thr + span * (1.0 - std::exp(-(v - sat_thr) / span));
  }
};

Texture make_texture(std::mt19937_64& rng, int size) {
  Texture tex;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int ch = 0; ch < 3; ++ch) tex.base[ch] = 0.45 + 0.1 * uni(rng);
  const int n_waves = 10;
  tex.waves.resize(n_waves);
  for (Sinusoid& s : tex.waves) {
    const double theta = 2.0 * std::numbers::pi * uni(rng);
    const double wavelength = std::exp(std::log(6.0) + uni(rng) * std::log(size / 6.0));
    s.ux = std::cos(theta) / wavelength;
    s.uy = std::sin(theta) / wavelength;
    s.phase = 2.0 * std::numbers::pi * uni(rng);
    s.amp = 0.3 + 0.7 * uni(rng);
    for (int ch = 0; ch < 3; ++ch) s.cw[ch] = 0.2 + 0.8 * uni(rng);
  }
  for (int ch = 0; ch < 3; ++ch) {
    double norm = 0.0;
    for (const Sinusoid& s : tex.waves) norm += s.amp * s.cw[ch];
    tex.amp_norm[ch] = norm;
  }
  const int n_rects = 4;
  tex.rects.resize(n_rects);
  for (Rect& r : tex.rects) {
    const double w = size * (0.125 + 0.375 * uni(rng));
    const double h = size * (0.125 + 0.375 * uni(rng));
    // Integer edges; may straddle the border so shifts move them through it.
    r.x0 = std::floor(-size * 0.25 + uni(rng) * size * 1.25);
    r.y0 = std::floor(-size * 0.25 + uni(rng) * size * 1.25);
    r.x1 = std::floor(r.x0 + w) + 1;
    r.y1 = std::floor(r.y0 + h) + 1;
    for (int ch = 0; ch < 3; ++ch) r.color[ch] = 0.1 + 0.85 * uni(rng);
  }
  return tex;
}

float expose(double latent, double t, double gamma) {
  const double v = std::pow(std::max(latent, 0.0) * t, 1.0 / gamma);
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

}  // namespace

SyntheticSample synth_scene(const SynthParams& p) {
  if (p.size < 8) throw std::runtime_error("synth_scene: size too small");
  if (std::fabs(p.dx) > p.size / 4.0 || std::fabs(p.dy) > p.size / 4.0)
    throw std::runtime_error("synth_scene: |translation| must be <= size/4");
  if (p.t1 <= 0 || p.t2 <= 0 || p.t1 > p.t2)
    throw std::runtime_error("synth_scene: need 0 < t1 <= t2");

  std::mt19937_64 rng(p.seed);
  Texture tex = make_texture(rng, p.size);
  const int s = p.size;

  // Shape the exposure so the requested fraction of reference pixels clips.
  std::vector<double> maxchan(static_cast<std::size_t>(s) * s);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double m = 0.0;
      for (int ch = 0; ch < 3; ++ch) m = std::max(m, tex.raw(x, y, ch));
      maxchan[static_cast<std::size_t>(y) * s + x] = m;
    }
  const double thr = 1.0 / p.t2;
  if (p.saturation_fraction > 0.0 && thr < 1.0) {
    std::vector<double> sorted = maxchan;
    std::sort(sorted.begin(), sorted.end());
    const double f = std::clamp(p.saturation_fraction, 0.0, 0.95);
    const std::size_t idx =
        static_cast<std::size_t>((1.0 - f) * static_cast<double>(sorted.size() - 1));
    const double q = std::max(sorted[idx], 1e-6);
    tex.scale = thr / q;
    tex.sat_thr = thr;
  } else {
    const double peak = std::max(*std::max_element(maxchan.begin(), maxchan.end()), 1e-6);
    tex.scale = 0.95 * std::min(thr, 1.0) / peak;
    tex.sat_thr = 1.0;  // compression never engages
  }

  SyntheticSample sample;
  LdrImage& img1 = sample.stack.ldr[0];
  LdrImage& img2 = sample.stack.ldr[1];
  img1.height = img1.width = s;
  img2.height = img2.width = s;
  img1.exposure_t = p.t1;
  img2.exposure_t = p.t2;
  img1.rgb.resize(static_cast<std::size_t>(s) * s * 3);
  img2.rgb.resize(img1.rgb.size());

  HdrImage gt;
  gt.height = gt.width = s;
  gt.rgb.resize(img1.rgb.size());

  sample.gt_flow.height = sample.gt_flow.width = s;
  sample.gt_flow.xy.resize(static_cast<std::size_t>(s) * s * 2);
  sample.occlusion.height = sample.occlusion.width = s;
  sample.occlusion.v.resize(static_cast<std::size_t>(s) * s);

  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        const double h_ref = tex.latent(x, y, ch);
        gt.at(y, x, ch) = static_cast<float>(h_ref);
        img2.at(y, x, ch) = expose(h_ref, p.t2, p.gamma);
        // Content at reference pixel q - f appears at q in image 1.
        img1.at(y, x, ch) = expose(tex.latent(x - p.dx, y - p.dy, ch), p.t1, p.gamma);
      }
      sample.gt_flow.set(y, x, static_cast<float>(p.dx), static_cast<float>(p.dy));
      const double cx = x + p.dx, cy = y + p.dy;
      sample.occlusion.v[static_cast<std::size_t>(y) * s + x] =
          (cx < 0 || cx > s - 1 || cy < 0 || cy > s - 1) ? 1 : 0;
    }
  }
  sample.stack.gt = std::move(gt);
  return sample;
}

void write_synthetic_scene(const std::string& dir, const SyntheticSample& sample) {
  std::filesystem::create_directories(dir);
  save_png16(dir + "/input_1.png", sample.stack.ldr[0]);
  save_png16(dir + "/input_2.png", sample.stack.ldr[1]);
  save_exposures(dir + "/exposures.txt", {std::log2(sample.stack.ldr[0].exposure_t),
                                          std::log2(sample.stack.ldr[1].exposure_t)});
  if (sample.stack.gt) save_pfm(dir + "/gt.pfm", *sample.stack.gt);
  save_flow_pfm(dir + "/gt_flow.pfm", sample.gt_flow);
  save_mask_png(dir + "/mask.png", sample.occlusion);
}

}  // namespace msff
