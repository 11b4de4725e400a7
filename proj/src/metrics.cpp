#include "msff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace msff {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

double tonemap_scalar(double v, double mu) {
  return std::log1p(mu * std::clamp(v, 0.0, 1.0)) / std::log1p(mu);
}

// Channel-mean grayscale in the requested domain.
std::vector<double> to_gray(const HdrImage& img, MetricDomain domain, double mu) {
  std::vector<double> gray(static_cast<std::size_t>(img.height) * img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) {
        double v = img.at(y, x, c);
        if (domain == MetricDomain::mu) v = tonemap_scalar(v, mu);
        acc += v;
      }
      gray[static_cast<std::size_t>(y) * img.width + x] = acc / 3.0;
    }
  return gray;
}

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - (kWindow - 1) / 2.0;
    k[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-region filtering: (H) x (W) -> (H - 10) x (W - 10).
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& kernel) {
  const int wv = w - kWindow + 1;
  const int hv = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * wv);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i)
        acc += kernel[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * wv + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(hv) * wv);
  for (int y = 0; y < hv; ++y)
    for (int x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (int i = 0; i < kWindow; ++i)
        acc += kernel[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * wv + x];
      out[static_cast<std::size_t>(y) * wv + x] = acc;
    }
  return out;
}

void check_same_dims(const HdrImage& a, const HdrImage& b, const char* op) {
  if (a.height != b.height || a.width != b.width)
    throw std::runtime_error(std::string(op) + ": image dimensions differ");
}

}  // namespace

double psnr(const HdrImage& pred, const HdrImage& gt, MetricDomain domain, double mu) {
  check_same_dims(pred, gt, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.rgb.size(); ++i) {
    double a = pred.rgb[i], b = gt.rgb[i];
    if (domain == MetricDomain::mu) {
      a = tonemap_scalar(a, mu);
      b = tonemap_scalar(b, mu);
    }
    const double d = a - b;
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.rgb.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const HdrImage& pred, const HdrImage& gt, MetricDomain domain, double mu) {
  check_same_dims(pred, gt, "ssim");
  if (pred.height < kWindow || pred.width < kWindow)
    throw std::runtime_error("ssim: image smaller than the 11x11 window");
  const int h = pred.height, w = pred.width;
  const std::vector<double> x = to_gray(pred, domain, mu);
  const std::vector<double> y = to_gray(gt, domain, mu);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const std::vector<double> kernel = gaussian_kernel();
  const std::vector<double> mx = filter_valid(x, h, w, kernel);
  const std::vector<double> my = filter_valid(y, h, w, kernel);
  const std::vector<double> mxx = filter_valid(xx, h, w, kernel);
  const std::vector<double> myy = filter_valid(yy, h, w, kernel);
  const std::vector<double> mxy = filter_valid(xy, h, w, kernel);

  const double c1 = kK1 * kK1;  // (K1 * peak)^2, peak = 1
  const double c2 = kK2 * kK2;
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cov = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mx.size());
}

SceneMetrics compute_scene_metrics(const std::string& name, const HdrImage& pred,
                                   const HdrImage& gt, double mu) {
  SceneMetrics m;
  m.scene = name;
  m.psnr_mu = psnr(pred, gt, MetricDomain::mu, mu);
  m.psnr_l = psnr(pred, gt, MetricDomain::linear, mu);
  m.ssim_mu = ssim(pred, gt, MetricDomain::mu, mu);
  m.ssim_l = ssim(pred, gt, MetricDomain::linear, mu);
  return m;
}

SceneMetrics MetricsReport::mean() const {
  SceneMetrics m;
  m.scene = "mean";
  if (scenes.empty()) return m;
  for (const SceneMetrics& s : scenes) {
    m.psnr_mu += s.psnr_mu;
    m.psnr_l += s.psnr_l;
    m.ssim_mu += s.ssim_mu;
    m.ssim_l += s.ssim_l;
  }
  const double n = static_cast<double>(scenes.size());
  m.psnr_mu /= n;
  m.psnr_l /= n;
  m.ssim_mu /= n;
  m.ssim_l /= n;
  return m;
}

namespace {

void append_row(std::ostringstream& os, const SceneMetrics& m, bool csv) {
  char buf[160];
  if (csv)
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.6f,%.6f", m.scene.c_str(), m.psnr_mu,
                  m.psnr_l, m.ssim_mu, m.ssim_l);
  else
    std::snprintf(buf, sizeof(buf), "%-20s %9.4f %9.4f %9.6f %9.6f", m.scene.c_str(), m.psnr_mu,
                  m.psnr_l, m.ssim_mu, m.ssim_l);
  os << buf << "\n";
}

}  // namespace

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os << "scene,psnr_mu,psnr_l,ssim_mu,ssim_l\n";
  for (const SceneMetrics& s : report.scenes) append_row(os, s, true);
  append_row(os, report.mean(), true);
  return os.str();
}

std::string metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-20s %9s %9s %9s %9s", "scene", "PSNR-mu", "PSNR-L",
                "SSIM-mu", "SSIM-L");
  os << buf << "\n";
  for (const SceneMetrics& s : report.scenes) append_row(os, s, false);
  append_row(os, report.mean(), false);
  return os.str();
}

}  // namespace msff
