#pragma once

#include <string>
#include <vector>

#include "msff/image.hpp"

namespace msff {

enum class MetricDomain { mu, linear };

/// 10 * log10(1 / MSE) with peak 1.0; +infinity for identical images.
/// In the mu domain both images are clamped to [0, 1] and tonemapped first.
double psnr(const HdrImage& pred, const HdrImage& gt, MetricDomain domain, double mu = 5000.0);

/// Mean local SSIM on channel-mean grayscale, Gaussian window 11 (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, peak 1.0. Throws if the image is smaller than the
/// window.
double ssim(const HdrImage& pred, const HdrImage& gt, MetricDomain domain, double mu = 5000.0);

struct SceneMetrics {
  std::string scene;
  double psnr_mu = 0.0;
  double psnr_l = 0.0;
  double ssim_mu = 0.0;
  double ssim_l = 0.0;
};

struct MetricsReport {
  std::vector<SceneMetrics> scenes;
  SceneMetrics mean() const;
};

SceneMetrics compute_scene_metrics(const std::string& name, const HdrImage& pred,
                                   const HdrImage& gt, double mu = 5000.0);

/// CSV rows "scene,psnr_mu,psnr_l,ssim_mu,ssim_l" plus a final mean row.
std::string metrics_csv(const MetricsReport& report);
/// Human-readable summary table.
std::string metrics_table(const MetricsReport& report);

}  // namespace msff
