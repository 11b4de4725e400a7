#include "msff/alignment.hpp"

namespace msff {

FeatureExtractor::FeatureExtractor(int in_c, int channels, std::mt19937_64& rng) {
  conv0 = Conv2dLayer(in_c, channels, 3, 1, rng);
  conv1 = Conv2dLayer(channels, channels, 3, 2, rng);
  conv2 = Conv2dLayer(channels, channels, 3, 2, rng);
}

FeaturePyramid FeatureExtractor::operator()(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.h % 4 != 0 || s.w % 4 != 0)
    throw ShapeError("extract_features: spatial dims must be divisible by 4, got " + s.str());
  FeaturePyramid p;
  p.level[0] = relu(conv0(x));
  p.level[1] = relu(conv1(p.level[0]));
  p.level[2] = relu(conv2(p.level[1]));
  return p;
}

void FeatureExtractor::collect(ParamList& out, const std::string& prefix) const {
  conv0.collect(out, prefix + ".conv0");
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
}

FlowEstimator::FlowEstimator(int feature_channels, std::mt19937_64& rng) {
  const int widths[6] = {2 * feature_channels, 64, 64, 32, 16, 2};
  for (int i = 0; i < 5; ++i)
    convs[static_cast<std::size_t>(i)] =
        Conv2dLayer(widths[i], widths[i + 1], 7, 1, rng, /*zero_init=*/i == 4);
}

Tensor FlowEstimator::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < 4; ++i) h = relu(convs[i](h));
  return convs[4](h);  // no activation on the flow output
}

void FlowEstimator::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < convs.size(); ++i)
    convs[i].collect(out, prefix + ".conv" + std::to_string(i));
}

MsFlow::MsFlow(int feature_channels, std::mt19937_64& rng) {
  for (auto& est : estimator) est = FlowEstimator(feature_channels, rng);
}

FlowField upsample_flow(const FlowField& flow) {
  return mul_scalar(bilinear_upsample(flow, 2), 2.0);
}

MsFlow::LevelResult MsFlow::estimate_level(int scale, const Tensor& f1, const Tensor& fr,
                                           const std::optional<FlowField>& upflow) const {
  if (f1.shape() != fr.shape())
    throw ShapeError("estimate_flow_level: pyramid shapes differ, " + f1.shape().str() +
                     " vs " + fr.shape().str());
  const FlowEstimator& est = estimator[static_cast<std::size_t>(scale)];
  LevelResult res;
  if (!upflow) {
    res.flow = est(concat_channels({f1, fr}));
  } else {
    const Tensor pre = warp_bilinear(f1, *upflow);
    const Tensor residual = est(concat_channels({pre, fr}));
    res.flow = add(*upflow, residual);
  }
  res.warped = warp_bilinear(f1, res.flow);
  return res;
}

MsFlow::Result MsFlow::run(const FeaturePyramid& p1, const FeaturePyramid& pr) const {
  Result out;
  std::optional<FlowField> upflow;
  for (int s = 2; s >= 0; --s) {
    LevelResult lv = estimate_level(s, p1.level[static_cast<std::size_t>(s)],
                                    pr.level[static_cast<std::size_t>(s)], upflow);
    out.flows[static_cast<std::size_t>(s)] = lv.flow;
    out.warped[static_cast<std::size_t>(s)] = lv.warped;
    if (s > 0) upflow = upsample_flow(lv.flow);
  }
  return out;
}

void MsFlow::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t s = 0; s < estimator.size(); ++s)
    estimator[s].collect(out, prefix + ".est" + std::to_string(s));
}

MsFuse::MsFuse(int channels, std::mt19937_64& rng) {
  for (auto& conv : convs) conv = Conv2dLayer(2 * channels, channels, 3, 1, rng);
}

Tensor MsFuse::operator()(const std::array<Tensor, 3>& warped, const FeaturePyramid& pr) const {
  const Tensor o0 = relu(convs[0](concat_channels({warped[0], pr.level[0]})));
  const Tensor o1 = bilinear_upsample(relu(convs[1](concat_channels({warped[1], pr.level[1]}))), 2);
  const Tensor o2 = bilinear_upsample(relu(convs[2](concat_channels({warped[2], pr.level[2]}))), 4);
  return concat_channels({o0, o1, o2});
}

void MsFuse::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t s = 0; s < convs.size(); ++s)
    convs[s].collect(out, prefix + ".conv" + std::to_string(s));
}

HofHead::HofHead(int channels, std::mt19937_64& rng) {
  conv_in = Conv2dLayer(3 * channels, channels, 3, 1, rng);
  for (auto& r : rcabs) r = Rcab(channels, rng);
  conv_out = Conv2dLayer(channels, 3, 3, 1, rng);
}

Tensor HofHead::operator()(const std::array<Tensor, 3>& warped) const {
  const Tensor stacked = concat_channels(
      {warped[0], bilinear_upsample(warped[1], 2), bilinear_upsample(warped[2], 4)});
  Tensor h = relu(conv_in(stacked));
  for (const Rcab& r : rcabs) h = r(h);
  return sigmoid(conv_out(h));
}

void HofHead::collect(ParamList& out, const std::string& prefix) const {
  conv_in.collect(out, prefix + ".conv_in");
  for (std::size_t i = 0; i < rcabs.size(); ++i)
    rcabs[i].collect(out, prefix + ".rcab" + std::to_string(i));
  conv_out.collect(out, prefix + ".conv_out");
}

}  // namespace msff
