#include "msff/merging.hpp"

namespace msff {

MergeNet::MergeNet(int channels, std::mt19937_64& rng) {
  head = Conv2dLayer(3 * channels, channels, 3, 1, rng);
  for (auto& r : rcabs) r = Rcab(channels, rng);
  tail1 = Conv2dLayer(3 * channels, channels, 3, 1, rng);
  tail2 = Conv2dLayer(channels, channels, 3, 1, rng);
  tail3 = Conv2dLayer(channels, 3, 3, 1, rng);
}

Tensor MergeNet::operator()(const Tensor& z0, const Tensor& fr0) const {
  const Tensor z1 = relu(head(z0));
  const Tensor z2 = rcabs[0](z1);
  const Tensor z3 = rcabs[1](z2);
  const Tensor z4 = rcabs[2](z3);
  const Tensor z5 = concat_channels({z2, z3, z4});
  Tensor t = relu(tail1(z5));
  t = add(t, fr0);  // global skip with the reference scale-0 features
  t = relu(tail2(t));
  return sigmoid(tail3(t));
}

void MergeNet::collect(ParamList& out, const std::string& prefix) const {
  head.collect(out, prefix + ".head");
  for (std::size_t i = 0; i < rcabs.size(); ++i)
    rcabs[i].collect(out, prefix + ".rcab" + std::to_string(i));
  tail1.collect(out, prefix + ".tail1");
  tail2.collect(out, prefix + ".tail2");
  tail3.collect(out, prefix + ".tail3");
}

MsffNet::MsffNet(int channels_, std::uint64_t seed) : channels(channels_) {
  std::mt19937_64 rng(seed);
  extract1 = FeatureExtractor(6, channels, rng);
  extract_r = FeatureExtractor(6, channels, rng);
  flow = MsFlow(channels, rng);
  fuse = MsFuse(channels, rng);
  hof = HofHead(channels, rng);
  merge = MergeNet(channels, rng);
}

MsffNet::Outputs MsffNet::forward(const Tensor& x1, const Tensor& xr) const {
  const FeaturePyramid p1 = extract1(x1);
  const FeaturePyramid pr = extract_r(xr);
  MsFlow::Result aligned = flow.run(p1, pr);
  Outputs out;
  out.flows = aligned.flows;
  out.warped = aligned.warped;
  out.fused = fuse(aligned.warped, pr);
  out.h_of = hof(aligned.warped);
  out.h_hat = merge(out.fused, pr.level[0]);
  return out;
}

MsffNet::Outputs MsffNet::forward_stack(const ExposureStack& stack, double gamma) const {
  const Tensor x1 = make_input(stack.ldr[0], gamma);
  const Tensor xr = make_input(stack.ldr[1], gamma);
  return forward(x1, xr);
}

ParamList MsffNet::parameters() const {
  ParamList params;
  extract1.collect(params, "extract1");
  extract_r.collect(params, "extract_r");
  flow.collect(params, "flow");
  fuse.collect(params, "fuse");
  hof.collect(params, "hof");
  merge.collect(params, "merge");
  return params;
}

namespace {

FlowImage flow_tensor_to_image(const Tensor& t) {
  FlowImage f;
  f.height = t.shape().h;
  f.width = t.shape().w;
  f.xy.resize(static_cast<std::size_t>(f.height) * f.width * 2);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x)
      f.set(y, x, static_cast<float>(t.at(0, 0, y, x)), static_cast<float>(t.at(0, 1, y, x)));
  return f;
}

HdrImage crop_hdr_to(const HdrImage& img, int h, int w) {
  if (img.height == h && img.width == w) return img;
  HdrImage out;
  out.height = h;
  out.width = w;
  out.rgb.resize(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c);
  return out;
}

}  // namespace

InferenceResult infer_full(const MsffNet& net, const ExposureStack& stack, double gamma) {
  NoGradScope no_grad;
  const int h = stack.height(), w = stack.width();
  ExposureStack padded;
  padded.ldr[0] = reflect_pad_to_multiple(stack.ldr[0], 4);
  padded.ldr[1] = reflect_pad_to_multiple(stack.ldr[1], 4);
  MsffNet::Outputs out = net.forward_stack(padded, gamma);
  InferenceResult res;
  res.h_hat = crop_hdr_to(tensor_to_hdr(out.h_hat), h, w);
  res.h_of = crop_hdr_to(tensor_to_hdr(out.h_of), h, w);
  for (std::size_t s = 0; s < 3; ++s) res.flows[s] = flow_tensor_to_image(out.flows[s]);
  return res;
}

}  // namespace msff
