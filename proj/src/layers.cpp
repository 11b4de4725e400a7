#include "msff/layers.hpp"

#include <cmath>

namespace msff {

Conv2dLayer::Conv2dLayer(int in_c, int out_c, int k, int stride_, std::mt19937_64& rng,
                         bool zero_init)
    : stride(stride_), padding((k - 1) / 2) {
  const Shape ws{out_c, in_c, k, k};
  if (zero_init) {
    weight = Tensor::zeros(ws);
  } else {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_c) * k * k);
    weight = Tensor::rand_uniform(ws, -bound, bound, rng);
  }
  bias = Tensor::zeros({1, out_c, 1, 1});
  weight.set_requires_grad(true);
  bias.set_requires_grad(true);
}

void Conv2dLayer::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", weight);
  out.emplace_back(prefix + ".b", bias);
}

int rcab_ratio(int channels) {
  int ratio = channels / 4;
  if (ratio < 1) ratio = 1;
  while (channels % ratio != 0) --ratio;
  return ratio;
}

Rcab::Rcab(int channels, std::mt19937_64& rng) : ratio(rcab_ratio(channels)) {
  conv1 = Conv2dLayer(channels, channels, 3, 1, rng);
  conv2 = Conv2dLayer(channels, channels, 3, 1, rng, /*zero_init=*/true);
  att_down = Conv2dLayer(channels, channels / ratio, 1, 1, rng);
  att_up = Conv2dLayer(channels / ratio, channels, 1, 1, rng);
}

Tensor Rcab::operator()(const Tensor& x) const {
  const Tensor u = conv2(relu(conv1(x)));
  const Tensor gate = sigmoid(att_up(relu(att_down(global_avg_pool(u)))));
  return add(x, scale_broadcast(u, gate));
}

void Rcab::collect(ParamList& out, const std::string& prefix) const {
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
  att_down.collect(out, prefix + ".att_down");
  att_up.collect(out, prefix + ".att_up");
}

}  // namespace msff
