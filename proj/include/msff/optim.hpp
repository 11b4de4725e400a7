#pragma once

#include "msff/layers.hpp"

namespace msff {

/// lr_final + 0.5 * (lr_init - lr_final) * (1 + cos(pi * epoch / total)).
double cosine_lr(int epoch, int total_epochs, double lr_init, double lr_final);

/// Adam with bias correction. Moment buffers share the parameters' dtype.
class Adam {
 public:
  Adam() = default;
  Adam(const ParamList& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  /// One update from the gradients currently on the parameters. Throws if a
  /// trainable parameter has no gradient buffer.
  void step(const ParamList& params, double lr);

  std::int64_t step_count() const { return t_; }

  // Checkpoint access: first/second moment per parameter, in param order.
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::vector<Tensor> m, std::vector<Tensor> v, std::int64_t t);

 private:
  std::vector<Tensor> m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
};

}  // namespace msff
