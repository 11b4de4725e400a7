#include "msff/optim.hpp"

#include <cmath>
#include <numbers>

namespace msff {

double cosine_lr(int epoch, int total_epochs, double lr_init, double lr_final) {
  if (epoch < 0 || epoch > total_epochs) throw std::runtime_error("cosine_lr: epoch out of range");
  const double phase = std::numbers::pi * static_cast<double>(epoch) / total_epochs;
  return lr_final + 0.5 * (lr_init - lr_final) * (1.0 + std::cos(phase));
}

Adam::Adam(const ParamList& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& [name, p] : params) {
    m_.push_back(Tensor::zeros(p.shape(), p.dtype()));
    v_.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
}

void Adam::step(const ParamList& params, double lr) {
  if (params.size() != m_.size()) throw std::runtime_error("adam: parameter list changed size");
  ++t_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (!p.has_grad())
      throw std::runtime_error("adam: parameter '" + name + "' has no gradient");
    dispatch_dtype(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      T* w = const_cast<Tensor&>(p).data<T>();
      const T* g = grad_ptr<T>(*p.impl());
      T* m = m_[i].data<T>();
      T* v = v_[i].data<T>();
      const T b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
      const T corr1 = T(1) - static_cast<T>(std::pow(beta1_, static_cast<double>(t_)));
      const T corr2 = T(1) - static_cast<T>(std::pow(beta2_, static_cast<double>(t_)));
      const T alpha = static_cast<T>(lr);
      const T eps = static_cast<T>(eps_);
      const std::int64_t n = p.numel();
      for (std::int64_t j = 0; j < n; ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        const T mhat = m[j] / corr1;
        const T vhat = v[j] / corr2;
        w[j] -= alpha * mhat / (std::sqrt(vhat) + eps);
      }
    });
  }
}

void Adam::restore(std::vector<Tensor> m, std::vector<Tensor> v, std::int64_t t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace msff
