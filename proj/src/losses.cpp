#include "msff/losses.hpp"

#include <cmath>

#include "msff/ops.hpp"

namespace msff {

Tensor tonemap_mu(const Tensor& x, double mu) {
  if (mu <= 0) throw std::runtime_error("tonemap_mu: mu must be positive");
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xp = x.data<T>();
    T* op = out.data<T>();
    const T m = static_cast<T>(mu);
    const T denom = std::log1p(m);
    const std::int64_t n = x.numel();
    for (std::int64_t i = 0; i < n; ++i) {
      const T xc = std::clamp(xp[i], T(0), T(1));
      op[i] = std::log1p(m * xc) / denom;
    }
  });
  if (autograd::should_record({x})) {
    autograd::record("tonemap_mu", {x}, out, [xi = x.impl(), oi = out.impl(), mu] {
      dispatch_dtype(xi->dtype, [&](auto tag) {
        using T = decltype(tag);
        const T* go = grad_ptr<T>(*oi);
        const T* xp = xi->ptr<T>();
        T* gx = ensure_grad<T>(*xi);
        const T m = static_cast<T>(mu);
        const T denom = std::log1p(m);
        const std::int64_t n = xi->shape.numel();
        for (std::int64_t i = 0; i < n; ++i) {
          if (xp[i] < T(0) || xp[i] > T(1)) continue;  // clamped region
          gx[i] += go[i] * m / ((T(1) + m * xp[i]) * denom);
        }
      });
    });
  }
  return out;
}

Tensor loss_tm(const Tensor& pred, const Tensor& gt, double mu) {
  if (pred.shape() != gt.shape())
    throw ShapeError("loss_tm: shape mismatch " + pred.shape().str() + " vs " +
                     gt.shape().str());
  return mean(abs(sub(tonemap_mu(pred, mu), tonemap_mu(gt, mu))));
}

Tensor loss_reg(const Tensor& h_of, const Tensor& gt, double mu) {
  if (h_of.shape() != gt.shape())
    throw ShapeError("loss_reg: shape mismatch " + h_of.shape().str() + " vs " +
                     gt.shape().str());
  return mean(abs(sub(tonemap_mu(h_of, mu), tonemap_mu(gt, mu))));
}

TotalLoss total_loss(const Tensor& h_hat, const Tensor& h_of, const Tensor& gt, double lambda,
                     double mu) {
  TotalLoss out;
  const Tensor tm = loss_tm(h_hat, gt, mu);
  const Tensor reg = loss_reg(h_of, gt, mu);
  out.value = add(tm, mul_scalar(reg, lambda));
  out.report.l_tm = tm.item();
  out.report.l_reg = reg.item();
  out.report.lambda = lambda;
  // Recombined in report arithmetic so the identity holds exactly.
  out.report.total = out.report.l_tm + lambda * out.report.l_reg;
  return out;
}

}  // namespace msff
