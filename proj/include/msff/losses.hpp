#pragma once

#include "msff/tensor.hpp"

namespace msff {

/// mu-law tonemap T(H) = log(1 + mu*H) / log(1 + mu), differentiable.
/// Inputs are clamped to [0, 1] before mapping (a no-op after sigmoid heads).
Tensor tonemap_mu(const Tensor& x, double mu = 5000.0);

/// Mean absolute difference of tonemapped tensors.
Tensor loss_tm(const Tensor& pred, const Tensor& gt, double mu = 5000.0);
/// Same contract, applied to the warped-feature reconstruction.
Tensor loss_reg(const Tensor& h_of, const Tensor& gt, double mu = 5000.0);

struct LossReport {
  double l_tm = 0.0;
  double l_reg = 0.0;
  double total = 0.0;  // always l_tm + lambda * l_reg in this arithmetic
  double lambda = 0.0;
};

struct TotalLoss {
  Tensor value;  // scalar, on the tape
  LossReport report;
};

/// L = L_tm + lambda * L_reg.
TotalLoss total_loss(const Tensor& h_hat, const Tensor& h_of, const Tensor& gt, double lambda,
                     double mu = 5000.0);

}  // namespace msff
