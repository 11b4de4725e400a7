#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msff/tensor.hpp"

namespace msff {

/// Scalar-valued closure over a list of input tensors.
using OpClosure = std::function<Tensor(const std::vector<Tensor>&)>;

/// Compares the recorded gradient of `closure` against central finite
/// differences. Returns the max over all input elements of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// Runs in 64-bit mode; inputs must already be f64.
double grad_check(const OpClosure& closure, std::vector<Tensor> inputs, double epsilon = 1e-5);

struct GradCheckResult {
  std::string op;
  double max_rel_error = 0.0;
  double threshold = 1e-4;
  bool passed() const { return max_rel_error < threshold; }
};

/// Named gradient checks covering every differentiable op plus composed
/// blocks (RCAB, the full network at a tiny configuration).
std::vector<std::string> gradcheck_op_names();
GradCheckResult run_gradcheck(const std::string& op, double epsilon = 1e-5);

}  // namespace msff
