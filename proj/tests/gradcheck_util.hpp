#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mast/params.hpp"
#include "mast/tensor.hpp"

namespace mast::testutil {

/// Finite-difference check of d(loss)/d(param) for a parameter bound inside a
/// network: perturbs the parameter storage in place and re-runs the forward.
/// Returns max relative error against the tape gradient.
/// max_coords <= 0 checks every coordinate; otherwise an evenly strided
/// subset (large conv kernels would need millions of forward passes).
inline double param_fd_check(ParamSet& params, Tensor& param,
                             const std::function<Tensor()>& forward_scalar, double eps,
                             int max_coords = 0) {
  params.zero_all_grads();
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor loss = forward_scalar();
    tape.backward(loss);
    analytic.assign(param.grad().begin(), param.grad().end());
  }
  double max_err = 0.0;
  auto pv = param.values();
  const std::size_t stride =
      max_coords <= 0 ? 1
                      : std::max<std::size_t>(1, pv.size() / static_cast<std::size_t>(max_coords));
  for (std::size_t i = 0; i < pv.size(); i += stride) {
    const double saved = pv[i];
    pv[i] = saved + eps;
    const double up = forward_scalar().value();
    pv[i] = saved - eps;
    const double down = forward_scalar().value();
    pv[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double err = std::fabs(analytic[i] - numeric) / std::max(1.0, std::fabs(analytic[i]));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace mast::testutil
