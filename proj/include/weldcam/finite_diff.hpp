#pragma once

#include <functional>

#include "weldcam/tensor.hpp"

namespace weldcam {

/// Central-difference gradient of a scalar function:
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every coordinate i.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& point,
                        double eps);

}  // namespace weldcam
