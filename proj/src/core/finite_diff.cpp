#include "weldcam/finite_diff.hpp"

#include "weldcam/errors.hpp"

namespace weldcam {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& point,
                        double eps) {
  if (!(eps > 0.0)) throw SpecError("finite difference step must be > 0");
  Tensor grad(point.shape());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x = point[i];
    probe[i] = x + eps;
    const double up = f(probe);
    probe[i] = x - eps;
    const double down = f(probe);
    probe[i] = x;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace weldcam
