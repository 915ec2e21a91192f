#include <algorithm>
#include <cmath>
#include <limits>

#include "weldcam/classifiers.hpp"
#include "weldcam/errors.hpp"

namespace weldcam {

namespace {

constexpr double kTau = 1e-12;

}  // namespace

void KernelSpec::validate() const {
  if (kind == KernelKind::polynomial && degree < 2) throw SpecError("polynomial kernel needs degree >= 2");
  if (!std::isfinite(gamma) || !std::isfinite(coef0)) throw SpecError("kernel parameters must be finite");
}

double kernel_eval(const KernelSpec& spec, const Point& x, const Point& y) {
  double dot = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) dot += x[i] * y[i];
  if (spec.kind == KernelKind::linear) return dot;
  const double base = spec.gamma * dot + spec.coef0;
  double out = 1.0;
  for (int d = 0; d < spec.degree; ++d) out *= base;
  return out;
}

double kernel_eval(const KernelSpec& spec, const FeatureVector& x, const FeatureVector& y) {
  return kernel_eval(spec, x.values(), y.values());
}

Standardizer Standardizer::fit(std::span<const FeatureVector> features) {
  if (features.empty()) throw SpecError("cannot standardize zero samples");
  Standardizer s;
  const double n = static_cast<double>(features.size());
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    double mean = 0.0;
    for (const auto& x : features) mean += x[f];
    mean /= n;
    double var = 0.0;
    for (const auto& x : features) var += (x[f] - mean) * (x[f] - mean);
    const double sd = std::sqrt(var / n);
    s.mean[f] = mean;
    s.scale[f] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Point Standardizer::apply(const FeatureVector& x) const {
  Point p;
  for (std::size_t f = 0; f < kFeatureCount; ++f) p[f] = (x[f] - mean[f]) / scale[f];
  return p;
}

void SvmConfig::validate() const {
  kernel.validate();
  if (!(c > 0.0) || !std::isfinite(c)) throw SpecError("SVM C must be positive and finite");
  if (!(tolerance > 0.0)) throw SpecError("SVM tolerance must be positive");
  if (max_iterations == 0) throw SpecError("SVM iteration cap must be positive");
}

double SvmModel::decision_value(const FeatureVector& x) const {
  if (support.empty()) throw StateError("SVM is untrained");
  const Point p = scaler.apply(x);
  double f = bias;
  for (std::size_t i = 0; i < support.size(); ++i) f += coef[i] * kernel_eval(kernel, support[i], p);
  return f;
}

SvmModel train_svm(std::span<const FeatureVector> features, std::span<const Label> labels, const SvmConfig& config) {
  config.validate();
  const std::size_t n = features.size();
  if (n == 0 || n != labels.size()) throw SpecError("SVM training needs matching, nonempty inputs");
  for (const auto& f : features) f.validate();
  if (std::count(labels.begin(), labels.end(), Label::nok) == 0 ||
      std::count(labels.begin(), labels.end(), Label::ok) == 0) {
    throw SpecError("SVM training needs both labels present");
  }

  SvmModel m;
  m.kernel = config.kernel;
  m.c = config.c;
  if (config.standardize) m.scaler = Standardizer::fit(features);
  std::vector<Point> x(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = m.scaler.apply(features[i]);
    y[i] = labels[i] == Label::nok ? 1.0 : -1.0;
  }
  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) k[i * n + j] = k[j * n + i] = kernel_eval(m.kernel, x[i], x[j]);

  const double C = config.c;
  std::vector<double> alpha(n, 0.0), grad(n, -1.0);  // grad of 1/2 a'Qa - e'a
  auto in_up = [&](std::size_t t) { return y[t] > 0 ? alpha[t] < C : alpha[t] > 0; };
  auto in_low = [&](std::size_t t) { return y[t] > 0 ? alpha[t] > 0 : alpha[t] < C; };

  std::size_t iter = 0;
  double residual = std::numeric_limits<double>::infinity();
  for (;;) {
    // Working set selection using second-order information.
    double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      if (in_up(t) && -y[t] * grad[t] >= gmax) {
        gmax = -y[t] * grad[t];
        i = t;
      }
    }
    std::size_t j = n;
    double best_obj = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!in_low(t)) continue;
      const double v = -y[t] * grad[t];
      gmin = std::min(gmin, v);
      if (i == n) continue;
      const double b = gmax - v;
      if (b > 0) {
        double a = k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t];
        if (a <= 0) a = kTau;
        const double obj = -(b * b) / a;
        if (obj <= best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    residual = gmax - gmin;
    if (i == n || j == n || residual < config.tolerance) break;
    if (iter >= config.max_iterations) {
      throw ConvergenceError("SMO stopped at the iteration cap with KKT residual " + std::to_string(residual),
                             residual);
    }
    ++iter;

    const double ai = alpha[i], aj = alpha[j];
    const double kii = k[i * n + i], kjj = k[j * n + j], kij = k[i * n + j];
    double quad = kii + kjj - 2.0 * kij;
    if (quad <= 0) quad = kTau;
    if (y[i] != y[j]) {
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > 0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - ai, dj = alpha[j] - aj;
    for (std::size_t t = 0; t < n; ++t) {
      grad[t] += y[t] * (y[i] * k[t * n + i] * di + y[j] * k[t * n + j] * dj);
    }
  }

  // Bias from free vectors, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, free_sum = 0.0;
  std::size_t free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= C) {
      (y[t] < 0 ? ub : lb) = y[t] < 0 ? std::min(ub, yg) : std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      (y[t] > 0 ? ub : lb) = y[t] > 0 ? std::min(ub, yg) : std::max(lb, yg);
    } else {
      ++free;
      free_sum += yg;
    }
  }
  double r = 0.0;
  if (free > 0) {
    r = free_sum / static_cast<double>(free);
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    r = (ub + lb) / 2.0;
  } else {
    r = std::isfinite(ub) ? ub : lb;
  }
  m.bias = -r;
  m.residual = residual;
  m.iterations = iter;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0) {
      m.support.push_back(x[t]);
      m.alpha.push_back(alpha[t]);
      m.coef.push_back(alpha[t] * y[t]);
    }
  }
  return m;
}

Decision classify(const SvmModel& model, const FeatureVector& x) {
  const double v = model.decision_value(x);
  return {label_of_value(v), v};
}

}  // namespace weldcam
