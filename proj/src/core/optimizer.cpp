#include "weldcam/optimizer.hpp"

#include <cmath>

#include "weldcam/errors.hpp"

namespace weldcam {

void OptimizerConfig::validate() const {
  if (decay == DecayKind::none) {
    if (!(learning_rate > 0.0)) throw SpecError("learning rate must be > 0");
  } else {
    if (!(decay_start > decay_end && decay_end > 0.0)) {
      throw SpecError("exponential decay requires start > end > 0");
    }
    if (decay_steps == 0) throw SpecError("exponential decay needs a positive step budget");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw SpecError("adam betas must lie in [0,1)");
  }
  if (!(rho >= 0.0 && rho < 1.0)) throw SpecError("rmsprop rho must lie in [0,1)");
  if (!(epsilon > 0.0)) throw SpecError("optimizer epsilon must be > 0");
  if (weight_decay < 0.0) throw SpecError("weight decay must be >= 0");
}

OptimizerKind parse_optimizer_kind(const std::string& text) {
  if (text == "sgd") return OptimizerKind::sgd;
  if (text == "adam") return OptimizerKind::adam;
  if (text == "rmsprop") return OptimizerKind::rmsprop;
  throw SpecError("unknown optimizer '" + text + "'");
}

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::rmsprop: return "rmsprop";
  }
  return "?";
}

double learning_rate_at(const OptimizerConfig& config, std::size_t step) {
  if (config.decay == DecayKind::none) return config.learning_rate;
  if (step >= config.decay_steps) return config.decay_end;
  const double t = static_cast<double>(step) / static_cast<double>(config.decay_steps);
  return config.decay_start * std::pow(config.decay_end / config.decay_start, t);
}

void optimizer_step(std::span<const ParameterSlot> parameters, const OptimizerConfig& config,
                    OptimizerState& state) {
  for (std::size_t p = 0; p < parameters.size(); ++p) {
    const auto& slot = parameters[p];
    if (slot.value.size() != slot.grad.size()) {
      throw ShapeError("parameter " + std::to_string(p) + " has " +
                       std::to_string(slot.value.size()) + " values but " +
                       std::to_string(slot.grad.size()) + " gradients");
    }
    for (std::size_t i = 0; i < slot.grad.size(); ++i) {
      if (!std::isfinite(slot.grad[i])) {
        throw NumericError("non-finite gradient in parameter " + std::to_string(p) + " at element " +
                           std::to_string(i) + "; step " + std::to_string(state.step) + " aborted");
      }
    }
  }

  if (state.first_moment.size() != parameters.size()) {
    state.first_moment.assign(parameters.size(), {});
    state.second_moment.assign(parameters.size(), {});
    for (std::size_t p = 0; p < parameters.size(); ++p) {
      state.first_moment[p].assign(parameters[p].value.size(), 0.0);
      state.second_moment[p].assign(parameters[p].value.size(), 0.0);
    }
  }

  const double lr = learning_rate_at(config, state.step);
  const double t = static_cast<double>(state.step + 1);
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);

  for (std::size_t p = 0; p < parameters.size(); ++p) {
    const auto& slot = parameters[p];
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != slot.value.size()) {
      throw ShapeError("optimizer state does not match parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < slot.value.size(); ++i) {
      const double g = slot.grad[i] + config.weight_decay * slot.value[i];
      switch (config.kind) {
        case OptimizerKind::sgd:
          slot.value[i] -= lr * g;
          break;
        case OptimizerKind::adam: {
          m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
          v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
          const double mhat = m[i] / bias1;
          const double vhat = v[i] / bias2;
          slot.value[i] -= lr * mhat / (std::sqrt(vhat) + config.epsilon);
          break;
        }
        case OptimizerKind::rmsprop:
          v[i] = config.rho * v[i] + (1.0 - config.rho) * g * g;
          slot.value[i] -= lr * g / (std::sqrt(v[i]) + config.epsilon);
          break;
      }
    }
  }
  ++state.step;
}

}  // namespace weldcam
