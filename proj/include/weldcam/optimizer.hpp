#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace weldcam {

enum class OptimizerKind { sgd, adam, rmsprop };
enum class DecayKind { none, exponential };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double learning_rate = 0.01;

  DecayKind decay = DecayKind::none;
  double decay_start = 0.01;
  double decay_end = 0.0001;
  std::size_t decay_steps = 1;  ///< step budget over which start decays to end

  double beta1 = 0.9;    ///< adam first-moment decay
  double beta2 = 0.999;  ///< adam second-moment decay
  double rho = 0.9;      ///< rmsprop squared-gradient decay
  double epsilon = 1e-7;
  double weight_decay = 0.0;  ///< optional L2 term added to every gradient

  void validate() const;
};

OptimizerKind parse_optimizer_kind(const std::string& text);
std::string to_string(OptimizerKind kind);

/// Learning rate used at optimizer step `step` (0-based). The exponential
/// schedule interpolates geometrically: start at step 0, end at decay_steps,
/// held at end afterwards.
double learning_rate_at(const OptimizerConfig& config, std::size_t step);

/// Per-parameter moment buffers plus the step counter.
struct OptimizerState {
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

struct ParameterSlot {
  std::span<double> value;
  std::span<const double> grad;
};

/// Applies one update to every slot. Throws NumericError (and leaves all
/// parameters untouched) if any gradient is non-finite.
void optimizer_step(std::span<const ParameterSlot> parameters, const OptimizerConfig& config,
                    OptimizerState& state);

}  // namespace weldcam
