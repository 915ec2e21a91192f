#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "weldcam/graph.hpp"
#include "weldcam/label.hpp"
#include "weldcam/optimizer.hpp"

namespace weldcam {

enum class ModelFamily { mini_mobilenet, mini_resnet };

std::string to_string(ModelFamily family);
ModelFamily parse_model_family(const std::string& text);

/// Desk-scale CNN layout.
///
/// Both families share a stem: fixed input normalization, average pooling by `stem_pool`, then a 3x3
/// stride-2 conv to widths[0] channels. Block b (1-based) maps
/// widths[b-1] -> widths[b]:
///   mini_mobilenet  depthwise 3x3 + relu, pointwise 1x1 + relu
///   mini_resnet     conv 3x3 + relu, conv 3x3, identity add, relu
/// The head is global average pooling, dense to `classes`, softmax.
struct ModelSpec {
  ModelFamily family = ModelFamily::mini_mobilenet;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t channels = 3;
  std::size_t stem_pool = 4;
  std::size_t blocks = 2;
  std::vector<std::size_t> widths{8, 16, 16};
  /// Per-block spatial stride (1 or 2); empty means stride 1 everywhere.
  /// A strided resnet block average-pools its identity path.
  std::vector<std::size_t> strides;
  std::size_t classes = 2;
  double input_shift = -0.3;  ///< fixed normalization (x + shift) * scale ahead of the stem
  double input_scale = 3.0;

  void validate() const;
  /// Graph node whose activation and gradient feed Grad-CAM: the last conv
  /// (with its bias) before global pooling, taken before the nonlinearity.
  std::string last_conv_name() const;
  std::size_t stride(std::size_t block) const { return strides.empty() ? 1 : strides.at(block - 1); }
};

/// Well-known node names of a built model.
namespace nodes {
inline constexpr const char* image = "image";
inline constexpr const char* labels = "labels";
inline constexpr const char* logits = "logits";
inline constexpr const char* probs = "probs";
inline constexpr const char* loss = "loss";
}  // namespace nodes

struct Model {
  ModelSpec spec;
  Graph graph;
  std::map<std::string, std::string> metadata;  ///< e.g. training seed, dataset digest

  NodeId node(const char* name) const { return graph.require(name); }
  NodeId hook() const { return graph.require(spec.last_conv_name()); }
};

/// He-uniform weights from `seed`, zero biases.
Model build_model(const ModelSpec& spec, std::uint64_t seed);

std::size_t parameter_count(const Model& model);

enum class ScoreKind { probability, raw_score };

struct ScorePair {
  double score_ok = 0.0;
  double score_nok = 0.0;
  ScoreKind kind = ScoreKind::probability;

  Label argmax() const { return score_ok > score_nok ? Label::ok : Label::nok; }
};

/// Stacks [H,W,C] images into one [N,H,W,C] batch.
Tensor stack_images(std::span<const Tensor> images);

ScorePair predict_scores(const Model& model, const Tensor& image,
                         ScoreKind kind = ScoreKind::probability);
std::vector<ScorePair> predict_batch(const Model& model, std::span<const Tensor> images,
                                     ScoreKind kind = ScoreKind::probability);

struct TrainConfig {
  /// An exponential schedule with decay_steps 0 spans the whole run.
  OptimizerConfig optimizer;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;  ///< 1-based
  double loss = 0.0;      ///< sample-weighted mean over the epoch's batches
  double accuracy = 0.0;  ///< fraction of samples classified correctly before each update
};

using TrainHistory = std::vector<EpochStats>;

/// Mini-batch training with per-epoch shuffling. Deterministic in config.seed.
/// Throws NumericError naming the epoch and batch if the loss stops being finite.
TrainHistory train(Model& model, std::span<const Tensor> images, std::span<const Label> labels,
                   const TrainConfig& config);

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Fraction of images whose argmax matches the label.
double accuracy(const Model& model, std::span<const Tensor> images, std::span<const Label> labels);

inline constexpr std::uint32_t kFrozenModelVersion = 1;

/// Inference-only payload: spec, metadata and weights. No optimizer state.
void freeze(const Model& model, const std::filesystem::path& path);
Model load_frozen(const std::filesystem::path& path);

std::vector<std::uint8_t> freeze_to_bytes(const Model& model);
Model load_frozen_bytes(std::span<const std::uint8_t> bytes);

}  // namespace weldcam
