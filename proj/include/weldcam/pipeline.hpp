#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "weldcam/classifiers.hpp"
#include "weldcam/dataset.hpp"
#include "weldcam/gradcam.hpp"
#include "weldcam/heatmap.hpp"
#include "weldcam/model.hpp"

namespace weldcam {

/// Argmax of the two scores; an exact tie decides NOK.
Label decide_old(const ScorePair& scores);

enum class DecisionPath { old_path, new_path };

struct DecisionRecord {
  std::uint64_t image_id = 0;
  Label truth = Label::ok;
  ScorePair scores;
  double rcr = 0.0;
  Label decided = Label::ok;
  DecisionPath path = DecisionPath::new_path;
  std::string classifier;
};

/// Everything the explain step produces for one image.
struct Explanation {
  ScorePair scores;
  ClassActivationMap cam;
  Heatmap heatmap;
  HeatmapStats stats;

  FeatureVector features() const { return {scores.score_ok, scores.score_nok, stats.rcr}; }
};

/// predict_scores -> Grad-CAM for the argmax class -> normalize_upsample ->
/// colorize -> cluster_colors -> red_color_ratio.
Explanation explain(const Model& model, const Tensor& image, ScoreKind kind = ScoreKind::probability,
                    const ColorAnchorSet& anchors = {});
Explanation explain(const Model& model, Graph& workspace, const Tensor& image, ScoreKind kind,
                    const ColorAnchorSet& anchors);

DecisionRecord decide_new(const Model& model, const Classifier& classifier, const WeldImage& image,
                          ScoreKind kind = ScoreKind::probability);

/// One row per image, in input order. Parallel across images.
FeatureTable extract_features(const Model& model, std::span<const WeldImage> images,
                              ScoreKind kind = ScoreKind::probability);

struct ExperimentConfig {
  std::vector<std::uint64_t> seeds{1};
  std::vector<int> welds{1};
  std::vector<ModelFamily> extractors{ModelFamily::mini_mobilenet};
  std::vector<ClassifierKind> classifiers{kClassifierKinds.begin(), kClassifierKinds.end()};

  DatasetConfig dataset;  ///< weld and seed are overridden per cell
  bool bias = false;      ///< inject the label-correlated corner artifact into extractor training
  BiasConfig bias_config;
  double calibration_fraction = 0.4;  ///< share of the train split held out for the hybrid classifiers

  ModelSpec mobilenet;
  ModelSpec resnet;
  TrainConfig mobilenet_training;
  TrainConfig resnet_training;
  ClassifierConfig classifier_config;
  ScoreKind score_kind = ScoreKind::probability;

  ExperimentConfig();
  void validate() const;
};

/// key = value lines; '#' starts a comment. Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct Confusion {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;  ///< positive = NOK

  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const { return static_cast<double>(tp + tn) / static_cast<double>(total()); }
  void add(Label truth, Label decided);
};

struct ReportRow {
  std::uint64_t seed = 0;
  int weld = 0;
  ModelFamily extractor = ModelFamily::mini_mobilenet;
  std::string decision;  ///< "old" or "new"
  std::string classifier;  ///< "argmax" on the old path
  Confusion confusion;
  double delta_vs_old = 0.0;
};

/// Mean RCR per true label on one cell's evaluation split.
struct RcrSummary {
  std::uint64_t seed = 0;
  int weld = 0;
  ModelFamily extractor = ModelFamily::mini_mobilenet;
  double mean_rcr_ok = 0.0;
  double mean_rcr_nok = 0.0;
};

struct AccuracyReport {
  std::vector<ReportRow> rows;
  std::vector<RcrSummary> rcr;
  std::vector<std::uint64_t> seeds;
};

AccuracyReport run_experiment(const ExperimentConfig& config);

void write_report_csv(const std::filesystem::path& path, const AccuracyReport& report);
std::string report_csv(const AccuracyReport& report);
void write_rcr_csv(const std::filesystem::path& path, const AccuracyReport& report);
std::string rcr_csv(const AccuracyReport& report);
/// Welds x extractors by {old, classifiers...}, mean accuracy over seeds.
std::string format_report_table(const AccuracyReport& report);

struct CheckOutcome {
  bool passed = true;
  std::vector<std::string> lines;
};

/// The directional checks: per seed and cell the best hybrid classifier is at
/// least as accurate as argmax, the mean improvement is positive, and mean RCR
/// of NOK images is below that of OK images in at least 80% of cells.
CheckOutcome check_report(const AccuracyReport& report);

}  // namespace weldcam
