#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "weldcam/label.hpp"

namespace weldcam {

/// The three decision-stage inputs: both class scores and the red colour ratio.
struct FeatureVector {
  double score_1 = 0.0;  ///< OK score
  double score_2 = 0.0;  ///< NOK score
  double rcr = 0.0;      ///< percent, [0,100]

  std::array<double, 3> values() const { return {score_1, score_2, rcr}; }
  double operator[](std::size_t i) const { return values()[i]; }
  void validate() const;
};

inline constexpr std::size_t kFeatureCount = 3;

/// Decision value convention shared by every classifier: value >= 0 means NOK.
struct Decision {
  Label label = Label::nok;
  double value = 0.0;
};

inline Label label_of_value(double value) { return value >= 0.0 ? Label::nok : Label::ok; }

// ---------------------------------------------------------------- trees

struct TreeNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;  ///< x[feature] <= threshold goes left
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t count_ok = 0;
  std::size_t count_nok = 0;
  double value = 0.0;  ///< leaf output (regression trees)

  Label label() const { return count_nok >= count_ok ? Label::nok : Label::ok; }
};

/// Flat binary tree, root at index 0.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf_for(const FeatureVector& x) const;
  std::size_t depth() const;
};

struct TreeConfig {
  std::size_t max_depth = 0;          ///< 0 = unlimited
  std::size_t min_samples_split = 2;  ///< nodes with fewer samples become leaves
};

/// Gini-greedy classification tree grown until leaves are pure or too small
/// to split. Ties between candidate splits go to the lowest feature index,
/// then the lowest threshold. Thresholds are midpoints of consecutive
/// distinct observed values.
DecisionTree train_tree(std::span<const FeatureVector> features, std::span<const Label> labels,
                        const TreeConfig& config = {});

double gini(std::size_t count_ok, std::size_t count_nok);

/// Decision value (n_nok - n_ok) / n of the reached leaf.
Decision classify(const DecisionTree& tree, const FeatureVector& x);

// ---------------------------------------------------------------- boosting

struct BoostConfig {
  std::size_t rounds = 50;
  double eta = 0.5;          ///< shrinkage, (0,1]
  std::size_t max_depth = 3;
  double subsample = 1.0;    ///< uniform row sampling rate per round, (0,1]
  std::uint64_t seed = 1;

  void validate() const;
};

struct GbtModel {
  double f0 = 0.0;  ///< prior log-odds of NOK
  double eta = 0.5;
  std::vector<DecisionTree> trees;  ///< regression trees, leaf value = mean residual
  std::vector<double> train_loss;   ///< mean log-loss after each round (index 0 = F0)

  double decision_value(const FeatureVector& x) const;
};

/// Gradient boosting on log-loss: every round fits a regression tree to the
/// residuals y - sigmoid(F) and adds eta times it.
GbtModel train_gbt(std::span<const FeatureVector> features, std::span<const Label> labels,
                   const BoostConfig& config = {});

Decision classify(const GbtModel& model, const FeatureVector& x);

// ---------------------------------------------------------------- SVM

enum class KernelKind { linear, polynomial };

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  int degree = 1;
  double gamma = 1.0;
  double coef0 = 1.0;

  void validate() const;
  static KernelSpec linear() { return {}; }
  /// (gamma <x,y> + coef0)^degree with gamma = 1 / feature count, which keeps
  /// standardized inputs from blowing up at degree 5.
  static KernelSpec poly(int degree = 5) {
    return {KernelKind::polynomial, degree, 1.0 / static_cast<double>(kFeatureCount), 1.0};
  }
};

using Point = std::array<double, kFeatureCount>;

double kernel_eval(const KernelSpec& spec, const Point& x, const Point& y);
double kernel_eval(const KernelSpec& spec, const FeatureVector& x, const FeatureVector& y);

/// Zero-mean, unit-variance transform from training statistics; constant
/// features keep scale 1.
struct Standardizer {
  Point mean{0, 0, 0};
  Point scale{1, 1, 1};

  static Standardizer fit(std::span<const FeatureVector> features);
  Point apply(const FeatureVector& x) const;
};

struct SvmConfig {
  KernelSpec kernel;
  double c = 1.0;
  double tolerance = 1e-3;
  std::size_t max_iterations = 100000;  ///< pair updates
  bool standardize = true;

  void validate() const;
};

struct SvmModel {
  KernelSpec kernel;
  double c = 1.0;
  Standardizer scaler;
  std::vector<Point> support;     ///< in standardized coordinates
  std::vector<double> coef;       ///< alpha_i * y_i
  std::vector<double> alpha;      ///< alpha_i in [0, C]
  double bias = 0.0;
  double residual = 0.0;          ///< max KKT violation at exit
  std::size_t iterations = 0;

  /// f(x) = sum_i alpha_i y_i K(s_i, x) + b, labels NOK = +1.
  double decision_value(const FeatureVector& x) const;
};

/// Dual SMO with second-order working-set selection. Throws ConvergenceError
/// carrying the final KKT residual when the iteration cap is hit.
SvmModel train_svm(std::span<const FeatureVector> features, std::span<const Label> labels,
                   const SvmConfig& config = {});

Decision classify(const SvmModel& model, const FeatureVector& x);

// ---------------------------------------------------------------- any classifier

enum class ClassifierKind { tree, gbt, svm_linear, svm_poly };

inline constexpr std::array<ClassifierKind, 4> kClassifierKinds = {
    ClassifierKind::gbt, ClassifierKind::tree, ClassifierKind::svm_linear, ClassifierKind::svm_poly};

std::string to_string(ClassifierKind kind);
ClassifierKind parse_classifier_kind(const std::string& text);

struct ClassifierConfig {
  TreeConfig tree;
  BoostConfig boost;
  SvmConfig svm;  ///< kernel is overridden by the kind
  int poly_degree = 5;
};

struct Classifier {
  std::variant<std::monostate, DecisionTree, GbtModel, SvmModel> model;
  ClassifierKind kind = ClassifierKind::tree;

  bool trained() const { return model.index() != 0; }
};

Classifier train_classifier(ClassifierKind kind, std::span<const FeatureVector> features,
                            std::span<const Label> labels, const ClassifierConfig& config = {});

/// Throws StateError for an untrained classifier.
Decision classify(const Classifier& classifier, const FeatureVector& x);

inline constexpr std::uint32_t kClassifierVersion = 1;

void save_classifier(const std::filesystem::path& path, const Classifier& classifier);
Classifier load_classifier(const std::filesystem::path& path);
std::vector<std::uint8_t> classifier_to_bytes(const Classifier& classifier);
Classifier classifier_from_bytes(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------- feature tables

struct FeatureTable {
  std::vector<FeatureVector> features;
  std::vector<Label> labels;
};

/// Columns: score_1, score_2, rcr, label (OK|NOK).
void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_feature_csv(const std::filesystem::path& path);

}  // namespace weldcam
