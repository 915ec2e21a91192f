#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "weldcam/classifiers.hpp"
#include "weldcam/errors.hpp"

namespace weldcam {

namespace {

double sigmoid(double f) { return f >= 0 ? 1.0 / (1.0 + std::exp(-f)) : std::exp(f) / (1.0 + std::exp(f)); }

double log_loss(std::span<const double> f, std::span<const Label> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    // log(1 + e^{-m}) for margin m, written stably
    const double m = y[i] == Label::nok ? f[i] : -f[i];
    s += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  return s / static_cast<double>(f.size());
}

// Least-squares regression tree on residuals; leaves hold the mean residual.
class RegressionTreeBuilder {
 public:
  RegressionTreeBuilder(std::span<const FeatureVector> x, std::span<const Label> y, std::span<const double> r,
                        std::size_t max_depth)
      : x_(x), y_(y), r_(r), max_depth_(max_depth) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  std::size_t grow(std::vector<std::size_t> idx, std::size_t depth) {
    TreeNode node;
    double total = 0.0;
    for (auto i : idx) {
      (y_[i] == Label::ok ? node.count_ok : node.count_nok)++;
      total += r_[i];
    }
    const double n = static_cast<double>(idx.size());
    node.value = total / n;
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.push_back(node);
    if (idx.size() < 2 || depth >= max_depth_) return id;

    const double parent = total * total / n;
    double best = parent + 1e-12 * (1.0 + parent);
    bool found = false;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    std::vector<std::size_t> sorted = idx;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
      double left = 0.0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        left += r_[sorted[k]];
        const double a = x_[sorted[k]][f], b = x_[sorted[k + 1]][f];
        if (!(a < b)) continue;
        const double nl = static_cast<double>(k + 1), nr = n - nl;
        const double right = total - left;
        const double score = left * left / nl + right * right / nr;
        if (score > best) {
          best = score;
          found = true;
          best_feature = f;
          const double t = std::midpoint(a, b);
          best_threshold = t < b ? t : a;
        }
      }
    }
    if (!found) return id;

    std::vector<std::size_t> l, r;
    for (auto i : idx) (x_[i][best_feature] <= best_threshold ? l : r).push_back(i);
    tree_.nodes[id].leaf = false;
    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    const std::size_t li = grow(std::move(l), depth + 1);
    const std::size_t ri = grow(std::move(r), depth + 1);
    tree_.nodes[id].left = li;
    tree_.nodes[id].right = ri;
    return id;
  }

  std::span<const FeatureVector> x_;
  std::span<const Label> y_;
  std::span<const double> r_;
  std::size_t max_depth_;
  DecisionTree tree_;
};

}  // namespace

void BoostConfig::validate() const {
  if (!(eta > 0.0 && eta <= 1.0)) throw SpecError("shrinkage eta must lie in (0,1]");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw SpecError("subsample rate must lie in (0,1]");
  if (max_depth == 0) throw SpecError("boosted trees need max_depth >= 1");
}

double GbtModel::decision_value(const FeatureVector& x) const {
  double f = f0;
  for (const auto& t : trees) f += eta * t.leaf_for(x).value;
  return f;
}

GbtModel train_gbt(std::span<const FeatureVector> features, std::span<const Label> labels, const BoostConfig& config) {
  config.validate();
  if (features.empty() || features.size() != labels.size()) throw SpecError("boosting needs matching, nonempty inputs");
  for (const auto& f : features) f.validate();
  const auto n = features.size();
  const auto n_nok = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), Label::nok));
  if (n_nok == 0 || n_nok == n) throw SpecError("boosting needs both labels present");

  GbtModel m;
  m.eta = config.eta;
  m.f0 = std::log(static_cast<double>(n_nok) / static_cast<double>(n - n_nok));
  std::vector<double> f(n, m.f0), residual(n);
  m.train_loss.push_back(log_loss(f, labels));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto take = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(config.subsample * static_cast<double>(n))));

  for (std::size_t round = 0; round < config.rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = (labels[i] == Label::nok ? 1.0 : 0.0) - sigmoid(f[i]);
    std::vector<std::size_t> rows = all;
    if (take < n) {
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(take);
      std::sort(rows.begin(), rows.end());
    }
    DecisionTree t = RegressionTreeBuilder(features, labels, residual, config.max_depth).build(std::move(rows));
    for (std::size_t i = 0; i < n; ++i) f[i] += m.eta * t.leaf_for(features[i]).value;
    m.trees.push_back(std::move(t));
    m.train_loss.push_back(log_loss(f, labels));
  }
  return m;
}

Decision classify(const GbtModel& model, const FeatureVector& x) {
  const double v = model.decision_value(x);
  return {label_of_value(v), v};
}

}  // namespace weldcam
