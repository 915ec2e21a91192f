#include <algorithm>
#include <cmath>
#include <numeric>

#include "weldcam/classifiers.hpp"
#include "weldcam/errors.hpp"

namespace weldcam {

namespace {

__extension__ using u128 = unsigned __int128;

// Weighted Gini of a split is 1 - S/n with S = sum_side (ok^2 + nok^2) / n_side,
// so the best split maximizes S. S is kept as an exact fraction.
struct SplitScore {
  u128 num = 0;
  u128 den = 1;

  static SplitScore of(std::size_t lo, std::size_t ln, std::size_t ro, std::size_t rn) {
    const u128 nl = lo + ln, nr = ro + rn;
    return {(u128(lo) * lo + u128(ln) * ln) * nr + (u128(ro) * ro + u128(rn) * rn) * nl, nl * nr};
  }
  bool better_than(const SplitScore& o) const { return num * o.den > o.num * den; }
};

double threshold_between(double a, double b) {
  const double t = std::midpoint(a, b);
  return t < b ? t : a;
}

class TreeBuilder {
 public:
  TreeBuilder(std::span<const FeatureVector> x, std::span<const Label> y, const TreeConfig& cfg)
      : x_(x), y_(y), cfg_(cfg) {}

  DecisionTree build() {
    std::vector<std::size_t> all(x_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    grow(std::move(all), 0);
    return std::move(tree_);
  }

 private:
  std::size_t grow(std::vector<std::size_t> idx, std::size_t depth) {
    TreeNode node;
    for (auto i : idx) (y_[i] == Label::ok ? node.count_ok : node.count_nok)++;
    node.value = (static_cast<double>(node.count_nok) - static_cast<double>(node.count_ok)) /
                 static_cast<double>(idx.size());
    const std::size_t id = tree_.nodes.size();
    tree_.nodes.push_back(node);

    const bool pure = node.count_ok == 0 || node.count_nok == 0;
    const bool too_small = idx.size() < std::max<std::size_t>(cfg_.min_samples_split, 2);
    const bool too_deep = cfg_.max_depth != 0 && depth >= cfg_.max_depth;
    if (pure || too_small || too_deep) return id;

    bool found = false;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    SplitScore best;
    std::vector<std::size_t> sorted = idx;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
      std::size_t lo = 0, ln = 0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        (y_[sorted[k]] == Label::ok ? lo : ln)++;
        const double a = x_[sorted[k]][f], b = x_[sorted[k + 1]][f];
        if (!(a < b)) continue;
        const SplitScore s = SplitScore::of(lo, ln, node.count_ok - lo, node.count_nok - ln);
        if (!found || s.better_than(best)) {
          found = true;
          best = s;
          best_feature = f;
          best_threshold = threshold_between(a, b);
        }
      }
    }
    if (!found) return id;  // every feature is constant here

    std::vector<std::size_t> left, right;
    for (auto i : idx) (x_[i][best_feature] <= best_threshold ? left : right).push_back(i);
    tree_.nodes[id].leaf = false;
    tree_.nodes[id].feature = best_feature;
    tree_.nodes[id].threshold = best_threshold;
    const std::size_t l = grow(std::move(left), depth + 1);
    const std::size_t r = grow(std::move(right), depth + 1);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  std::span<const FeatureVector> x_;
  std::span<const Label> y_;
  const TreeConfig& cfg_;
  DecisionTree tree_;
};

}  // namespace

void FeatureVector::validate() const {
  if (!std::isfinite(score_1) || !std::isfinite(score_2) || !std::isfinite(rcr)) {
    throw NumericError("feature vector has a non-finite entry");
  }
  if (rcr < 0.0 || rcr > 100.0) throw SpecError("rcr must lie in [0,100], got " + std::to_string(rcr));
}

double gini(std::size_t count_ok, std::size_t count_nok) {
  const double n = static_cast<double>(count_ok + count_nok);
  if (n == 0) return 0.0;
  const double p = static_cast<double>(count_ok) / n, q = static_cast<double>(count_nok) / n;
  return 1.0 - p * p - q * q;
}

const TreeNode& DecisionTree::leaf_for(const FeatureVector& x) const {
  if (nodes.empty()) throw StateError("decision tree is untrained");
  std::size_t at = 0;
  while (!nodes[at].leaf) at = x[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
  return nodes[at];
}

std::size_t DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {  // children always follow their parent
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].leaf) d[nodes[i].left] = d[nodes[i].right] = d[i] + 1;
  }
  return deepest;
}

DecisionTree train_tree(std::span<const FeatureVector> features, std::span<const Label> labels,
                        const TreeConfig& config) {
  if (features.empty()) throw SpecError("cannot train a tree on zero samples");
  if (features.size() != labels.size()) throw SpecError("feature and label counts differ");
  for (const auto& f : features) f.validate();
  return TreeBuilder(features, labels, config).build();
}

Decision classify(const DecisionTree& tree, const FeatureVector& x) {
  const TreeNode& leaf = tree.leaf_for(x);
  return {leaf.label(), leaf.value};
}

}  // namespace weldcam
