#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "tree_oracle.hpp"
#include "weldcam/classifiers.hpp"
#include "weldcam/errors.hpp"

using namespace weldcam;

namespace {

struct Data {
  std::vector<FeatureVector> x;
  std::vector<Label> y;
  void add(FeatureVector f, Label l) {
    x.push_back(f);
    y.push_back(l);
  }
};

Data xor_set() {
  Data d;
  d.add({0, 0, 0}, Label::ok);
  d.add({1, 1, 0}, Label::ok);
  d.add({0, 1, 0}, Label::nok);
  d.add({1, 0, 0}, Label::nok);
  return d;
}

// Random linearly separable 3-D set with a margin around a random plane.
Data separable(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double w0 = u(rng) - 0.5, w1 = u(rng) - 0.5, w2 = (u(rng) - 0.5) / 50.0;
  Data d;
  while (d.x.size() < n) {
    FeatureVector f{u(rng), u(rng), 100.0 * u(rng)};
    const double s = w0 * (f.score_1 - 0.5) + w1 * (f.score_2 - 0.5) + w2 * (f.rcr - 50.0);
    if (std::abs(s) < 0.05) continue;
    d.add(f, s > 0 ? Label::nok : Label::ok);
  }
  if (std::count(d.y.begin(), d.y.end(), Label::nok) == 0 || std::count(d.y.begin(), d.y.end(), Label::ok) == 0) {
    return separable(n, seed + 1000);
  }
  return d;
}

double train_accuracy(const Classifier& c, const Data& d) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) ok += classify(c, d.x[i]).label == d.y[i];
  return static_cast<double>(ok) / static_cast<double>(d.x.size());
}

}  // namespace

TEST_CASE("feature vectors validate their range") {
  CHECK_THROWS_AS((FeatureVector{0.5, 0.5, 101}.validate()), SpecError);
  CHECK_THROWS_AS((FeatureVector{std::nan(""), 0.5, 1}.validate()), NumericError);
  CHECK_NOTHROW((FeatureVector{2.0, -1.0, 0.0}.validate()));
}

TEST_CASE("tree: single sample is a single leaf") {
  const std::vector<FeatureVector> x{{0.3, 0.7, 10}};
  const std::vector<Label> y{Label::ok};
  const auto t = train_tree(x, y);
  REQUIRE(t.nodes.size() == 1);
  CHECK(t.nodes[0].leaf);
  CHECK(classify(t, x[0]).label == Label::ok);
  CHECK_THROWS_AS(train_tree(std::span<const FeatureVector>{}, std::span<const Label>{}), SpecError);
}

TEST_CASE("tree: 1-D example splits at 1.5 into pure children") {
  Data d;
  d.add({0, 0, 0}, Label::ok);
  d.add({1, 0, 0}, Label::ok);
  d.add({2, 0, 0}, Label::nok);
  d.add({3, 0, 0}, Label::nok);
  const auto t = train_tree(d.x, d.y);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold == 1.5);
  CHECK(t.nodes[t.nodes[0].left].leaf);
  CHECK(t.nodes[t.nodes[0].right].leaf);
  CHECK(gini(t.nodes[t.nodes[0].left].count_ok, t.nodes[t.nodes[0].left].count_nok) == 0.0);
  CHECK(t.nodes[t.nodes[0].left].label() == Label::ok);
  CHECK(t.nodes[t.nodes[0].right].label() == Label::nok);
}

TEST_CASE("tree: tie-break prefers the lowest feature and threshold") {
  Data d;  // features 0 and 1 carry identical information
  d.add({0, 0, 0}, Label::ok);
  d.add({1, 1, 0}, Label::nok);
  const auto t = train_tree(d.x, d.y);
  CHECK(t.nodes[0].feature == 0);
  Data e;  // thresholds 0.5 and 2.5 are equally good on feature 0
  e.add({0, 0, 0}, Label::ok);
  e.add({1, 0, 0}, Label::nok);
  e.add({2, 0, 0}, Label::nok);
  e.add({3, 0, 0}, Label::ok);
  const auto u = train_tree(e.x, e.y);
  CHECK(u.nodes[0].threshold == 0.5);
}

TEST_CASE("tree: chosen splits never raise weighted Gini; leaves stop at purity") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> g(0, 5), coin(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Data d;
    for (int i = 0; i < 30; ++i) d.add({double(g(rng)), double(g(rng)), 10.0 * g(rng)}, coin(rng) ? Label::ok : Label::nok);
    const auto t = train_tree(d.x, d.y);
    for (const auto& n : t.nodes) {
      CHECK(n.count_ok + n.count_nok > 0);
      if (n.leaf) continue;
      const auto& l = t.nodes[n.left];
      const auto& r = t.nodes[n.right];
      const double nl = double(l.count_ok + l.count_nok), nr = double(r.count_ok + r.count_nok);
      const double children = (nl * gini(l.count_ok, l.count_nok) + nr * gini(r.count_ok, r.count_nok)) / (nl + nr);
      CHECK(children <= gini(n.count_ok, n.count_nok) + 1e-15);
    }
    // every training point whose leaf is pure is classified correctly
    for (std::size_t i = 0; i < d.x.size(); ++i) {
      const auto& leaf = t.leaf_for(d.x[i]);
      if (leaf.count_ok == 0 || leaf.count_nok == 0) CHECK(classify(t, d.x[i]).label == d.y[i]);
    }
  }
}

TEST_CASE("tree matches the brute-force oracle on small grid datasets") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> g(0, 3);
  const auto grid = testing::oracle_grid();
  std::size_t datasets = 0;
  for (std::size_t n = 1; n <= 9; ++n) {
    std::vector<FeatureVector> layout;
    for (std::size_t i = 0; i < n; ++i) layout.push_back({double(g(rng)), double(g(rng)), 10.0 * g(rng)});
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
      std::vector<Label> y(n);
      std::vector<testing::OracleSample> samples;
      for (std::size_t i = 0; i < n; ++i) {
        y[i] = (mask >> i) & 1 ? Label::nok : Label::ok;
        samples.push_back({layout[i], y[i]});
      }
      const auto tree = train_tree(layout, y);
      const testing::TreeOracle oracle(samples);
      for (const auto& q : grid) REQUIRE(classify(tree, q).label == oracle.predict(q));
      ++datasets;
    }
  }
  CHECK(datasets == (1u << 10) - 2);
}

TEST_CASE("gbt: zero rounds predicts the prior log-odds") {
  Data d = separable(20, 1);
  BoostConfig cfg;
  cfg.rounds = 0;
  const auto m = train_gbt(d.x, d.y, cfg);
  const double nok = double(std::count(d.y.begin(), d.y.end(), Label::nok));
  const double prior = std::log(nok / (double(d.y.size()) - nok));
  CHECK(m.f0 == doctest::Approx(prior).epsilon(1e-15));
  CHECK(m.decision_value({0.1, 0.2, 50}) == m.f0);
}

TEST_CASE("gbt: separable 4-point set reaches 100% in 10 rounds") {
  Data d;
  d.add({0, 0, 0}, Label::ok);
  d.add({1, 0, 0}, Label::ok);
  d.add({2, 0, 0}, Label::nok);
  d.add({3, 0, 0}, Label::nok);
  BoostConfig cfg;
  cfg.rounds = 10;
  const auto m = train_gbt(d.x, d.y, cfg);
  for (std::size_t i = 0; i < 4; ++i) CHECK(classify(m, d.x[i]).label == d.y[i]);
}

TEST_CASE("gbt: shrinkage halves the first round's contribution") {
  const Data d = separable(30, 4);
  BoostConfig half, full;
  half.rounds = full.rounds = 1;
  half.eta = 0.5;
  full.eta = 1.0;
  const auto a = train_gbt(d.x, d.y, half), b = train_gbt(d.x, d.y, full);
  for (const auto& x : d.x) CHECK((a.decision_value(x) - a.f0) * 2.0 == doctest::Approx(b.decision_value(x) - b.f0).epsilon(1e-14));
}

TEST_CASE("gbt: decision value is F0 plus eta times the tree outputs") {
  const Data d = separable(25, 9);
  const auto m = train_gbt(d.x, d.y, BoostConfig{});
  for (const auto& x : d.x) {
    double f = m.f0;
    for (const auto& t : m.trees) f += m.eta * t.leaf_for(x).value;
    CHECK(m.decision_value(x) == f);
  }
}

TEST_CASE("gbt: training loss is non-increasing without subsampling") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Data d;
    for (int i = 0; i < 60; ++i) d.add({u(rng), u(rng), 100 * u(rng)}, u(rng) < 0.4 ? Label::nok : Label::ok);
    BoostConfig cfg;
    cfg.eta = trial % 2 ? 1.0 : 0.5;
    const auto m = train_gbt(d.x, d.y, cfg);
    REQUIRE(m.train_loss.size() == cfg.rounds + 1);
    for (std::size_t r = 1; r < m.train_loss.size(); ++r) CHECK(m.train_loss[r] <= m.train_loss[r - 1]);
  }
  Data one;
  one.add({0, 0, 0}, Label::ok);
  one.add({1, 0, 0}, Label::ok);
  CHECK_THROWS_AS(train_gbt(one.x, one.y), SpecError);
  BoostConfig bad;
  bad.eta = 0.0;
  CHECK_THROWS_AS(train_gbt(xor_set().x, xor_set().y, bad), SpecError);
}

TEST_CASE("gbt: subsampling is deterministic per seed") {
  const Data d = separable(40, 2);
  BoostConfig cfg;
  cfg.subsample = 0.5;
  const auto a = train_gbt(d.x, d.y, cfg), b = train_gbt(d.x, d.y, cfg);
  for (const auto& x : d.x) CHECK(a.decision_value(x) == b.decision_value(x));
}

TEST_CASE("kernel examples and symmetry") {
  const auto lin = KernelSpec::linear(), poly = KernelSpec::poly(5);
  CHECK(kernel_eval(lin, FeatureVector{1, 0, 0}, FeatureVector{1, 0, 0}) == 1.0);
  CHECK(kernel_eval(poly, FeatureVector{0, 0, 0}, FeatureVector{0, 0, 0}) == 1.0);
  CHECK(kernel_eval(poly, FeatureVector{3, 0, 0}, FeatureVector{1, 0, 0}) == 32.0);
  const KernelSpec unit{KernelKind::polynomial, 5, 1.0, 1.0};
  CHECK(kernel_eval(unit, FeatureVector{1, 0, 0}, FeatureVector{1, 0, 0}) == 32.0);
  CHECK_THROWS_AS(KernelSpec::poly(1).validate(), SpecError);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  std::vector<Point> v(10);
  for (auto& p : v) p = {n(rng), n(rng), n(rng)};
  for (const auto& spec : {lin, poly}) {
    Eigen::MatrixXd gram(10, 10);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 10; ++j) {
        gram(i, j) = kernel_eval(spec, v[i], v[j]);
        CHECK(gram(i, j) == kernel_eval(spec, v[j], v[i]));
      }
    const double scale = gram.cwiseAbs().maxCoeff();
    const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram / scale).eigenvalues().minCoeff();
    CHECK(min_eig >= -1e-8);
  }
}

TEST_CASE("svm: symmetric 1-D pair has its boundary at 0 and unit margin") {
  Data d;
  d.add({-1, 0, 0}, Label::ok);
  d.add({1, 0, 0}, Label::nok);
  SvmConfig cfg;
  cfg.c = 1e6;
  cfg.tolerance = 1e-9;
  const auto m = train_svm(d.x, d.y, cfg);
  CHECK(std::abs(m.decision_value({0, 0, 0})) <= 1e-9);
  CHECK(m.decision_value({1, 0, 0}) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(m.decision_value({-1, 0, 0}) == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("svm: XOR defeats the linear kernel but not poly5") {
  const Data d = xor_set();
  ClassifierConfig cfg;
  cfg.svm.c = 100.0;
  const auto lin = train_classifier(ClassifierKind::svm_linear, d.x, d.y, cfg);
  const auto poly = train_classifier(ClassifierKind::svm_poly, d.x, d.y, cfg);
  CHECK(train_accuracy(lin, d) < 1.0);
  CHECK(train_accuracy(poly, d) == 1.0);
}

TEST_CASE("svm: free support vectors satisfy the KKT margin") {
  const Data d = separable(40, 12);
  SvmConfig cfg;
  cfg.kernel = KernelSpec::poly(5);
  const auto m = train_svm(d.x, d.y, cfg);
  CHECK(m.residual < cfg.tolerance);
  std::size_t free = 0;
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    const Point p = m.scaler.apply(d.x[i]);
    for (std::size_t s = 0; s < m.support.size(); ++s) {
      if (m.support[s] != p || !(m.alpha[s] < m.c)) continue;
      ++free;
      const double y = d.y[i] == Label::nok ? 1.0 : -1.0;
      CHECK(std::abs(m.decision_value(d.x[i]) - y) <= cfg.tolerance);
    }
  }
  CHECK(free > 0);
  for (double a : m.alpha) {
    CHECK(a > 0.0);
    CHECK(a <= m.c);
  }
}

TEST_CASE("svm: duplicated training set gives the same decision function") {
  // Duplicating every point doubles the box-constrained dual; with C large
  // enough that no multiplier touches the box, the solution is unchanged.
  const Data d = separable(16, 3);
  Data twice = d;
  for (std::size_t i = 0; i < d.x.size(); ++i) twice.add(d.x[i], d.y[i]);
  SvmConfig cfg;
  cfg.c = 1e4;
  cfg.tolerance = 1e-8;
  for (const auto& kernel : {KernelSpec::linear(), KernelSpec::poly(5)}) {
    cfg.kernel = kernel;
    const auto a = train_svm(d.x, d.y, cfg), b = train_svm(twice.x, twice.y, cfg);
    for (double s1 = 0; s1 <= 1.0; s1 += 0.125)
      for (double s2 = 0; s2 <= 1.0; s2 += 0.125)
        for (double r = 0; r <= 100; r += 25) CHECK(std::abs(a.decision_value({s1, s2, r}) - b.decision_value({s1, s2, r})) <= 1e-6);
  }
}

TEST_CASE("svm: permuting the training set leaves the decision function unchanged") {
  Data d = separable(30, 21);
  d.y[3] = d.y[3] == Label::ok ? Label::nok : Label::ok;  // one flipped label keeps some multipliers at C
  SvmConfig cfg;
  cfg.tolerance = 1e-9;
  cfg.kernel = KernelSpec::poly(5);
  const auto a = train_svm(d.x, d.y, cfg);
  std::mt19937_64 rng(4);
  std::vector<std::size_t> perm(d.x.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (int t = 0; t < 3; ++t) {
    std::shuffle(perm.begin(), perm.end(), rng);
    Data p;
    for (auto i : perm) p.add(d.x[i], d.y[i]);
    const auto b = train_svm(p.x, p.y, cfg);
    for (double s1 = 0; s1 <= 1.0; s1 += 0.25)
      for (double s2 = 0; s2 <= 1.0; s2 += 0.25)
        for (double r = 0; r <= 100; r += 50) CHECK(std::abs(a.decision_value({s1, s2, r}) - b.decision_value({s1, s2, r})) <= 1e-6);
  }
}

TEST_CASE("svm: iteration cap reports the residual") {
  const Data d = separable(40, 5);
  SvmConfig cfg;
  cfg.max_iterations = 1;
  cfg.tolerance = 1e-12;
  try {
    train_svm(d.x, d.y, cfg);
    FAIL("expected ConvergenceError");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual() > cfg.tolerance);
  }
}

TEST_CASE("all four classifiers fit small separable sets") {
  ClassifierConfig cfg;
  cfg.svm.c = 1e3;
  cfg.boost.rounds = 200;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Data d = separable(20, seed);
    for (auto kind : kClassifierKinds) {
      const auto c = train_classifier(kind, d.x, d.y, cfg);
      CHECK_MESSAGE(train_accuracy(c, d) == 1.0, to_string(kind), " seed ", seed);
    }
  }
}

TEST_CASE("untrained classifiers raise a state error") {
  CHECK_THROWS_AS(classify(Classifier{}, {0, 0, 0}), StateError);
  CHECK_THROWS_AS(classify(DecisionTree{}, {0, 0, 0}), StateError);
  CHECK_THROWS_AS(classify(SvmModel{}, {0, 0, 0}), StateError);
  CHECK_THROWS_AS(classifier_to_bytes(Classifier{}), StateError);
  CHECK(parse_classifier_kind("gbt") == ClassifierKind::gbt);
  CHECK_THROWS_AS(parse_classifier_kind("knn"), SpecError);
}

TEST_CASE("classifier save/load round-trip") {
  const Data d = separable(30, 7);
  const auto path = std::filesystem::temp_directory_path() / "weldcam_clf.bin";
  for (auto kind : kClassifierKinds) {
    const auto c = train_classifier(kind, d.x, d.y);
    save_classifier(path, c);
    const auto back = load_classifier(path);
    CHECK(back.kind == kind);
    for (const auto& x : d.x) CHECK(classify(back, x).value == classify(c, x).value);
  }
  BoostConfig zero;
  zero.rounds = 0;
  ClassifierConfig cfg;
  cfg.boost = zero;
  const auto g0 = train_classifier(ClassifierKind::gbt, d.x, d.y, cfg);
  CHECK(classify(classifier_from_bytes(classifier_to_bytes(g0)), d.x[0]).value == classify(g0, d.x[0]).value);

  auto bytes = classifier_to_bytes(train_classifier(ClassifierKind::tree, d.x, d.y));
  bytes[bytes.size() - 5] ^= 0x40;
  CHECK_THROWS_AS(classifier_from_bytes(bytes), ChecksumError);
  bytes[0] = 'Z';
  CHECK_THROWS_AS(classifier_from_bytes(bytes), BadMagicError);
  std::filesystem::remove(path);
}

TEST_CASE("feature CSV round-trip") {
  const Data d = separable(12, 2);
  const auto path = std::filesystem::temp_directory_path() / "weldcam_features.csv";
  write_feature_csv(path, {d.x, d.y});
  const auto back = read_feature_csv(path);
  REQUIRE(back.features.size() == d.x.size());
  for (std::size_t i = 0; i < d.x.size(); ++i) {
    CHECK(back.features[i].score_1 == d.x[i].score_1);
    CHECK(back.features[i].rcr == d.x[i].rcr);
    CHECK(back.labels[i] == d.y[i]);
  }
  std::filesystem::remove(path);
}
