#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "doctest.h"
#include "weldcam/errors.hpp"
#include "weldcam/pipeline.hpp"

using namespace weldcam;

namespace {

DatasetConfig small_data(std::size_t count, std::uint64_t seed) {
  DatasetConfig d;
  d.count = count;
  d.nok_fraction = 0.3;
  d.height = 64;
  d.width = 64;
  d.seed = seed;
  return d;
}

// A briefly trained 64x64 extractor. Cached: several cases share it.
const Model& trained_model() {
  static const Model model = [] {
    ModelSpec spec;
    spec.height = 64;
    spec.width = 64;
    spec.widths = {6, 8, 8};
    Model m = build_model(spec, 11);
    const auto images = generate(small_data(40, 5));
    std::vector<Tensor> px;
    std::vector<Label> lb;
    for (const auto& i : images) {
      px.push_back(i.pixels);
      lb.push_back(i.label);
    }
    TrainConfig tc;
    tc.optimizer.kind = OptimizerKind::adam;
    tc.optimizer.learning_rate = 0.01;
    tc.batch_size = 8;
    tc.epochs = 20;
    train(m, px, lb, tc);
    return m;
  }();
  return model;
}

// Decides from score_2 alone: NOK iff the NOK probability is at least 1/2.
Classifier score_only_tree() {
  DecisionTree t;
  TreeNode root;
  root.leaf = false;
  root.feature = 1;
  root.threshold = std::nextafter(0.5, 0.0);
  root.left = 1;
  root.right = 2;
  TreeNode ok, nok;
  ok.count_ok = 1;
  nok.count_nok = 1;
  t.nodes = {root, ok, nok};
  return {t, ClassifierKind::tree};
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig c;
  c.seeds = {3};
  c.welds = {1};
  c.dataset = small_data(60, 0);
  c.dataset.augment_multiplier = 2;
  c.mobilenet.widths = {6, 8, 8};
  c.mobilenet_training.epochs = 3;
  c.mobilenet_training.batch_size = 8;
  return c;
}

}  // namespace

TEST_CASE("decide_old examples") {
  CHECK(decide_old({0.9, 0.1}) == Label::ok);
  CHECK(decide_old({0.1, 0.9}) == Label::nok);
  CHECK(decide_old({0.5, 0.5}) == Label::nok);
  CHECK(decide_old({-3.0, -3.0, ScoreKind::raw_score}) == Label::nok);
  CHECK(decide_old({7.5, 2.0, ScoreKind::raw_score}) == Label::ok);
  CHECK_THROWS_AS(decide_old({std::nan(""), 0.1}), NumericError);
  CHECK_THROWS_AS(decide_old({0.1, std::numeric_limits<double>::infinity()}), NumericError);
}

TEST_CASE("a classifier that reads only the scores reproduces the argmax path") {
  const Model& model = trained_model();
  const Classifier clf = score_only_tree();
  DatasetConfig d = small_data(200, 77);
  const auto images = generate(d);
  std::size_t said_nok = 0;
  for (const auto& img : images) {
    const DecisionRecord rec = decide_new(model, clf, img);
    const Label old = decide_old(predict_scores(model, img.pixels));
    REQUIRE(rec.decided == old);
    said_nok += old == Label::nok;
    CHECK(rec.image_id == img.seed);
    CHECK(rec.truth == img.label);
    CHECK(rec.path == DecisionPath::new_path);
    CHECK(rec.classifier == "tree");
  }
  // both outcomes occur, so the comparison is not vacuous
  CHECK(said_nok > 0);
  CHECK(said_nok < images.size());
}

TEST_CASE("all-zero activation map gives rcr 0 and the tie features") {
  ModelSpec spec;
  spec.height = 64;
  spec.width = 64;
  Model m = build_model(spec, 1);
  for (NodeId p : m.graph.parameters()) m.graph.parameter_value(p).fill(0.0);
  const WeldImage img = render_weld(weld_variant(1), DefectKind::crack, 9, 64, 64);

  const Explanation e = explain(m, img.pixels);
  CHECK(std::all_of(e.heatmap.grid.values().begin(), e.heatmap.grid.values().end(),
                    [](double v) { return v == 0.0; }));
  CHECK(e.stats.red == 0);
  CHECK(e.stats.total == 64 * 64);
  const FeatureVector f = e.features();
  CHECK(f.score_1 == 0.5);
  CHECK(f.score_2 == 0.5);
  CHECK(f.rcr == 0.0);
  CHECK(e.cam.target == Label::nok);

  const DecisionRecord rec = decide_new(m, score_only_tree(), img);
  CHECK(rec.rcr == 0.0);
  CHECK(rec.decided == Label::nok);
}

TEST_CASE("record rcr matches the exported heatmap grid") {
  const Model& model = trained_model();
  const auto dir = std::filesystem::temp_directory_path() / "weldcam_pipeline_test";
  std::filesystem::create_directories(dir);
  const auto images = generate(small_data(12, 31));
  for (const auto& img : images) {
    const Explanation e = explain(model, img.pixels);
    const auto path = dir / ("heat_" + std::to_string(img.seed) + ".csv");
    write_grid_csv(path, e.heatmap.grid);
    const HeatmapStats again = analyze_heatmap(Heatmap{read_grid_csv(path)});
    CHECK(again.red == e.stats.red);
    CHECK(again.rcr == e.stats.rcr);
    CHECK(decide_new(model, score_only_tree(), img).rcr == e.stats.rcr);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("extract_features: one row per image, in order, rcr in range") {
  const Model& model = trained_model();
  const auto images = generate(small_data(30, 8));
  const FeatureTable t = extract_features(model, images);
  REQUIRE(t.features.size() == images.size());
  REQUIRE(t.labels.size() == images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    CHECK(t.labels[i] == images[i].label);
    CHECK(t.features[i].rcr >= 0.0);
    CHECK(t.features[i].rcr <= 100.0);
    // parallel extraction agrees with the one-image path bit for bit
    const FeatureVector one = explain(model, images[i].pixels).features();
    CHECK(one.score_1 == t.features[i].score_1);
    CHECK(one.score_2 == t.features[i].score_2);
    CHECK(one.rcr == t.features[i].rcr);
  }
  CHECK(extract_features(model, std::span<const WeldImage>{}).features.empty());
}

TEST_CASE("raw scores flow through to the features") {
  const Model& model = trained_model();
  const WeldImage img = render_weld(weld_variant(2), DefectKind::none, 4, 64, 64);
  const Explanation p = explain(model, img.pixels, ScoreKind::probability);
  const Explanation z = explain(model, img.pixels, ScoreKind::raw_score);
  CHECK(z.scores.kind == ScoreKind::raw_score);
  CHECK(std::abs(p.scores.score_ok + p.scores.score_nok - 1.0) < 1e-12);
  CHECK(decide_old(p.scores) == decide_old(z.scores));
  CHECK(p.stats.rcr == z.stats.rcr);
}

TEST_CASE("confusion counts") {
  Confusion c;
  c.add(Label::nok, Label::nok);
  c.add(Label::nok, Label::ok);
  c.add(Label::ok, Label::ok);
  c.add(Label::ok, Label::ok);
  c.add(Label::ok, Label::nok);
  CHECK(c.tp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 2);
  CHECK(c.fp == 1);
  CHECK(c.total() == 5);
  CHECK(c.accuracy() == 3.0 / 5.0);
}

TEST_CASE("experiment config parsing") {
  const ExperimentConfig c = parse_experiment_config(R"(
# comment line
seeds = 4, 5 ,6
welds = 2,3
extractors = mini_resnet, mobilenet
classifiers = tree, svm_poly
count = 120   # trailing comment
nok_fraction = 0.25
bias = true
bias.p_given_ok = 0.8
kind_weights = 0, 0, 0, 1, 0
score_kind = raw_score
mobilenet.optimizer = rmsprop
mobilenet.decay = exponential
mobilenet.decay_steps = 0
resnet.widths = 8, 8, 8
resnet.learning_rate = 0.002
gbt.rounds = 7
svm.standardize = false
svm.poly_degree = 3
calibration_fraction = 0.5
)");
  CHECK(c.seeds == std::vector<std::uint64_t>{4, 5, 6});
  CHECK(c.welds == std::vector<int>{2, 3});
  CHECK(c.extractors == std::vector<ModelFamily>{ModelFamily::mini_resnet, ModelFamily::mini_mobilenet});
  CHECK(c.classifiers == std::vector<ClassifierKind>{ClassifierKind::tree, ClassifierKind::svm_poly});
  CHECK(c.dataset.count == 120);
  CHECK(c.dataset.nok_fraction == 0.25);
  CHECK(c.bias);
  CHECK(c.bias_config.p_given_ok == 0.8);
  REQUIRE(c.dataset.kind_weights);
  CHECK((*c.dataset.kind_weights)[3] == 1.0);
  CHECK(c.score_kind == ScoreKind::raw_score);
  CHECK(c.mobilenet_training.optimizer.kind == OptimizerKind::rmsprop);
  CHECK(c.mobilenet_training.optimizer.decay == DecayKind::exponential);
  CHECK(c.resnet.widths == std::vector<std::size_t>{8, 8, 8});
  CHECK(c.resnet_training.optimizer.learning_rate == 0.002);
  CHECK(c.classifier_config.boost.rounds == 7);
  CHECK_FALSE(c.classifier_config.svm.standardize);
  CHECK(c.classifier_config.poly_degree == 3);
  CHECK(c.calibration_fraction == 0.5);

  CHECK_THROWS_AS(parse_experiment_config("colour = red"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("count = 5\ncount = 6"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("count = five"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("count"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("welds = 5"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("seeds ="), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("bias = maybe"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("kind_weights = 1, 2"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("calibration_fraction = 1"), SpecError);
  CHECK_THROWS_AS(parse_experiment_config("resnet.widths = 8, 16, 16"), SpecError);
  CHECK_NOTHROW(parse_experiment_config(""));
}

TEST_CASE("run_experiment: report shape, exact accuracies and deltas") {
  ExperimentConfig c = tiny_experiment();
  c.welds = {1, 4};
  const AccuracyReport r = run_experiment(c);
  const std::size_t cells = 2, per_cell = 1 + c.classifiers.size();
  REQUIRE(r.rows.size() == cells * per_cell);
  REQUIRE(r.rcr.size() == cells);
  CHECK(r.seeds == c.seeds);

  // 60 images, 30% NOK, 80% train: 12 test images (4 NOK)
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const ReportRow& old = r.rows[cell * per_cell];
    CHECK(old.decision == "old");
    CHECK(old.classifier == "argmax");
    CHECK(old.delta_vs_old == 0.0);
    for (std::size_t j = 0; j < per_cell; ++j) {
      const ReportRow& row = r.rows[cell * per_cell + j];
      const Confusion& k = row.confusion;
      CHECK(k.total() == 12);
      CHECK(k.tp + k.fn == 4);
      CHECK(row.confusion.accuracy() == static_cast<double>(k.tp + k.tn) / static_cast<double>(k.total()));
      CHECK(row.delta_vs_old == row.confusion.accuracy() - old.confusion.accuracy());
      CHECK(row.weld == old.weld);
    }
    CHECK(r.rcr[cell].mean_rcr_ok >= 0.0);
    CHECK(r.rcr[cell].mean_rcr_nok <= 100.0);
  }
  std::set<std::string> names;
  for (std::size_t j = 1; j < per_cell; ++j) names.insert(r.rows[j].classifier);
  CHECK(names == std::set<std::string>{"gbt", "tree", "svm_linear", "svm_poly"});

  const std::string table = format_report_table(r);
  CHECK(table.find("svm_poly") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 4);
  const std::string csv = report_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 10);
}

TEST_CASE("run_experiment is bit-reproducible") {
  ExperimentConfig c = tiny_experiment();
  c.bias = true;
  const AccuracyReport a = run_experiment(c);
  const AccuracyReport b = run_experiment(c);
  CHECK(report_csv(a) == report_csv(b));
  CHECK(rcr_csv(a) == rcr_csv(b));
  c.seeds = {4};
  CHECK(report_csv(run_experiment(c)) != report_csv(a));
}

TEST_CASE("separable single-weld set reaches 100% in every cell") {
  ExperimentConfig c = tiny_experiment();
  c.dataset.height = 128;
  c.dataset.width = 128;
  c.dataset.count = 150;
  c.dataset.kind_weights = std::array<double, 5>{0, 0, 0, 1, 0};  // missing segments only
  c.mobilenet_training.epochs = 30;
  const AccuracyReport r = run_experiment(c);
  for (const auto& row : r.rows) {
    INFO(row.classifier);
    CHECK(row.confusion.accuracy() == 1.0);
  }
}

TEST_CASE("stage failures carry their coordinates") {
  ExperimentConfig c = tiny_experiment();
  c.seeds = {7};
  c.dataset.count = 20;
  c.dataset.nok_fraction = 0.05;  // a single NOK image cannot be stratified
  try {
    run_experiment(c);
    FAIL("expected a StageError");
  } catch (const StageError& e) {
    const std::string what = e.what();
    CHECK(what.find("dataset") != std::string::npos);
    CHECK(what.find("seed 7") != std::string::npos);
    CHECK(what.find("weld 1") != std::string::npos);
  }
}

TEST_CASE("check_report applies the directional rules") {
  auto row = [](std::uint64_t seed, const char* decision, const char* clf, std::size_t right) {
    ReportRow r;
    r.seed = seed;
    r.weld = 2;
    r.decision = decision;
    r.classifier = clf;
    r.confusion.tp = right;
    r.confusion.fn = 10 - right;
    return r;
  };
  AccuracyReport rep;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    rep.rows.push_back(row(s, "old", "argmax", 6));
    rep.rows.push_back(row(s, "new", "tree", 5));
    rep.rows.push_back(row(s, "new", "gbt", s == 1 ? 6 : 8));
    rep.rcr.push_back({s, 2, ModelFamily::mini_mobilenet, 2.0, s == 3 ? 3.0 : 1.0});
  }
  CHECK(check_report(rep).passed);

  AccuracyReport worse = rep;
  worse.rows[2].confusion = {0, 0, 0, 10};  // seed 1 best hybrid drops below argmax
  CHECK_FALSE(check_report(worse).passed);

  AccuracyReport flat = rep;
  for (auto& r : flat.rows)
    if (r.classifier == "gbt") r.confusion = {6, 0, 0, 4};
  CHECK_FALSE(check_report(flat).passed);  // ties everywhere: no strict mean gain

  AccuracyReport reversed = rep;
  reversed.rcr[0].mean_rcr_nok = 5.0;  // second reversal: 3 of 5
  CHECK_FALSE(check_report(reversed).passed);

  CHECK_FALSE(check_report(AccuracyReport{}).passed);
}
