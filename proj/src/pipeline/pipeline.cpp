#include "weldcam/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>

#include "weldcam/errors.hpp"

namespace weldcam {

Label decide_old(const ScorePair& scores) {
  if (!std::isfinite(scores.score_ok) || !std::isfinite(scores.score_nok)) {
    throw NumericError("non-finite extractor scores");
  }
  return scores.argmax();
}

Explanation explain(const Model& model, Graph& workspace, const Tensor& image, ScoreKind kind,
                    const ColorAnchorSet& anchors) {
  // Grad-CAM always targets the class the old path would pick, so the two
  // paths look at the same decision.
  GradCamResult r = run_gradcam(model, workspace, image, std::nullopt);
  Explanation e;
  e.scores = kind == ScoreKind::probability ? r.probabilities : r.logits;
  const Label predicted = decide_old(e.scores);
  if (predicted != r.cam.target) r = run_gradcam(model, workspace, image, predicted);
  e.cam = std::move(r.cam);
  e.heatmap = normalize_upsample(e.cam, model.spec.height, model.spec.width);
  e.stats = analyze_heatmap(e.heatmap, anchors);
  return e;
}

Explanation explain(const Model& model, const Tensor& image, ScoreKind kind, const ColorAnchorSet& anchors) {
  Graph workspace = model.graph.inference_copy();
  return explain(model, workspace, image, kind, anchors);
}

DecisionRecord decide_new(const Model& model, const Classifier& classifier, const WeldImage& image,
                          ScoreKind kind) {
  if (!classifier.trained()) throw StageError("classify", "classifier is not trained");
  Explanation e;
  try {
    e = explain(model, image.pixels, kind);
  } catch (const Error& err) {
    throw StageError("explain", err.what());
  }
  DecisionRecord rec;
  rec.image_id = image.seed;
  rec.truth = image.label;
  rec.scores = e.scores;
  rec.rcr = e.stats.rcr;
  rec.path = DecisionPath::new_path;
  rec.classifier = to_string(classifier.kind);
  try {
    rec.decided = classify(classifier, e.features()).label;
  } catch (const Error& err) {
    throw StageError("classify", err.what());
  }
  return rec;
}

FeatureTable extract_features(const Model& model, std::span<const WeldImage> images, ScoreKind kind) {
  const std::size_t n = images.size();
  FeatureTable table;
  table.features.resize(n);
  table.labels.resize(n);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel
  {
    Graph workspace = model.graph.inference_copy();
#pragma omp for schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
      try {
        table.features[i] = explain(model, workspace, images[i].pixels, kind, {}).features();
        table.labels[i] = images[i].label;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  // Report the lowest failing index so the error does not depend on scheduling.
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return table;
}

void Confusion::add(Label truth, Label decided) {
  if (truth == Label::nok) {
    decided == Label::nok ? ++tp : ++fn;
  } else {
    decided == Label::ok ? ++tn : ++fp;
  }
}

namespace {

// Fixed stream ids for derive_seed so each stage draws independent randomness.
enum Stream : std::uint64_t {
  s_generate = 1,
  s_split,
  s_calibration,
  s_bias_train,
  s_bias_calibration,
  s_bias_test,
  s_augment,
  s_init,
  s_train,
  s_classifier,
};

std::uint64_t cell_seed(std::uint64_t seed, int weld, Stream s) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(weld)), s);
}

template <class F>
auto staged(const std::string& where, const char* stage, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw StageError(std::string(stage) + " [" + where + "]", e.what());
  }
}

std::vector<Tensor> pixels_of(std::span<const WeldImage> images) {
  std::vector<Tensor> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.pixels);
  return out;
}

std::vector<Label> labels_of(std::span<const WeldImage> images) {
  std::vector<Label> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.label);
  return out;
}

std::vector<WeldImage> pick(const std::vector<WeldImage>& from, const std::vector<std::size_t>& idx) {
  std::vector<WeldImage> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(from[i]);
  return out;
}

void require_disjoint(std::span<const WeldImage> a, std::span<const WeldImage> b) {
  std::set<std::uint64_t> ids;
  for (const auto& img : a) ids.insert(img.seed);
  for (const auto& img : b)
    if (ids.contains(img.seed)) throw SpecError("image " + std::to_string(img.seed) + " is in both splits");
}

}  // namespace

AccuracyReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  AccuracyReport report;
  report.seeds = config.seeds;

  for (std::uint64_t seed : config.seeds) {
    for (int weld : config.welds) {
      const std::string where = "seed " + std::to_string(seed) + ", weld " + std::to_string(weld);

      DatasetConfig dc = config.dataset;
      dc.weld = weld;
      dc.seed = cell_seed(seed, weld, s_generate);
      std::vector<WeldImage> fit, calibration, test;
      staged(where, "dataset", [&] {
        DatasetSplit ds = split(generate(dc), dc.train_ratio, cell_seed(seed, weld, s_split));
        const SplitIndices cut = stratified_split(ds.train, 1.0 - config.calibration_fraction,
                                                  cell_seed(seed, weld, s_calibration));
        fit = pick(ds.train, cut.first);
        calibration = pick(ds.train, cut.second);
        test = std::move(ds.test);
        require_disjoint(fit, test);
        require_disjoint(calibration, test);
        if (config.bias) {
          inject_bias(fit, config.bias_config, true, cell_seed(seed, weld, s_bias_train));
          inject_bias(calibration, config.bias_config, false, cell_seed(seed, weld, s_bias_calibration));
          inject_bias(test, config.bias_config, false, cell_seed(seed, weld, s_bias_test));
        }
        augment_minority(fit, dc.augment_multiplier, cell_seed(seed, weld, s_augment));
        return 0;
      });

      for (ModelFamily family : config.extractors) {
        const std::string at = where + ", extractor " + to_string(family);
        const bool mobile = family == ModelFamily::mini_mobilenet;
        ModelSpec spec = mobile ? config.mobilenet : config.resnet;
        spec.family = family;
        spec.height = dc.height;
        spec.width = dc.width;
        TrainConfig tc = mobile ? config.mobilenet_training : config.resnet_training;
        tc.seed = cell_seed(seed, weld, s_train);

        Model model = staged(at, "train extractor", [&] {
          Model m = build_model(spec, cell_seed(seed, weld, s_init));
          const auto px = pixels_of(fit);
          const auto lb = labels_of(fit);
          train(m, px, lb, tc);
          return m;
        });

        const FeatureTable cal = staged(at, "features (calibration)",
                                        [&] { return extract_features(model, calibration, config.score_kind); });
        const FeatureTable held = staged(at, "features (test)",
                                         [&] { return extract_features(model, test, config.score_kind); });

        RcrSummary rs{seed, weld, family, 0.0, 0.0};
        std::size_t n_ok = 0, n_nok = 0;
        ReportRow old{seed, weld, family, "old", "argmax", {}, 0.0};
        for (std::size_t i = 0; i < test.size(); ++i) {
          const FeatureVector& f = held.features[i];
          old.confusion.add(held.labels[i], decide_old({f.score_1, f.score_2, config.score_kind}));
          if (held.labels[i] == Label::nok) {
            rs.mean_rcr_nok += f.rcr;
            ++n_nok;
          } else {
            rs.mean_rcr_ok += f.rcr;
            ++n_ok;
          }
        }
        rs.mean_rcr_ok /= static_cast<double>(n_ok);
        rs.mean_rcr_nok /= static_cast<double>(n_nok);
        report.rcr.push_back(rs);
        const double old_acc = old.confusion.accuracy();
        report.rows.push_back(old);

        for (ClassifierKind kind : config.classifiers) {
          const Classifier clf = staged(at, ("fit " + to_string(kind)).c_str(), [&] {
            ClassifierConfig cc = config.classifier_config;
            cc.boost.seed = cell_seed(seed, weld, s_classifier);
            return train_classifier(kind, cal.features, cal.labels, cc);
          });
          ReportRow row{seed, weld, family, "new", to_string(kind), {}, 0.0};
          for (std::size_t i = 0; i < test.size(); ++i)
            row.confusion.add(held.labels[i], classify(clf, held.features[i]).label);
          row.delta_vs_old = row.confusion.accuracy() - old_acc;
          report.rows.push_back(row);
        }
      }
    }
  }
  return report;
}

}  // namespace weldcam
