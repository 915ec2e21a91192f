// Command-line front end: generate -> train -> explain / features -> fit, and
// benchmark for the full experiment.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "weldcam/errors.hpp"
#include "weldcam/image_io.hpp"
#include "weldcam/kernels.hpp"
#include "weldcam/pipeline.hpp"

using namespace weldcam;

namespace {

std::vector<Tensor> pixels_of(const std::vector<WeldImage>& images) {
  std::vector<Tensor> out;
  for (const auto& i : images) out.push_back(i.pixels);
  return out;
}

std::vector<Label> labels_of(const std::vector<WeldImage>& images) {
  std::vector<Label> out;
  for (const auto& i : images) out.push_back(i.label);
  return out;
}

ScoreKind parse_score_kind(const std::string& s) {
  if (s == "probability") return ScoreKind::probability;
  if (s == "raw_score") return ScoreKind::raw_score;
  throw SpecError("score kind must be probability or raw_score");
}

void print_scores(const ScorePair& s) {
  std::printf("score_ok %.6f\nscore_nok %.6f\n", s.score_ok, s.score_nok);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weld inspection with Grad-CAM reliability features"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (0 = runtime default)");

  // generate
  auto* gen = app.add_subcommand("generate", "Render a synthetic weld dataset");
  DatasetConfig dc;
  std::string gen_out;
  bool gen_bias = false, gen_correlated = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", dc.count, "Number of images")->capture_default_str();
  gen->add_option("--nok-fraction", dc.nok_fraction, "Share of defective images")->capture_default_str();
  gen->add_option("--weld", dc.weld, "Weld variant 1..4")->capture_default_str();
  gen->add_option("--size", dc.height, "Image height and width")->capture_default_str();
  gen->add_option("--seed", dc.seed, "Generator seed")->capture_default_str();
  gen->add_flag("--bias", gen_bias, "Add corner glare");
  gen->add_flag("--correlated", gen_correlated, "Make the glare depend on the label (with --bias)");

  // train
  auto* tr = app.add_subcommand("train", "Train a feature extractor on a dataset directory");
  std::string tr_data, tr_out, tr_history, tr_family = "mini_mobilenet", tr_opt = "adam";
  TrainConfig tc;
  tc.optimizer.learning_rate = 0.01;
  tc.batch_size = 16;
  tc.epochs = 40;
  std::size_t tr_augment = 1;
  std::uint64_t tr_init = 1;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--out", tr_out, "Frozen model file")->required();
  tr->add_option("--family", tr_family, "mini_mobilenet or mini_resnet")->capture_default_str();
  tr->add_option("--epochs", tc.epochs)->capture_default_str();
  tr->add_option("--batch-size", tc.batch_size)->capture_default_str();
  tr->add_option("--optimizer", tr_opt, "sgd, adam or rmsprop")->capture_default_str();
  tr->add_option("--lr", tc.optimizer.learning_rate)->capture_default_str();
  tr->add_option("--seed", tc.seed, "Shuffle seed")->capture_default_str();
  tr->add_option("--init-seed", tr_init, "Weight initialization seed")->capture_default_str();
  tr->add_option("--augment", tr_augment, "Copies per NOK image")->capture_default_str();
  tr->add_option("--history", tr_history, "Write per-epoch loss/accuracy CSV");

  // explain
  auto* ex = app.add_subcommand("explain", "Grad-CAM heatmap and red colour ratio for one image");
  std::string ex_model, ex_image, ex_heat, ex_grid, ex_overlay, ex_kind = "probability";
  ex->add_option("--model", ex_model)->required();
  ex->add_option("--image", ex_image, "PPM image")->required();
  ex->add_option("--heatmap", ex_heat, "Write the colorized heatmap (PPM)");
  ex->add_option("--grid", ex_grid, "Write the normalized heatmap values (CSV)");
  ex->add_option("--overlay", ex_overlay, "Write the heatmap blended over the image (PPM)");
  ex->add_option("--score-kind", ex_kind)->capture_default_str();

  // features
  auto* fe = app.add_subcommand("features", "Extract (score_1, score_2, rcr) for a dataset");
  std::string fe_model, fe_data, fe_out, fe_kind = "probability";
  fe->add_option("--model", fe_model)->required();
  fe->add_option("--data", fe_data)->required();
  fe->add_option("--out", fe_out, "Feature CSV")->required();
  fe->add_option("--score-kind", fe_kind)->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "Train a hybrid classifier on a feature CSV");
  std::string fit_in, fit_out, fit_kind = "gbt";
  fit->add_option("--features", fit_in)->required();
  fit->add_option("--out", fit_out, "Classifier file")->required();
  fit->add_option("--kind", fit_kind, "gbt, tree, svm_linear or svm_poly")->capture_default_str();

  // classify
  auto* cl = app.add_subcommand("classify", "Score a feature CSV with a saved classifier");
  std::string cl_clf, cl_in;
  cl->add_option("--classifier", cl_clf)->required();
  cl->add_option("--features", cl_in)->required();

  // benchmark
  auto* bm = app.add_subcommand("benchmark", "Run the old-vs-new comparison from a config file");
  std::string bm_config, bm_out = "report.csv", bm_rcr;
  bool bm_check = false;
  bm->add_option("--config", bm_config, "key = value experiment file")->required();
  bm->add_option("--out", bm_out, "Report CSV")->capture_default_str();
  bm->add_option("--rcr-out", bm_rcr, "Per-cell mean RCR CSV");
  bm->add_flag("--check", bm_check, "Exit nonzero unless the directional checks pass");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) kernels::set_num_threads(threads);

  try {
    if (*gen) {
      dc.width = dc.height;
      auto images = generate(dc);
      if (gen_bias) inject_bias(images, BiasConfig{}, gen_correlated, derive_seed(dc.seed, 99));
      export_dataset(gen_out, images);
      std::printf("%zu images -> %s\ndigest %s\n", images.size(), gen_out.c_str(), dataset_digest(images).c_str());
    } else if (*tr) {
      auto images = import_dataset(tr_data);
      if (images.empty()) throw SpecError("dataset is empty");
      augment_minority(images, tr_augment, derive_seed(tc.seed, 7));
      ModelSpec spec;
      spec.family = parse_model_family(tr_family);
      spec.height = images.front().pixels.dim(0);
      spec.width = images.front().pixels.dim(1);
      if (spec.family == ModelFamily::mini_resnet) spec.widths = {16, 16, 16};
      tc.optimizer.kind = parse_optimizer_kind(tr_opt);
      Model m = build_model(spec, tr_init);
      const auto history = train(m, pixels_of(images), labels_of(images), tc);
      m.metadata["dataset_digest"] = dataset_digest(images);
      m.metadata["train_seed"] = std::to_string(tc.seed);
      freeze(m, tr_out);
      if (!tr_history.empty()) write_history_csv(tr_history, history);
      std::printf("epochs %zu  final loss %.5f  train accuracy %.4f\n", history.size(), history.back().loss,
                  history.back().accuracy);
    } else if (*ex) {
      const Model m = load_frozen(ex_model);
      const Tensor image = io::read_ppm(ex_image);
      const Explanation e = explain(m, image, parse_score_kind(ex_kind));
      print_scores(e.scores);
      std::printf("decision %s\nrcr %.6f\n", to_string(decide_old(e.scores)).c_str(), e.stats.rcr);
      const RgbHeatmap heat = colorize(e.heatmap);
      if (!ex_heat.empty()) write_rgb_heatmap_ppm(ex_heat, heat);
      if (!ex_grid.empty()) write_grid_csv(ex_grid, e.heatmap.grid);
      if (!ex_overlay.empty()) io::write_ppm(ex_overlay, overlay(image, heat));
    } else if (*fe) {
      const Model m = load_frozen(fe_model);
      const auto images = import_dataset(fe_data);
      const FeatureTable t = extract_features(m, images, parse_score_kind(fe_kind));
      write_feature_csv(fe_out, t);
      std::printf("%zu rows -> %s\n", t.features.size(), fe_out.c_str());
    } else if (*fit) {
      const FeatureTable t = read_feature_csv(fit_in);
      const Classifier c = train_classifier(parse_classifier_kind(fit_kind), t.features, t.labels);
      save_classifier(fit_out, c);
      std::size_t right = 0;
      for (std::size_t i = 0; i < t.features.size(); ++i) right += classify(c, t.features[i]).label == t.labels[i];
      std::printf("%s training accuracy %.4f\n", fit_kind.c_str(),
                  static_cast<double>(right) / static_cast<double>(t.features.size()));
    } else if (*cl) {
      const Classifier c = load_classifier(cl_clf);
      const FeatureTable t = read_feature_csv(cl_in);
      Confusion conf;
      std::printf("row,decision,value\n");
      for (std::size_t i = 0; i < t.features.size(); ++i) {
        const Decision d = classify(c, t.features[i]);
        conf.add(t.labels[i], d.label);
        std::printf("%zu,%s,%.6f\n", i, to_string(d.label).c_str(), d.value);
      }
      std::fprintf(stderr, "accuracy %.4f (tp %zu tn %zu fp %zu fn %zu)\n", conf.accuracy(), conf.tp, conf.tn,
                   conf.fp, conf.fn);
    } else if (*bm) {
      const ExperimentConfig config = load_experiment_config(bm_config);
      const AccuracyReport report = run_experiment(config);
      write_report_csv(bm_out, report);
      if (!bm_rcr.empty()) write_rcr_csv(bm_rcr, report);
      std::cout << format_report_table(report);
      if (bm_check) {
        const CheckOutcome outcome = check_report(report);
        for (const auto& line : outcome.lines) std::cout << line << '\n';
        if (!outcome.passed) return 1;
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
