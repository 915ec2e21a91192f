#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "weldcam/errors.hpp"
#include "weldcam/pipeline.hpp"

namespace weldcam {

ExperimentConfig::ExperimentConfig() {
  dataset.count = 800;
  dataset.train_ratio = 0.6;
  dataset.nok_fraction = 0.1;
  dataset.augment_multiplier = 4;

  mobilenet.family = ModelFamily::mini_mobilenet;
  resnet.family = ModelFamily::mini_resnet;
  resnet.widths = {16, 16, 16};

  for (TrainConfig* t : {&mobilenet_training, &resnet_training}) {
    t->batch_size = 16;
    t->epochs = 40;
  }
  mobilenet_training.optimizer.kind = OptimizerKind::adam;
  mobilenet_training.optimizer.learning_rate = 0.01;
  resnet_training.optimizer.kind = OptimizerKind::adam;
  resnet_training.optimizer.learning_rate = 0.003;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw SpecError("at least one seed is required");
  if (welds.empty()) throw SpecError("at least one weld is required");
  if (extractors.empty()) throw SpecError("at least one extractor is required");
  if (classifiers.empty()) throw SpecError("at least one classifier is required");
  for (int w : welds)
    if (w < 1 || w > 4) throw SpecError("weld must be in 1..4, got " + std::to_string(w));
  if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw SpecError("calibration_fraction must be in (0, 1)");
  dataset.validate();
  for (const auto* s : {&mobilenet, &resnet}) {
    ModelSpec sized = *s;
    sized.height = dataset.height;
    sized.width = dataset.width;
    sized.validate();
  }
  mobilenet_training.validate();
  resnet_training.validate();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw SpecError("empty list");
  return out;
}

template <class T>
T number(const std::string& v) {
  T out{};
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || end != v.data() + v.size()) throw SpecError("not a number: '" + v + "'");
  return out;
}

bool boolean(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw SpecError("not a boolean: '" + v + "'");
}

template <class T, class F>
std::vector<T> list_of(const std::string& v, F parse) {
  std::vector<T> out;
  for (const auto& s : split_list(v)) out.push_back(parse(s));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

void add_training_keys(std::map<std::string, Setter>& keys, const std::string& prefix,
                       TrainConfig ExperimentConfig::*train, ModelSpec ExperimentConfig::*spec) {
  keys[prefix + ".epochs"] = [=](auto& c, auto& v) { (c.*train).epochs = number<std::size_t>(v); };
  keys[prefix + ".batch_size"] = [=](auto& c, auto& v) { (c.*train).batch_size = number<std::size_t>(v); };
  keys[prefix + ".optimizer"] = [=](auto& c, auto& v) { (c.*train).optimizer.kind = parse_optimizer_kind(v); };
  keys[prefix + ".learning_rate"] = [=](auto& c, auto& v) {
    (c.*train).optimizer.learning_rate = number<double>(v);
  };
  keys[prefix + ".decay"] = [=](auto& c, auto& v) {
    if (v == "none") (c.*train).optimizer.decay = DecayKind::none;
    else if (v == "exponential") (c.*train).optimizer.decay = DecayKind::exponential;
    else throw SpecError("decay must be none or exponential");
  };
  keys[prefix + ".decay_start"] = [=](auto& c, auto& v) { (c.*train).optimizer.decay_start = number<double>(v); };
  keys[prefix + ".decay_end"] = [=](auto& c, auto& v) { (c.*train).optimizer.decay_end = number<double>(v); };
  keys[prefix + ".decay_steps"] = [=](auto& c, auto& v) {
    (c.*train).optimizer.decay_steps = number<std::size_t>(v);
  };
  keys[prefix + ".weight_decay"] = [=](auto& c, auto& v) {
    (c.*train).optimizer.weight_decay = number<double>(v);
  };
  keys[prefix + ".blocks"] = [=](auto& c, auto& v) { (c.*spec).blocks = number<std::size_t>(v); };
  keys[prefix + ".widths"] = [=](auto& c, auto& v) {
    (c.*spec).widths = list_of<std::size_t>(v, number<std::size_t>);
  };
  keys[prefix + ".strides"] = [=](auto& c, auto& v) {
    (c.*spec).strides = list_of<std::size_t>(v, number<std::size_t>);
  };
  keys[prefix + ".stem_pool"] = [=](auto& c, auto& v) { (c.*spec).stem_pool = number<std::size_t>(v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> keys = [] {
    std::map<std::string, Setter> k;
    k["seeds"] = [](auto& c, auto& v) { c.seeds = list_of<std::uint64_t>(v, number<std::uint64_t>); };
    k["welds"] = [](auto& c, auto& v) { c.welds = list_of<int>(v, number<int>); };
    k["extractors"] = [](auto& c, auto& v) { c.extractors = list_of<ModelFamily>(v, parse_model_family); };
    k["classifiers"] = [](auto& c, auto& v) {
      c.classifiers = list_of<ClassifierKind>(v, parse_classifier_kind);
    };
    k["count"] = [](auto& c, auto& v) { c.dataset.count = number<std::size_t>(v); };
    k["nok_fraction"] = [](auto& c, auto& v) { c.dataset.nok_fraction = number<double>(v); };
    k["height"] = [](auto& c, auto& v) { c.dataset.height = number<std::size_t>(v); };
    k["width"] = [](auto& c, auto& v) { c.dataset.width = number<std::size_t>(v); };
    k["train_ratio"] = [](auto& c, auto& v) { c.dataset.train_ratio = number<double>(v); };
    k["augment_multiplier"] = [](auto& c, auto& v) { c.dataset.augment_multiplier = number<std::size_t>(v); };
    k["kind_weights"] = [](auto& c, auto& v) {
      const auto w = list_of<double>(v, number<double>);
      if (w.size() != 5) throw SpecError("kind_weights needs 5 values");
      c.dataset.kind_weights = std::array<double, 5>{w[0], w[1], w[2], w[3], w[4]};
    };
    k["calibration_fraction"] = [](auto& c, auto& v) { c.calibration_fraction = number<double>(v); };
    k["bias"] = [](auto& c, auto& v) { c.bias = boolean(v); };
    k["bias.radius"] = [](auto& c, auto& v) { c.bias_config.radius = number<double>(v); };
    k["bias.intensity"] = [](auto& c, auto& v) { c.bias_config.intensity = number<double>(v); };
    k["bias.p_given_ok"] = [](auto& c, auto& v) { c.bias_config.p_given_ok = number<double>(v); };
    k["bias.p_given_nok"] = [](auto& c, auto& v) { c.bias_config.p_given_nok = number<double>(v); };
    k["bias.p_uncorrelated"] = [](auto& c, auto& v) { c.bias_config.p_uncorrelated = number<double>(v); };
    k["score_kind"] = [](auto& c, auto& v) {
      if (v == "probability") c.score_kind = ScoreKind::probability;
      else if (v == "raw_score") c.score_kind = ScoreKind::raw_score;
      else throw SpecError("score_kind must be probability or raw_score");
    };
    k["tree.max_depth"] = [](auto& c, auto& v) { c.classifier_config.tree.max_depth = number<std::size_t>(v); };
    k["tree.min_samples_split"] = [](auto& c, auto& v) {
      c.classifier_config.tree.min_samples_split = number<std::size_t>(v);
    };
    k["gbt.rounds"] = [](auto& c, auto& v) { c.classifier_config.boost.rounds = number<std::size_t>(v); };
    k["gbt.eta"] = [](auto& c, auto& v) { c.classifier_config.boost.eta = number<double>(v); };
    k["gbt.max_depth"] = [](auto& c, auto& v) { c.classifier_config.boost.max_depth = number<std::size_t>(v); };
    k["gbt.subsample"] = [](auto& c, auto& v) { c.classifier_config.boost.subsample = number<double>(v); };
    k["svm.c"] = [](auto& c, auto& v) { c.classifier_config.svm.c = number<double>(v); };
    k["svm.tolerance"] = [](auto& c, auto& v) { c.classifier_config.svm.tolerance = number<double>(v); };
    k["svm.max_iterations"] = [](auto& c, auto& v) {
      c.classifier_config.svm.max_iterations = number<std::size_t>(v);
    };
    k["svm.standardize"] = [](auto& c, auto& v) { c.classifier_config.svm.standardize = boolean(v); };
    k["svm.poly_degree"] = [](auto& c, auto& v) { c.classifier_config.poly_degree = number<int>(v); };
    add_training_keys(k, "mobilenet", &ExperimentConfig::mobilenet_training, &ExperimentConfig::mobilenet);
    add_training_keys(k, "resnet", &ExperimentConfig::resnet_training, &ExperimentConfig::resnet);
    return k;
  }();
  return keys;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = "config line " + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw SpecError(at + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw SpecError(at + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw SpecError(at + ": duplicate key '" + key + "'");
    try {
      it->second(config, value);
    } catch (const Error& e) {
      throw SpecError(at + " (" + key + "): " + e.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw SpecError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

}  // namespace weldcam
