#include <algorithm>
#include <cmath>

#include "weldcam/classifiers.hpp"
#include "weldcam/container.hpp"
#include "weldcam/csv.hpp"
#include "weldcam/errors.hpp"

namespace weldcam {

namespace {

constexpr io::Magic kClassifierMagic = {'W', 'C', 'A', 'M', 'C', 'L', 'S', 'F'};
constexpr std::size_t kNodeColumns = 8;

void append_nodes(const DecisionTree& tree, std::vector<double>& out) {
  for (const auto& n : tree.nodes) {
    out.insert(out.end(), {n.leaf ? 1.0 : 0.0, static_cast<double>(n.feature), n.threshold,
                           static_cast<double>(n.left), static_cast<double>(n.right),
                           static_cast<double>(n.count_ok), static_cast<double>(n.count_nok), n.value});
  }
}

std::size_t as_index(double v, std::size_t limit, const char* what) {
  if (!(v >= 0.0) || v != std::floor(v) || v >= static_cast<double>(limit)) {
    throw FormatError(std::string("classifier file has a bad ") + what);
  }
  return static_cast<std::size_t>(v);
}

DecisionTree read_nodes(const Tensor& table, std::size_t first, std::size_t count) {
  DecisionTree t;
  for (std::size_t r = first; r < first + count; ++r) {
    const double* row = &table[r * kNodeColumns];
    TreeNode n;
    n.leaf = row[0] != 0.0;
    n.feature = as_index(row[1], kFeatureCount, "feature index");
    n.threshold = row[2];
    if (!n.leaf) {
      n.left = as_index(row[3], count, "child index");
      n.right = as_index(row[4], count, "child index");
      if (n.left <= r - first || n.right <= r - first) throw FormatError("classifier tree is not topologically ordered");
    }
    n.count_ok = static_cast<std::size_t>(row[5]);
    n.count_nok = static_cast<std::size_t>(row[6]);
    n.value = row[7];
    t.nodes.push_back(n);
  }
  if (t.nodes.empty()) throw FormatError("classifier tree has no nodes");
  return t;
}

Tensor node_table(const std::vector<double>& flat) {
  return Tensor({flat.size() / kNodeColumns, kNodeColumns}, flat);
}

std::size_t check_node_table(const Tensor& t) {
  if (t.rank() != 2 || t.dim(1) != kNodeColumns) throw FormatError("classifier node table has the wrong shape");
  return t.dim(0);
}

}  // namespace

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::tree: return "tree";
    case ClassifierKind::gbt: return "gbt";
    case ClassifierKind::svm_linear: return "svm_linear";
    case ClassifierKind::svm_poly: return "svm_poly";
  }
  return "?";
}

ClassifierKind parse_classifier_kind(const std::string& text) {
  for (auto k : kClassifierKinds) {
    if (to_string(k) == text) return k;
  }
  throw SpecError("unknown classifier '" + text + "' (expected tree, gbt, svm_linear or svm_poly)");
}

Classifier train_classifier(ClassifierKind kind, std::span<const FeatureVector> features,
                            std::span<const Label> labels, const ClassifierConfig& config) {
  Classifier c;
  c.kind = kind;
  switch (kind) {
    case ClassifierKind::tree:
      c.model = train_tree(features, labels, config.tree);
      break;
    case ClassifierKind::gbt:
      c.model = train_gbt(features, labels, config.boost);
      break;
    case ClassifierKind::svm_linear:
    case ClassifierKind::svm_poly: {
      SvmConfig svm = config.svm;
      svm.kernel = kind == ClassifierKind::svm_linear ? KernelSpec::linear() : KernelSpec::poly(config.poly_degree);
      c.model = train_svm(features, labels, svm);
      break;
    }
  }
  return c;
}

Decision classify(const Classifier& classifier, const FeatureVector& x) {
  return std::visit(
      [&](const auto& m) -> Decision {
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, std::monostate>) {
          throw StateError("classifier is untrained");
        } else {
          return classify(m, x);
        }
      },
      classifier.model);
}

std::vector<std::uint8_t> classifier_to_bytes(const Classifier& classifier) {
  if (!classifier.trained()) throw StateError("cannot save an untrained classifier");
  io::Container c;
  c.metadata["kind"] = to_string(classifier.kind);
  if (const auto* tree = std::get_if<DecisionTree>(&classifier.model)) {
    std::vector<double> flat;
    append_nodes(*tree, flat);
    c.tensors.push_back({"nodes", node_table(flat)});
  } else if (const auto* gbt = std::get_if<GbtModel>(&classifier.model)) {
    c.metadata["rounds"] = std::to_string(gbt->trees.size());
    c.tensors.push_back({"f0_eta", Tensor({2}, std::vector<double>{gbt->f0, gbt->eta})});
    if (!gbt->trees.empty()) {
      std::vector<double> flat, sizes;
      for (const auto& t : gbt->trees) {
        append_nodes(t, flat);
        sizes.push_back(static_cast<double>(t.nodes.size()));
      }
      c.tensors.push_back({"nodes", node_table(flat)});
      c.tensors.push_back({"tree_sizes", Tensor({sizes.size()}, sizes)});
    }
  } else {
    const auto& svm = std::get<SvmModel>(classifier.model);
    c.metadata["kernel"] = svm.kernel.kind == KernelKind::linear ? "linear" : "polynomial";
    c.metadata["degree"] = std::to_string(svm.kernel.degree);
    c.metadata["gamma"] = io::format_double(svm.kernel.gamma);
    c.metadata["coef0"] = io::format_double(svm.kernel.coef0);
    c.metadata["c"] = io::format_double(svm.c);
    std::vector<double> sv;
    for (const auto& p : svm.support) sv.insert(sv.end(), p.begin(), p.end());
    c.tensors.push_back({"support", Tensor({svm.support.size(), kFeatureCount}, sv)});
    c.tensors.push_back({"coef", Tensor({svm.coef.size()}, svm.coef)});
    c.tensors.push_back({"alpha", Tensor({svm.alpha.size()}, svm.alpha)});
    c.tensors.push_back({"bias", Tensor::scalar(svm.bias)});
    c.tensors.push_back({"mean", Tensor({kFeatureCount}, std::vector<double>(svm.scaler.mean.begin(), svm.scaler.mean.end()))});
    c.tensors.push_back({"scale", Tensor({kFeatureCount}, std::vector<double>(svm.scaler.scale.begin(), svm.scaler.scale.end()))});
  }
  return io::encode_container(kClassifierMagic, kClassifierVersion, c);
}

Classifier classifier_from_bytes(std::span<const std::uint8_t> bytes) {
  const io::Container c = io::decode_container(bytes, kClassifierMagic, kClassifierVersion);
  Classifier out;
  try {
    out.kind = parse_classifier_kind(c.meta("kind"));
  } catch (const SpecError& e) {
    throw FormatError(e.what());
  }
  switch (out.kind) {
    case ClassifierKind::tree: {
      const Tensor& nodes = c.tensor("nodes");
      out.model = read_nodes(nodes, 0, check_node_table(nodes));
      break;
    }
    case ClassifierKind::gbt: {
      GbtModel m;
      const Tensor& fe = c.tensor("f0_eta");
      if (fe.size() != 2) throw FormatError("bad boosting header");
      m.f0 = fe[0];
      m.eta = fe[1];
      const std::size_t rounds = std::stoul(c.meta("rounds"));
      if (rounds > 0) {
        const Tensor& nodes = c.tensor("nodes");
        const Tensor& sizes = c.tensor("tree_sizes");
        const std::size_t rows = check_node_table(nodes);
        if (sizes.size() != rounds) throw FormatError("tree count does not match rounds");
        std::size_t first = 0;
        for (std::size_t t = 0; t < rounds; ++t) {
          const std::size_t count = as_index(sizes[t], rows - first + 1, "tree size");
          m.trees.push_back(read_nodes(nodes, first, count));
          first += count;
        }
        if (first != rows) throw FormatError("tree sizes do not cover the node table");
      }
      out.model = std::move(m);
      break;
    }
    case ClassifierKind::svm_linear:
    case ClassifierKind::svm_poly: {
      SvmModel m;
      m.kernel.kind = c.meta("kernel") == "linear" ? KernelKind::linear : KernelKind::polynomial;
      m.kernel.degree = std::stoi(c.meta("degree"));
      m.kernel.gamma = io::parse_double(c.meta("gamma"));
      m.kernel.coef0 = io::parse_double(c.meta("coef0"));
      m.c = io::parse_double(c.meta("c"));
      const Tensor& sv = c.tensor("support");
      const Tensor& coef = c.tensor("coef");
      const Tensor& alpha = c.tensor("alpha");
      if (sv.rank() != 2 || sv.dim(1) != kFeatureCount || coef.size() != sv.dim(0) || alpha.size() != sv.dim(0)) {
        throw FormatError("SVM tensors disagree in shape");
      }
      for (std::size_t i = 0; i < sv.dim(0); ++i) {
        m.support.push_back({sv[i * 3], sv[i * 3 + 1], sv[i * 3 + 2]});
        m.coef.push_back(coef[i]);
        m.alpha.push_back(alpha[i]);
      }
      m.bias = c.tensor("bias").item();
      const Tensor& mean = c.tensor("mean");
      const Tensor& scale = c.tensor("scale");
      if (mean.size() != kFeatureCount || scale.size() != kFeatureCount) throw FormatError("bad standardizer");
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        m.scaler.mean[f] = mean[f];
        m.scaler.scale[f] = scale[f];
      }
      out.model = std::move(m);
      break;
    }
  }
  return out;
}

void save_classifier(const std::filesystem::path& path, const Classifier& classifier) {
  io::write_bytes(path, classifier_to_bytes(classifier));
}

Classifier load_classifier(const std::filesystem::path& path) { return classifier_from_bytes(io::read_bytes(path)); }

void write_feature_csv(const std::filesystem::path& path, const FeatureTable& table) {
  if (table.features.size() != table.labels.size()) throw SpecError("feature and label counts differ");
  io::CsvTable t;
  t.header = {"score_1", "score_2", "rcr", "label"};
  for (std::size_t i = 0; i < table.features.size(); ++i) {
    const auto& f = table.features[i];
    t.rows.push_back({io::format_double(f.score_1), io::format_double(f.score_2), io::format_double(f.rcr),
                      to_string(table.labels[i])});
  }
  io::write_csv(path, t);
}

FeatureTable read_feature_csv(const std::filesystem::path& path) {
  const io::CsvTable t = io::read_csv(path);
  const auto c1 = t.column("score_1"), c2 = t.column("score_2"), c3 = t.column("rcr"), cl = t.column("label");
  FeatureTable out;
  for (const auto& row : t.rows) {
    FeatureVector f{io::parse_double(row[c1]), io::parse_double(row[c2]), io::parse_double(row[c3])};
    f.validate();
    out.features.push_back(f);
    out.labels.push_back(parse_label(row[cl]));
  }
  return out;
}

}  // namespace weldcam
