#include "weldcam/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "weldcam/container.hpp"
#include "weldcam/csv.hpp"
#include "weldcam/errors.hpp"

namespace weldcam {

namespace {

constexpr io::Magic kFrozenMagic = {'W', 'C', 'A', 'M', 'F', 'R', 'Z', 'N'};
constexpr std::size_t kInferenceChunk = 32;

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

class Builder {
 public:
  Builder(Graph& g, std::uint64_t seed) : g_(g), rng_(seed) {}

  NodeId conv(NodeId x, const std::string& name, std::size_t k, std::size_t cin, std::size_t cout,
              std::size_t stride, std::size_t groups = 1) {
    const std::size_t per_group = cin / groups;
    const NodeId w = g_.parameter(name + "_k", he_uniform({k, k, per_group, cout}, k * k * per_group, rng_));
    const NodeId b = g_.parameter(name + "_b", Tensor({cout}, 0.0));
    const NodeId c = g_.conv2d(x, w, stride, Padding::same, groups, name + "_conv");
    return g_.bias_add(c, b, name + "_out");
  }

  NodeId dense(NodeId x, const std::string& name, std::size_t in, std::size_t out) {
    const NodeId w = g_.parameter(name + "_w", he_uniform({in, out}, in, rng_));
    const NodeId b = g_.parameter(name + "_b", Tensor({out}, 0.0));
    return g_.dense(x, w, b, name);
  }

 private:
  Graph& g_;
  std::mt19937_64 rng_;
};

void check_image(const ModelSpec& spec, const Tensor& image) {
  const Shape want{spec.height, spec.width, spec.channels};
  if (image.shape() != want) {
    throw ShapeError("image " + to_string(image.shape()) + " does not match model input " + to_string(want));
  }
}

std::string join_sizes(const std::vector<std::size_t>& w) {
  std::string out;
  for (std::size_t i = 0; i < w.size(); ++i) out += (i ? "," : "") + std::to_string(w[i]);
  return out;
}

std::size_t parse_size(const std::string& text) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(text, &pos);
  if (pos != text.size()) throw FormatError("bad integer '" + text + "'");
  return static_cast<std::size_t>(v);
}

// Keys reserved for the spec inside the frozen metadata block.
constexpr std::array<const char*, 12> kSpecKeys = {"family",  "height",      "width",       "channels",
                                                    "stem_pool", "blocks",   "widths",      "strides",
                                                    "classes",   "last_conv", "input_shift", "input_scale"};

}  // namespace

std::string to_string(ModelFamily family) {
  return family == ModelFamily::mini_mobilenet ? "mini_mobilenet" : "mini_resnet";
}

ModelFamily parse_model_family(const std::string& text) {
  if (text == "mini_mobilenet" || text == "mobilenet") return ModelFamily::mini_mobilenet;
  if (text == "mini_resnet" || text == "resnet") return ModelFamily::mini_resnet;
  throw SpecError("unknown model family '" + text + "'");
}

void ModelSpec::validate() const {
  if (height == 0 || width == 0 || channels == 0) throw SpecError("model input extents must be positive");
  if (stem_pool == 0 || height % stem_pool || width % stem_pool) {
    throw SpecError("stem_pool must divide the input height and width");
  }
  if (blocks == 0) throw SpecError("a model needs at least one block");
  if (widths.size() != blocks + 1) {
    throw SpecError("expected " + std::to_string(blocks + 1) + " channel widths, got " + std::to_string(widths.size()));
  }
  if (std::any_of(widths.begin(), widths.end(), [](std::size_t w) { return w == 0; })) {
    throw SpecError("channel widths must be positive");
  }
  if (family == ModelFamily::mini_resnet &&
      std::any_of(widths.begin(), widths.end(), [&](std::size_t w) { return w != widths[0]; })) {
    throw SpecError("mini_resnet identity skips need equal widths, got " + join_sizes(widths));
  }
  if (!strides.empty()) {
    if (strides.size() != blocks) {
      throw SpecError("expected " + std::to_string(blocks) + " block strides, got " + std::to_string(strides.size()));
    }
    // The stem conv halves the pooled extent (rounding up); every strided
    // block then needs an even extent.
    std::size_t h = (height / stem_pool + 1) / 2, w = (width / stem_pool + 1) / 2;
    for (std::size_t s : strides) {
      if (s != 1 && s != 2) throw SpecError("block strides must be 1 or 2");
      if (s == 2) {
        if (h % 2 || w % 2) throw SpecError("a stride-2 block needs even feature extents");
        h /= 2;
        w /= 2;
      }
    }
  }
  if (!std::isfinite(input_shift) || !std::isfinite(input_scale) || input_scale == 0.0) {
    throw SpecError("input normalization must be finite with a nonzero scale");
  }
  if (classes != 2) throw SpecError("the head must have exactly 2 classes");
}

std::string ModelSpec::last_conv_name() const {
  const std::string block = "block" + std::to_string(blocks);
  return family == ModelFamily::mini_mobilenet ? block + "_pw_out" : block + "_conv2_out";
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Model m;
  m.spec = spec;
  Graph& g = m.graph;
  Builder b(g, seed);

  const NodeId image = g.input(nodes::image);
  NodeId x = g.affine(image, spec.input_shift, spec.input_scale, "normalize");
  if (spec.stem_pool > 1) x = g.avg_pool(x, spec.stem_pool, "stem_pool");
  x = g.relu(b.conv(x, "stem", 3, spec.channels, spec.widths[0], 2), "stem_relu");

  for (std::size_t i = 1; i <= spec.blocks; ++i) {
    const std::string name = "block" + std::to_string(i);
    const std::size_t cin = spec.widths[i - 1], cout = spec.widths[i];
    if (spec.family == ModelFamily::mini_mobilenet) {
      x = g.relu(b.conv(x, name + "_dw", 3, cin, cin, spec.stride(i), cin), name + "_dw_relu");
      const NodeId pw = b.conv(x, name + "_pw", 1, cin, cout, 1);
      if (i == spec.blocks) g.retain_grad(pw);
      x = g.relu(pw, name + "_pw_relu");
    } else {
      const std::size_t s = spec.stride(i);
      const NodeId h = g.relu(b.conv(x, name + "_conv1", 3, cin, cout, s), name + "_conv1_relu");
      const NodeId c2 = b.conv(h, name + "_conv2", 3, cout, cout, 1);
      if (i == spec.blocks) g.retain_grad(c2);
      const NodeId identity = s > 1 ? g.avg_pool(x, s, name + "_down") : x;
      x = g.relu(g.add(c2, identity, name + "_skip"), name + "_relu");
    }
  }

  const NodeId pooled = g.global_avg_pool(x, "gap");
  const NodeId logits = b.dense(pooled, nodes::logits, spec.widths.back(), spec.classes);
  g.softmax(logits, nodes::probs);
  const NodeId labels = g.input(nodes::labels);
  g.softmax_cross_entropy(logits, labels, nodes::loss);
  return m;
}

std::size_t parameter_count(const Model& model) {
  std::size_t n = 0;
  for (NodeId p : model.graph.parameters()) n += model.graph.value(p).size();
  return n;
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) throw SpecError("cannot stack zero images");
  const Shape& s = images.front().shape();
  if (s.size() != 3) throw ShapeError("images must be [H,W,C], got " + to_string(s));
  Shape batch{images.size(), s[0], s[1], s[2]};
  Tensor out(batch);
  const std::size_t per = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != s) throw ShapeError("mixed image shapes in batch");
    std::copy(images[i].values().begin(), images[i].values().end(), out.values().begin() + static_cast<long>(i * per));
  }
  return out;
}

std::vector<ScorePair> predict_batch(const Model& model, std::span<const Tensor> images, ScoreKind kind) {
  for (const auto& img : images) check_image(model.spec, img);
  Graph g = model.graph.inference_copy();
  const NodeId out = g.require(kind == ScoreKind::probability ? nodes::probs : nodes::logits);
  std::vector<ScorePair> scores;
  scores.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kInferenceChunk) {
    const auto chunk = images.subspan(start, std::min(kInferenceChunk, images.size() - start));
    g.forward({{nodes::image, stack_images(chunk)}}, std::span(&out, 1));
    const Tensor& v = g.value(out);
    for (std::size_t i = 0; i < chunk.size(); ++i) scores.push_back({v[i * 2], v[i * 2 + 1], kind});
  }
  return scores;
}

ScorePair predict_scores(const Model& model, const Tensor& image, ScoreKind kind) {
  return predict_batch(model, std::span(&image, 1), kind).front();
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw SpecError("batch size must be >= 1");
  if (epochs == 0) throw SpecError("epoch budget must be >= 1");
  OptimizerConfig o = optimizer;
  if (o.decay == DecayKind::exponential && o.decay_steps == 0) o.decay_steps = 1;
  o.validate();
}

TrainHistory train(Model& model, std::span<const Tensor> images, std::span<const Label> labels,
                   const TrainConfig& config) {
  config.validate();
  if (images.empty()) throw SpecError("training set is empty");
  if (images.size() != labels.size()) throw SpecError("image and label counts differ");
  if (std::find(labels.begin(), labels.end(), Label::ok) == labels.end() ||
      std::find(labels.begin(), labels.end(), Label::nok) == labels.end()) {
    throw SpecError("training set must contain both labels");
  }
  for (const auto& img : images) check_image(model.spec, img);

  Graph& g = model.graph;
  const NodeId loss = g.require(nodes::loss);
  const NodeId probs = g.require(nodes::probs);
  const std::array<NodeId, 2> targets{loss, probs};
  const std::vector<NodeId> params = g.parameters();

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  OptimizerConfig opt = config.optimizer;
  if (opt.decay == DecayKind::exponential && opt.decay_steps == 0) {
    opt.decay_steps = config.epochs * ((images.size() + config.batch_size - 1) / config.batch_size);
  }
  OptimizerState state;
  TrainHistory history;
  std::vector<Tensor> batch_images;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      batch_images.clear();
      Tensor onehot({n, 2}, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        batch_images.push_back(images[order[start + i]]);
        onehot[i * 2 + class_index(labels[order[start + i]])] = 1.0;
      }
      g.forward({{nodes::image, stack_images(batch_images)}, {nodes::labels, std::move(onehot)}}, targets);
      const double l = g.value(loss).item();
      if (!std::isfinite(l)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      }
      const Tensor& p = g.value(probs);
      for (std::size_t i = 0; i < n; ++i) {
        const Label pred = p[i * 2] > p[i * 2 + 1] ? Label::ok : Label::nok;
        if (pred == labels[order[start + i]]) ++correct;
      }
      loss_sum += l * static_cast<double>(n);

      g.backward(loss);
      std::vector<ParameterSlot> slots;
      slots.reserve(params.size());
      for (NodeId id : params) slots.push_back({{}, g.grad(id).values()});
      for (std::size_t k = 0; k < params.size(); ++k) slots[k].value = g.parameter_value(params[k]).values();
      try {
        optimizer_step(slots, opt, state);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " + e.what());
      }
    }
    const double total = static_cast<double>(order.size());
    history.push_back({epoch, loss_sum / total, static_cast<double>(correct) / total});
  }
  g.clear_activations();
  return history;
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  io::CsvTable t;
  t.header = {"epoch", "loss", "accuracy"};
  for (const auto& e : history) {
    t.rows.push_back({std::to_string(e.epoch), io::format_double(e.loss), io::format_double(e.accuracy)});
  }
  io::write_csv(path, t);
}

double accuracy(const Model& model, std::span<const Tensor> images, std::span<const Label> labels) {
  if (images.empty() || images.size() != labels.size()) throw SpecError("accuracy needs matching, nonempty inputs");
  const auto scores = predict_batch(model, images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) correct += scores[i].argmax() == labels[i];
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

std::vector<std::uint8_t> freeze_to_bytes(const Model& model) {
  io::Container c;
  for (const auto& [k, v] : model.metadata) {
    if (std::find_if(kSpecKeys.begin(), kSpecKeys.end(), [&](const char* r) { return k == r; }) != kSpecKeys.end()) {
      throw SpecError("metadata key '" + k + "' is reserved");
    }
    c.metadata[k] = v;
  }
  const ModelSpec& s = model.spec;
  c.metadata["family"] = to_string(s.family);
  c.metadata["height"] = std::to_string(s.height);
  c.metadata["width"] = std::to_string(s.width);
  c.metadata["channels"] = std::to_string(s.channels);
  c.metadata["stem_pool"] = std::to_string(s.stem_pool);
  c.metadata["blocks"] = std::to_string(s.blocks);
  c.metadata["widths"] = join_sizes(s.widths);
  c.metadata["strides"] = join_sizes(s.strides);
  c.metadata["classes"] = std::to_string(s.classes);
  c.metadata["last_conv"] = s.last_conv_name();
  c.metadata["input_shift"] = io::format_double(s.input_shift);
  c.metadata["input_scale"] = io::format_double(s.input_scale);
  for (NodeId p : model.graph.parameters()) {
    c.tensors.push_back({model.graph.node(p).name, model.graph.value(p)});
  }
  return io::encode_container(kFrozenMagic, kFrozenModelVersion, c);
}

Model load_frozen_bytes(std::span<const std::uint8_t> bytes) {
  const io::Container c = io::decode_container(bytes, kFrozenMagic, kFrozenModelVersion);
  ModelSpec spec;
  try {
    spec.family = parse_model_family(c.meta("family"));
    spec.height = parse_size(c.meta("height"));
    spec.width = parse_size(c.meta("width"));
    spec.channels = parse_size(c.meta("channels"));
    spec.stem_pool = parse_size(c.meta("stem_pool"));
    spec.blocks = parse_size(c.meta("blocks"));
    spec.classes = parse_size(c.meta("classes"));
    spec.input_shift = io::parse_double(c.meta("input_shift"));
    spec.input_scale = io::parse_double(c.meta("input_scale"));
    spec.widths.clear();
    std::stringstream ws(c.meta("widths"));
    for (std::string tok; std::getline(ws, tok, ',');) spec.widths.push_back(parse_size(tok));
    std::stringstream ss(c.meta("strides"));
    for (std::string tok; std::getline(ss, tok, ',');) spec.strides.push_back(parse_size(tok));
    spec.validate();
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("frozen model spec is invalid: ") + e.what());
  }
  if (c.meta("last_conv") != spec.last_conv_name()) {
    throw FormatError("frozen model names hook '" + c.meta("last_conv") + "', expected '" + spec.last_conv_name() + "'");
  }

  Model m = build_model(spec, 0);
  const auto params = m.graph.parameters();
  if (params.size() != c.tensors.size()) {
    throw FormatError("frozen model has " + std::to_string(c.tensors.size()) + " tensors, spec needs " +
                      std::to_string(params.size()));
  }
  for (NodeId p : params) {
    const std::string& name = m.graph.node(p).name;
    const Tensor& t = c.tensor(name);
    if (t.shape() != m.graph.value(p).shape()) {
      throw FormatError("tensor '" + name + "' has shape " + to_string(t.shape()) + ", expected " +
                        to_string(m.graph.value(p).shape()));
    }
    m.graph.parameter_value(p) = t;
  }
  for (const auto& [k, v] : c.metadata) {
    if (std::find_if(kSpecKeys.begin(), kSpecKeys.end(), [&](const char* r) { return k == r; }) == kSpecKeys.end()) {
      m.metadata[k] = v;
    }
  }
  return m;
}

void freeze(const Model& model, const std::filesystem::path& path) {
  io::write_bytes(path, freeze_to_bytes(model));
}

Model load_frozen(const std::filesystem::path& path) { return load_frozen_bytes(io::read_bytes(path)); }

}  // namespace weldcam
