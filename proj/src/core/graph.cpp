#include "weldcam/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "weldcam/errors.hpp"

namespace weldcam {

namespace {

constexpr double kProbFloor = 1e-12;

void expect_rank(const Node& n, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op_name(n.op)) + " '" + n.name + "' expects rank " +
                     std::to_string(rank) + " input, got " + to_string(t.shape()));
  }
}

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::input: return "input";
    case OpKind::parameter: return "parameter";
    case OpKind::conv2d: return "conv2d";
    case OpKind::bias_add: return "bias_add";
    case OpKind::relu: return "relu";
    case OpKind::avg_pool: return "avg_pool";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::dense: return "dense";
    case OpKind::add: return "add";
    case OpKind::softmax: return "softmax";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
    case OpKind::sum: return "sum";
    case OpKind::square: return "square";
    case OpKind::affine: return "affine";
  }
  return "unknown";
}

NodeId Graph::add_node(Node node) {
  for (NodeId in : node.inputs) check_id(in);
  if (node.name.empty()) node.name = std::string(op_name(node.op)) + "_" + std::to_string(nodes_.size());
  if (find(node.name)) throw SpecError("duplicate node name '" + node.name + "'");
  nodes_.push_back(std::move(node));
  computed_.push_back(false);
  return nodes_.size() - 1;
}

void Graph::check_id(NodeId id) const {
  if (id >= nodes_.size()) throw SpecError("unknown node id " + std::to_string(id));
}

NodeId Graph::input(std::string name) {
  Node n;
  n.op = OpKind::input;
  n.name = std::move(name);
  return add_node(std::move(n));
}

NodeId Graph::parameter(std::string name, Tensor init, bool trainable) {
  Node n;
  n.op = OpKind::parameter;
  n.name = std::move(name);
  n.value = std::move(init);
  n.trainable = trainable;
  const NodeId id = add_node(std::move(n));
  computed_[id] = true;
  return id;
}

NodeId Graph::conv2d(NodeId x, NodeId kernels, std::size_t stride, Padding padding,
                     std::size_t groups, std::string name) {
  if (stride == 0) throw SpecError("conv2d stride must be >= 1");
  if (groups == 0) throw SpecError("conv2d groups must be >= 1");
  Node n;
  n.op = OpKind::conv2d;
  n.name = std::move(name);
  n.inputs = {x, kernels};
  n.stride = stride;
  n.padding = padding;
  n.groups = groups;
  return add_node(std::move(n));
}

NodeId Graph::bias_add(NodeId x, NodeId bias, std::string name) {
  Node n;
  n.op = OpKind::bias_add;
  n.name = std::move(name);
  n.inputs = {x, bias};
  return add_node(std::move(n));
}

NodeId Graph::relu(NodeId x, std::string name) {
  Node n;
  n.op = OpKind::relu;
  n.name = std::move(name);
  n.inputs = {x};
  return add_node(std::move(n));
}

NodeId Graph::avg_pool(NodeId x, std::size_t window, std::string name) {
  if (window == 0) throw SpecError("avg_pool window must be >= 1");
  Node n;
  n.op = OpKind::avg_pool;
  n.name = std::move(name);
  n.inputs = {x};
  n.window = window;
  return add_node(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId x, std::string name) {
  Node n;
  n.op = OpKind::global_avg_pool;
  n.name = std::move(name);
  n.inputs = {x};
  return add_node(std::move(n));
}

NodeId Graph::dense(NodeId x, NodeId weights, NodeId bias, std::string name) {
  Node n;
  n.op = OpKind::dense;
  n.name = std::move(name);
  n.inputs = {x, weights, bias};
  return add_node(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b, std::string name) {
  Node n;
  n.op = OpKind::add;
  n.name = std::move(name);
  n.inputs = {a, b};
  return add_node(std::move(n));
}

NodeId Graph::softmax(NodeId logits, std::string name) {
  Node n;
  n.op = OpKind::softmax;
  n.name = std::move(name);
  n.inputs = {logits};
  return add_node(std::move(n));
}

NodeId Graph::softmax_cross_entropy(NodeId logits, NodeId labels, std::string name) {
  Node n;
  n.op = OpKind::softmax_cross_entropy;
  n.name = std::move(name);
  n.inputs = {logits, labels};
  return add_node(std::move(n));
}

NodeId Graph::sum(NodeId x, std::string name) {
  Node n;
  n.op = OpKind::sum;
  n.name = std::move(name);
  n.inputs = {x};
  return add_node(std::move(n));
}

NodeId Graph::square(NodeId x, std::string name) {
  Node n;
  n.op = OpKind::square;
  n.name = std::move(name);
  n.inputs = {x};
  return add_node(std::move(n));
}

NodeId Graph::affine(NodeId x, double shift, double scale, std::string name) {
  if (!std::isfinite(shift) || !std::isfinite(scale)) throw SpecError("affine constants must be finite");
  Node n;
  n.op = OpKind::affine;
  n.name = std::move(name);
  n.inputs = {x};
  n.shift = shift;
  n.scale = scale;
  return add_node(std::move(n));
}

void Graph::retain_grad(NodeId id) {
  check_id(id);
  nodes_[id].retain_grad = true;
}

const Tensor& Graph::value(NodeId id) const {
  check_id(id);
  if (!computed_[id]) throw StateError("node '" + nodes_[id].name + "' has not been evaluated");
  return nodes_[id].value;
}

const Tensor& Graph::grad(NodeId id) const {
  check_id(id);
  if (!nodes_[id].has_grad) throw StateError("node '" + nodes_[id].name + "' has no gradient");
  return nodes_[id].grad;
}

Tensor& Graph::parameter_value(NodeId id) {
  check_id(id);
  if (nodes_[id].op != OpKind::parameter) {
    throw SpecError("node '" + nodes_[id].name + "' is not a parameter");
  }
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != OpKind::parameter) computed_[i] = false;
  }
  return nodes_[id].value;
}

std::vector<NodeId> Graph::parameters() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op == OpKind::parameter && nodes_[i].trainable) out.push_back(i);
  }
  return out;
}

std::optional<NodeId> Graph::find(std::string_view name) const {
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].name == name) return i;
  }
  return std::nullopt;
}

NodeId Graph::require(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw SpecError("graph has no node named '" + std::string(name) + "'");
}

Graph Graph::inference_copy() const {
  Graph out;
  out.nodes_.reserve(nodes_.size());
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    const Node& src = nodes_[i];
    Node n;
    n.op = src.op;
    n.name = src.name;
    n.inputs = src.inputs;
    n.stride = src.stride;
    n.groups = src.groups;
    n.window = src.window;
    n.padding = src.padding;
    n.shift = src.shift;
    n.scale = src.scale;
    n.trainable = src.trainable;
    n.retain_grad = src.retain_grad;
    if (src.op == OpKind::parameter) n.value = src.value;
    out.nodes_.push_back(std::move(n));
    out.computed_.push_back(src.op == OpKind::parameter);
  }
  return out;
}

void Graph::clear_activations() {
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    n.grad = Tensor();
    n.has_grad = false;
    if (n.op != OpKind::parameter) {
      n.value = Tensor();
      computed_[i] = false;
    }
  }
}

void Graph::forward(const Feed& feed, std::span<const NodeId> targets) {
  std::vector<bool> needed(nodes_.size(), targets.empty());
  for (NodeId t : targets) {
    check_id(t);
    needed[t] = true;
  }
  // Creation order is topological, so one reverse sweep marks every ancestor.
  std::vector<bool> fed(nodes_.size(), false);
  for (NodeId i = nodes_.size(); i-- > 0;) {
    if (!needed[i]) continue;
    auto it = feed.find(nodes_[i].name);
    if (it != feed.end() && nodes_[i].op != OpKind::parameter) {
      fed[i] = true;
      continue;
    }
    for (NodeId in : nodes_[i].inputs) needed[in] = true;
  }

  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].op != OpKind::parameter) computed_[i] = false;
  }
  for (NodeId i = 0; i < nodes_.size(); ++i) {
    if (!needed[i]) continue;
    Node& n = nodes_[i];
    n.grad = Tensor();
    n.has_grad = false;
    if (n.op == OpKind::parameter) continue;
    if (fed[i]) {
      const Tensor& v = feed.find(n.name)->second;
      if (n.op != OpKind::input && !n.value.empty() && v.shape() != n.value.shape()) {
        throw ShapeError("feed for '" + n.name + "' has shape " + to_string(v.shape()) +
                         ", node produces " + to_string(n.value.shape()));
      }
      n.value = v;
      computed_[i] = true;
      continue;
    }
    if (n.op == OpKind::input) {
      throw UnresolvedInputError("no feed entry for graph input '" + n.name + "'");
    }
    evaluate(i);
    computed_[i] = true;
  }
}

void Graph::evaluate(NodeId id) {
  Node& n = nodes_[id];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };

  switch (n.op) {
    case OpKind::input:
    case OpKind::parameter:
      return;
    case OpKind::conv2d: {
      const Conv2dGeometry g =
          conv2d_geometry(in(0).shape(), in(1).shape(), n.stride, n.padding, n.groups);
      n.value = Tensor(g.output_shape());
      kernels::conv2d_forward(g, in(0).values(), in(1).values(), n.value.values());
      return;
    }
    case OpKind::bias_add: {
      const Tensor& x = in(0);
      const Tensor& b = in(1);
      const std::size_t c = b.size();
      if (x.rank() == 0 || x.shape().back() != c) {
        throw ShapeError("bias_add '" + n.name + "': bias " + to_string(b.shape()) +
                         " does not match channels of " + to_string(x.shape()));
      }
      n.value = x;
      auto v = n.value.values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += b[i % c];
      return;
    }
    case OpKind::relu: {
      n.value = in(0);
      for (double& v : n.value.values()) v = v > 0.0 ? v : 0.0;
      return;
    }
    case OpKind::avg_pool: {
      const Tensor& x = in(0);
      expect_rank(n, x, 4);
      const std::size_t p = n.window;
      const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
      if (H < p || W < p) throw ShapeError("avg_pool window larger than input " + to_string(x.shape()));
      const std::size_t oh = H / p, ow = W / p;
      n.value = Tensor({N, oh, ow, C});
      const double scale = 1.0 / static_cast<double>(p * p);
      for (std::size_t b = 0; b < N; ++b)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            double* out = &n.value[((b * oh + i) * ow + j) * C];
            for (std::size_t a = 0; a < p; ++a)
              for (std::size_t c2 = 0; c2 < p; ++c2) {
                const double* px = &x[((b * H + i * p + a) * W + j * p + c2) * C];
                for (std::size_t c = 0; c < C; ++c) out[c] += px[c];
              }
            for (std::size_t c = 0; c < C; ++c) out[c] *= scale;
          }
      return;
    }
    case OpKind::global_avg_pool: {
      const Tensor& x = in(0);
      expect_rank(n, x, 4);
      const std::size_t N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
      n.value = Tensor({N, C});
      for (std::size_t b = 0; b < N; ++b) {
        for (std::size_t s = 0; s < HW; ++s)
          for (std::size_t c = 0; c < C; ++c) n.value[b * C + c] += x[(b * HW + s) * C + c];
        for (std::size_t c = 0; c < C; ++c) n.value[b * C + c] /= static_cast<double>(HW);
      }
      return;
    }
    case OpKind::dense: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const Tensor& b = in(2);
      expect_rank(n, x, 2);
      if (w.rank() != 2 || w.dim(0) != x.dim(1) || b.size() != w.dim(1)) {
        throw ShapeError("dense '" + n.name + "': input " + to_string(x.shape()) + ", weights " +
                         to_string(w.shape()) + ", bias " + to_string(b.shape()));
      }
      const std::size_t N = x.dim(0), D = x.dim(1), U = w.dim(1);
      n.value = Tensor({N, U});
      for (std::size_t r = 0; r < N; ++r) {
        for (std::size_t u = 0; u < U; ++u) n.value[r * U + u] = b[u];
        for (std::size_t d = 0; d < D; ++d) {
          const double xv = x[r * D + d];
          for (std::size_t u = 0; u < U; ++u) n.value[r * U + u] += xv * w[d * U + u];
        }
      }
      return;
    }
    case OpKind::add: {
      if (in(0).shape() != in(1).shape()) {
        throw ShapeError("add '" + n.name + "': " + to_string(in(0).shape()) + " vs " +
                         to_string(in(1).shape()));
      }
      n.value = in(0);
      for (std::size_t i = 0; i < n.value.size(); ++i) n.value[i] += in(1)[i];
      return;
    }
    case OpKind::softmax: {
      const Tensor& z = in(0);
      expect_rank(n, z, 2);
      const std::size_t N = z.dim(0), K = z.dim(1);
      n.value = Tensor(z.shape());
      for (std::size_t r = 0; r < N; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, z[r * K + k]);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          n.value[r * K + k] = std::exp(z[r * K + k] - mx);
          total += n.value[r * K + k];
        }
        for (std::size_t k = 0; k < K; ++k) n.value[r * K + k] /= total;
      }
      return;
    }
    case OpKind::softmax_cross_entropy: {
      const Tensor& z = in(0);
      const Tensor& y = in(1);
      expect_rank(n, z, 2);
      if (y.shape() != z.shape()) {
        throw ShapeError("softmax_cross_entropy '" + n.name + "': labels " + to_string(y.shape()) +
                         " vs logits " + to_string(z.shape()));
      }
      const std::size_t N = z.dim(0), K = z.dim(1);
      double loss = 0.0;
      for (std::size_t r = 0; r < N; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, z[r * K + k]);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) total += std::exp(z[r * K + k] - mx);
        for (std::size_t k = 0; k < K; ++k) {
          if (y[r * K + k] == 0.0) continue;
          const double p = std::clamp(std::exp(z[r * K + k] - mx) / total, kProbFloor, 1.0 - kProbFloor);
          loss -= y[r * K + k] * std::log(p);
        }
      }
      n.value = Tensor::scalar(loss / static_cast<double>(N));
      return;
    }
    case OpKind::sum: {
      double s = 0.0;
      for (double v : in(0).values()) s += v;
      n.value = Tensor::scalar(s);
      return;
    }
    case OpKind::square: {
      n.value = in(0);
      for (double& v : n.value.values()) v *= v;
      return;
    }
    case OpKind::affine: {
      n.value = in(0);
      for (double& v : n.value.values()) v = (v + n.shift) * n.scale;
      return;
    }
  }
}

void Graph::backward(NodeId loss) {
  check_id(loss);
  if (!computed_[loss]) {
    throw StateError("backward called before forward for '" + nodes_[loss].name + "'");
  }
  if (nodes_[loss].value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, '" + nodes_[loss].name + "' has shape " +
                     to_string(nodes_[loss].value.shape()));
  }
  backward(loss, Tensor(nodes_[loss].value.shape(), 1.0));
}

void Graph::backward(NodeId output, const Tensor& seed) {
  check_id(output);
  if (!computed_[output]) {
    throw StateError("backward called before forward for '" + nodes_[output].name + "'");
  }
  if (seed.shape() != nodes_[output].value.shape()) {
    throw ShapeError("backward seed " + to_string(seed.shape()) + " does not match '" +
                     nodes_[output].name + "' " + to_string(nodes_[output].value.shape()));
  }

  // wanted[i]: node i is a gradient destination or lies between one and the output.
  std::vector<bool> wanted(nodes_.size(), false);
  for (NodeId i = 0; i <= output; ++i) {
    const Node& n = nodes_[i];
    bool w = n.trainable || n.retain_grad;
    for (NodeId in : n.inputs) w = w || wanted[in];
    wanted[i] = w && computed_[i];
  }

  std::vector<Tensor> grads(nodes_.size());
  std::vector<bool> has(nodes_.size(), false);
  grads[output] = seed;
  has[output] = true;
  for (NodeId i = output + 1; i-- > 0;) {
    if (!has[i]) continue;
    propagate(i, grads, has, wanted);
  }

  for (NodeId i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    const bool keep = n.trainable || n.retain_grad;
    if (keep && has[i]) {
      n.grad = std::move(grads[i]);
      n.has_grad = true;
    } else if (n.trainable) {
      n.grad = Tensor(n.value.shape(), 0.0);
      n.has_grad = true;
    } else {
      n.grad = Tensor();
      n.has_grad = false;
    }
  }
}

void Graph::propagate(NodeId id, std::vector<Tensor>& grads, std::vector<bool>& has,
                      const std::vector<bool>& wanted) {
  const Node& n = nodes_[id];
  const Tensor& dy = grads[id];
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  auto want = [&](std::size_t k) { return wanted[n.inputs[k]]; };
  // Accumulates into the gradient slot of input k, creating it on first use.
  auto slot = [&](std::size_t k) -> Tensor& {
    const NodeId src = n.inputs[k];
    if (!has[src]) {
      grads[src] = Tensor(nodes_[src].value.shape(), 0.0);
      has[src] = true;
    }
    return grads[src];
  };

  switch (n.op) {
    case OpKind::input:
    case OpKind::parameter:
      return;
    case OpKind::conv2d: {
      const Conv2dGeometry g =
          conv2d_geometry(in(0).shape(), in(1).shape(), n.stride, n.padding, n.groups);
      if (want(0)) {
        Tensor dx(in(0).shape());
        kernels::conv2d_backward_input(g, in(1).values(), dy.values(), dx.values());
        Tensor& s = slot(0);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += dx[i];
      }
      if (want(1)) {
        Tensor dk(in(1).shape());
        kernels::conv2d_backward_kernels(g, in(0).values(), dy.values(), dk.values());
        Tensor& s = slot(1);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += dk[i];
      }
      return;
    }
    case OpKind::bias_add: {
      if (want(0)) {
        Tensor& s = slot(0);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += dy[i];
      }
      if (want(1)) {
        Tensor& s = slot(1);
        const std::size_t c = s.size();
        for (std::size_t i = 0; i < dy.size(); ++i) s[i % c] += dy[i];
      }
      return;
    }
    case OpKind::relu: {
      if (!want(0)) return;
      Tensor& s = slot(0);
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (x[i] > 0.0) s[i] += dy[i];
      }
      return;
    }
    case OpKind::avg_pool: {
      if (!want(0)) return;
      Tensor& s = slot(0);
      const Tensor& x = in(0);
      const std::size_t p = n.window;
      const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
      const std::size_t oh = H / p, ow = W / p;
      const double scale = 1.0 / static_cast<double>(p * p);
      for (std::size_t b = 0; b < N; ++b)
        for (std::size_t i = 0; i < oh; ++i)
          for (std::size_t j = 0; j < ow; ++j) {
            const double* g = &dy[((b * oh + i) * ow + j) * C];
            for (std::size_t a = 0; a < p; ++a)
              for (std::size_t c2 = 0; c2 < p; ++c2) {
                double* px = &s[((b * H + i * p + a) * W + j * p + c2) * C];
                for (std::size_t c = 0; c < C; ++c) px[c] += g[c] * scale;
              }
          }
      return;
    }
    case OpKind::global_avg_pool: {
      if (!want(0)) return;
      Tensor& s = slot(0);
      const Tensor& x = in(0);
      const std::size_t N = x.dim(0), HW = x.dim(1) * x.dim(2), C = x.dim(3);
      const double scale = 1.0 / static_cast<double>(HW);
      for (std::size_t b = 0; b < N; ++b)
        for (std::size_t p = 0; p < HW; ++p)
          for (std::size_t c = 0; c < C; ++c) s[(b * HW + p) * C + c] += dy[b * C + c] * scale;
      return;
    }
    case OpKind::dense: {
      const Tensor& x = in(0);
      const Tensor& w = in(1);
      const std::size_t N = x.dim(0), D = x.dim(1), U = w.dim(1);
      if (want(0)) {
        Tensor& s = slot(0);
        for (std::size_t r = 0; r < N; ++r)
          for (std::size_t d = 0; d < D; ++d) {
            double acc = 0.0;
            for (std::size_t u = 0; u < U; ++u) acc += dy[r * U + u] * w[d * U + u];
            s[r * D + d] += acc;
          }
      }
      if (want(1)) {
        Tensor& s = slot(1);
        for (std::size_t r = 0; r < N; ++r)
          for (std::size_t d = 0; d < D; ++d) {
            const double xv = x[r * D + d];
            for (std::size_t u = 0; u < U; ++u) s[d * U + u] += xv * dy[r * U + u];
          }
      }
      if (want(2)) {
        Tensor& s = slot(2);
        for (std::size_t r = 0; r < N; ++r)
          for (std::size_t u = 0; u < U; ++u) s[u] += dy[r * U + u];
      }
      return;
    }
    case OpKind::add: {
      for (std::size_t k = 0; k < 2; ++k) {
        if (!want(k)) continue;
        Tensor& s = slot(k);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += dy[i];
      }
      return;
    }
    case OpKind::softmax: {
      if (!want(0)) return;
      Tensor& s = slot(0);
      const Tensor& p = n.value;
      const std::size_t N = p.dim(0), K = p.dim(1);
      for (std::size_t r = 0; r < N; ++r) {
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) dot += dy[r * K + k] * p[r * K + k];
        for (std::size_t k = 0; k < K; ++k) s[r * K + k] += p[r * K + k] * (dy[r * K + k] - dot);
      }
      return;
    }
    case OpKind::softmax_cross_entropy: {
      if (!want(0)) return;  // labels are data, never differentiated
      Tensor& s = slot(0);
      const Tensor& z = in(0);
      const Tensor& y = in(1);
      const std::size_t N = z.dim(0), K = z.dim(1);
      const double upstream = dy[0] / static_cast<double>(N);
      std::vector<double> p(K), dp(K);
      for (std::size_t r = 0; r < N; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, z[r * K + k]);
        double total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          p[k] = std::exp(z[r * K + k] - mx);
          total += p[k];
        }
        for (std::size_t k = 0; k < K; ++k) p[k] /= total;
        // d loss / d p_k, zero where the clamp is active.
        double dot = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
          const bool clamped = p[k] < kProbFloor || p[k] > 1.0 - kProbFloor;
          dp[k] = (y[r * K + k] == 0.0 || clamped) ? 0.0 : -y[r * K + k] / p[k];
          dot += dp[k] * p[k];
        }
        for (std::size_t k = 0; k < K; ++k) s[r * K + k] += upstream * p[k] * (dp[k] - dot);
      }
      return;
    }
    case OpKind::sum: {
      if (!want(0)) return;
      Tensor& s = slot(0);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += dy[0];
      return;
    }
    case OpKind::square: {
      if (!want(0)) return;
      Tensor& s = slot(0);
      const Tensor& x = in(0);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += 2.0 * x[i] * dy[i];
      return;
    }
    case OpKind::affine: {
      if (!want(0)) return;
      Tensor& s = slot(0);
      for (std::size_t i = 0; i < s.size(); ++i) s[i] += n.scale * dy[i];
      return;
    }
  }
}

}  // namespace weldcam
