#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "weldcam/kernels.hpp"
#include "weldcam/tensor.hpp"

namespace weldcam {

enum class OpKind {
  input,
  parameter,
  conv2d,
  bias_add,
  relu,
  avg_pool,
  global_avg_pool,
  dense,
  add,
  softmax,
  softmax_cross_entropy,
  sum,
  square,
  affine,
};

std::string_view op_name(OpKind op);

using NodeId = std::size_t;

struct Node {
  OpKind op = OpKind::input;
  std::string name;
  std::vector<NodeId> inputs;

  // Op attributes; only the ones relevant to `op` are meaningful.
  std::size_t stride = 1;
  std::size_t groups = 1;
  std::size_t window = 1;
  Padding padding = Padding::valid;
  double shift = 0.0;
  double scale = 1.0;

  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool trainable = false;
  bool retain_grad = false;
};

/// Named tensors supplied to forward(). Entries naming an input node provide
/// its value; entries naming any other node replace that node's computed
/// value, which is how activation-level finite differences are taken.
using Feed = std::map<std::string, Tensor, std::less<>>;

/// Static, append-only computation graph. Nodes are stored in creation order,
/// which is a topological order because an op can only consume existing nodes.
///
/// A Graph is a value: copying it copies weights and any cached activations.
/// Use inference_copy() to get a copy without the activation buffers.
class Graph {
 public:
  NodeId input(std::string name);
  NodeId parameter(std::string name, Tensor init, bool trainable = true);

  NodeId conv2d(NodeId x, NodeId kernels, std::size_t stride, Padding padding,
                std::size_t groups = 1, std::string name = {});
  NodeId bias_add(NodeId x, NodeId bias, std::string name = {});
  NodeId relu(NodeId x, std::string name = {});
  NodeId avg_pool(NodeId x, std::size_t window, std::string name = {});
  NodeId global_avg_pool(NodeId x, std::string name = {});
  NodeId dense(NodeId x, NodeId weights, NodeId bias, std::string name = {});
  NodeId add(NodeId a, NodeId b, std::string name = {});
  NodeId softmax(NodeId logits, std::string name = {});
  /// Mean over the batch of -sum(labels * log(clamp(softmax(logits)))).
  NodeId softmax_cross_entropy(NodeId logits, NodeId labels, std::string name = {});
  NodeId sum(NodeId x, std::string name = {});
  NodeId square(NodeId x, std::string name = {});
  /// (x + shift) * scale, elementwise.
  NodeId affine(NodeId x, double shift, double scale, std::string name = {});

  /// Keep this node's gradient after backward (parameters always keep theirs).
  void retain_grad(NodeId id);

  /// Evaluates every node reachable from `targets` (all nodes when empty).
  void forward(const Feed& feed, std::span<const NodeId> targets = {});

  /// Reverse-mode pass from a scalar loss node.
  void backward(NodeId loss);
  /// Reverse-mode pass seeded with d(output) = seed.
  void backward(NodeId output, const Tensor& seed);

  const Node& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const;
  const Tensor& grad(NodeId id) const;

  /// Mutable weights of a parameter node. Invalidates cached activations.
  Tensor& parameter_value(NodeId id);

  std::vector<NodeId> parameters() const;
  std::optional<NodeId> find(std::string_view name) const;
  NodeId require(std::string_view name) const;

  bool computed(NodeId id) const { return computed_.at(id); }

  /// Copy that keeps structure and parameter values but drops activations and gradients.
  Graph inference_copy() const;
  void clear_activations();

 private:
  NodeId add_node(Node node);
  void check_id(NodeId id) const;
  void evaluate(NodeId id);
  void propagate(NodeId id, std::vector<Tensor>& grads, std::vector<bool>& has,
                 const std::vector<bool>& wanted);

  std::vector<Node> nodes_;
  std::vector<bool> computed_;
};

}  // namespace weldcam
