#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "detcnn/layers.hpp"
#include "detcnn/tensor.hpp"

namespace detcnn {

/// Id of the implicit source node that holds the model input.
inline constexpr const char* kInputNode = "input";

/// One parameter or buffer in canonical registry order.
template <typename T>
struct ParamRef {
  std::string node;
  Param<T>* param = nullptr;

  std::string qualified_name() const { return node + "/" + param->name; }
};

struct RegistryEntry {
  std::string name;  // "<node>/<param>"
  Shape shape;
  bool trainable = true;
};

/// DAG of layers. Nodes are added with their input ids and built on insertion,
/// so shape errors surface immediately and name the node. Execution follows
/// the canonical order: Kahn's algorithm with ready nodes taken in
/// lexicographic id order, which makes it independent of insertion order.
template <typename T>
class BasicModelGraph {
 public:
  using TensorT = BasicTensor<T>;

  struct Node {
    std::string id;
    std::unique_ptr<Layer<T>> layer;
    std::vector<std::string> inputs;
    Shape shape;  // per-item output shape
  };

  /// Node outputs of the latest forward pass, keyed by node id (the input
  /// tensor is stored under kInputNode).
  using Cache = std::map<std::string, TensorT>;

  explicit BasicModelGraph(Shape input_shape);

  BasicModelGraph(BasicModelGraph&&) noexcept = default;
  BasicModelGraph& operator=(BasicModelGraph&&) noexcept = default;

  /// Adds and builds a node. Ids must be unique and not kInputNode; every
  /// input must already exist. Throws config_error naming the node.
  void add(const std::string& id, const LayerConfig& cfg, std::vector<std::string> inputs);
  /// Marks the output node. Every node must feed it (no dangling branches).
  void set_output(const std::string& id);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const std::string& output() const noexcept { return output_; }
  /// Node ids in canonical execution order.
  const std::vector<std::string>& order() const noexcept { return order_; }
  const Node& node(const std::string& id) const;
  Node& node(const std::string& id);
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  /// Per-item output shape of a node (kInputNode gives the input shape).
  const Shape& shape_of(const std::string& id) const;
  /// Nodes reading `id`'s output, in canonical order.
  std::vector<std::string> consumers(const std::string& id) const;
  /// Longest path length from the input.
  std::size_t depth(const std::string& id) const;

  /// Runs every node in canonical order on a batched input. Node outputs are
  /// stored in `cache` when given.
  TensorT forward(const TensorT& x, const RunContext& ctx, Cache* cache = nullptr);

  /// Backpropagates `grad_out` (gradient of the output node) through the
  /// nodes cached by the preceding forward call, in reverse canonical order.
  /// Gradients reaching a node from several consumers are summed in reverse
  /// canonical order of the consumers. With `stop_at` set, returns the
  /// gradient of that node's output as soon as it is complete; otherwise the
  /// gradient of the input. Parameter gradients are written when
  /// ctx.param_grads is set. `from` starts the pass at another node whose
  /// output gradient is `grad_out` (nodes after it are skipped).
  TensorT backward(const Cache& cache, const TensorT& grad_out, const RunContext& ctx,
                   const std::string& stop_at = "", const std::string& from = "");

  /// Trainable parameters then buffers, each in canonical node order and then
  /// lexicographic parameter-name order.
  std::vector<ParamRef<T>> trainables();
  std::vector<ParamRef<T>> buffers();
  std::vector<RegistryEntry> registry() const;

  std::size_t count_trainable() const;
  std::size_t count_total() const;

  /// Human-readable listing of nodes, inputs, shapes and hyperparameters.
  std::string architecture() const;

 private:
  void recompute_order();
  std::vector<ParamRef<T>> collect(bool trainable);

  Shape input_shape_;
  std::vector<Node> nodes_;  // insertion order
  std::map<std::string, std::size_t> index_;
  std::vector<std::string> order_;
  std::string output_ = kInputNode;
};

using ModelGraph = BasicModelGraph<float>;

extern template class BasicModelGraph<float>;
extern template class BasicModelGraph<double>;

}  // namespace detcnn
