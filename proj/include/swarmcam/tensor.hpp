#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace swarmcam::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. Plain value type; graph membership is
/// carried by `Var`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Throws ShapeError when `data.size()` disagrees with `shape`.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor({1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Element at a multi-index (bounds checked).
  double at(std::initializer_list<std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);

  /// Value of a single-element tensor.
  double item() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t offset(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<double> data_;
};

using NodeId = std::size_t;

enum class OpKind {
  Leaf,
  Conv2d,
  MaxPool2d,
  Dense,
  Relu,
  Sigmoid,
  Reshape,
  BceLoss,
  Sum,
  Scale,
  Add,
  Mul,
};

class Graph;
class GradStore;

/// Handle to a tensor recorded on a graph.
class Var {
 public:
  Var(Graph& graph, NodeId id) : graph_(&graph), id_(id) {}

  Graph& graph() const noexcept { return *graph_; }
  NodeId id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_;
  NodeId id_;
};

/// Gradients keyed by node id. Only nodes that require grad are populated.
class GradStore {
 public:
  explicit GradStore(std::size_t node_count) : grads_(node_count) {}

  bool has(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
  /// Throws ContractError when the node does not track gradients.
  const Tensor& at(NodeId id) const;
  const Tensor& at(const Var& v) const { return at(v.id()); }

  /// Accumulation buffer for `id`, zero-initialized on first use.
  Tensor& slot(NodeId id, const Shape& shape);

 private:
  std::vector<std::optional<Tensor>> grads_;
};

/// Define-by-run record of operations. Nodes are appended in execution
/// order so the record is acyclic and topologically sorted by construction.
class Graph {
 public:
  using BackwardFn = std::function<void(const Graph&, NodeId self, const Tensor& grad_out, GradStore&)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  OpKind kind(NodeId id) const { return nodes_.at(id).kind; }
  std::span<const NodeId> inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  /// Per-output-cell argmax (flat input offsets) of a MaxPool2d node.
  std::span<const std::size_t> argmax(NodeId id) const;

  /// Reverse sweep from a single-element output. Every node that requires
  /// grad and lies on a path to `output` gets an entry.
  GradStore backward(const Var& output) const;

  /// Appends an op node. `requires_grad` is inherited from the inputs.
  Var record(OpKind kind, std::vector<NodeId> inputs, Tensor value, BackwardFn backward,
             std::vector<std::size_t> index_aux = {});

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    bool requires_grad;
    BackwardFn backward;
    std::vector<std::size_t> index_aux;
  };
  std::vector<Node> nodes_;
};

/// input [C_in,H,W], weight [C_out,C_in,kH,kW], bias [C_out] -> [C_out,H',W'].
Var conv2d(const Var& input, const Var& weight, const Var& bias, std::size_t stride = 1,
           std::size_t pad = 0);
/// Non-overlapping max pooling (kernel == stride). Ties keep the first
/// element in row-major window order.
Var maxpool2d(const Var& input, std::size_t kernel = 2);
/// input [n], weight [m,n], bias [m] -> [m].
Var dense(const Var& input, const Var& weight, const Var& bias);
Var relu(const Var& input);
Var sigmoid(const Var& input);
Var reshape(const Var& input, Shape shape);
inline Var flatten(const Var& input) { return reshape(input, {input.value().size()}); }

inline constexpr double kBceClamp = 1e-7;
/// Binary cross entropy of a one-element probability against label 0/1.
Var bce_loss(const Var& prob, int label);
Var sum(const Var& input);
Var scale(const Var& input, double factor);
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

/// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2 eps) per coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& point,
                        double eps);

}  // namespace swarmcam::ad
