#pragma once

// Reverse-mode automatic differentiation over dense double tensors.
//
// A Graph is a tape: every op appends a node whose inputs already exist, so
// node order is a topological order and backward() simply walks it in reverse.
// Parameters live outside the graph (in a ParameterStore) and receive
// accumulated gradients when a graph that references them is differentiated.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ncsc/tensor.hpp"

namespace ncsc::ad {

enum class OpKind {
  Leaf,
  MatMul,
  Add,
  Subtract,
  Multiply,
  Relu,
  SoftmaxRows,
  L2NormalizeRows,
  Conv2d,
  ConvTranspose2d,
  Reshape,
  Sum,
  Mean,
  FrobeniusNormSquared,
  Log,
  ScalarMultiply,
  Transpose,
  Abs,
};

std::string_view to_string(OpKind kind);
std::optional<OpKind> op_kind_from_string(std::string_view name);

// Floor on the row norm used by l2-normalize-rows, so zero rows map to zero.
inline constexpr double kNormGuard = 1e-12;

struct OpAttrs {
  double scalar = 1.0;        // ScalarMultiply factor
  double log_floor = 0.0;     // Log: log(max(x, floor)); 0 means inputs must be positive
  std::size_t stride = 1;     // convolutions
  std::size_t padding = 0;
  std::size_t output_padding = 0;  // ConvTranspose2d only
  Shape shape;                // Reshape target
};

class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool requires_grad = true);

  const std::string& name() const { return name_; }
  Tensor& value() { return value_; }
  const Tensor& value() const { return value_; }
  Tensor& grad() { return grad_; }
  const Tensor& grad() const { return grad_; }
  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }
  void zero_grad() { grad_.fill(0.0); }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
  bool requires_grad_;
};

// Owns parameters with stable addresses, in insertion order.
class ParameterStore {
 public:
  Parameter& add(std::string name, Tensor value, bool requires_grad = true);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool remove(std::string_view name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::vector<Parameter*> with_prefix(std::string_view prefix);
  std::size_t size() const { return params_.size(); }
  void zero_grad();

 private:
  std::deque<Parameter> params_;
};

class Graph;

// Handle to a node in a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // A leaf whose gradient is kept on the node (useful for checking input gradients).
  Var input(Tensor value, bool requires_grad);
  Var parameter(Parameter& p);

  // Generic op entry point; validates shapes and records the node.
  Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

  // Accumulates dLoss/dParam into every referenced parameter's grad.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  OpKind kind(Var v) const;
  std::span<const std::size_t> inputs_of(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  // Order in which the last backward() call visited nodes.
  const std::vector<std::size_t>& last_backward_order() const { return backward_order_; }

 private:
  struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    OpAttrs attrs;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  Var push(Node node);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
};

// Forward computation of one op on plain tensors.
Tensor forward_op(OpKind kind, std::span<const Tensor* const> inputs, const OpAttrs& attrs = {});

// Convolution geometry: floor((size + 2 * padding - kernel) / stride) + 1.
std::size_t conv_output_size(std::size_t size, std::size_t kernel, std::size_t stride,
                             std::size_t padding);
// Transposed convolution: (size - 1) * stride - 2 * padding + kernel + output_padding.
std::size_t conv_transpose_output_size(std::size_t size, std::size_t kernel, std::size_t stride,
                                       std::size_t padding, std::size_t output_padding);

// Builders.
Var matmul(Var a, Var b);
Var add(Var a, Var b);  // b may be a row vector [m] / [1, m] broadcast over a [n, m]
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
Var relu(Var x);
Var softmax_rows(Var x);
Var l2_normalize_rows(Var x);
// x [N, Cin, H, W], weight [Cout, Cin, k, k], optional bias [Cout]
Var conv2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride, std::size_t padding);
// x [N, Cin, H, W], weight [Cin, Cout, k, k], optional bias [Cout]
Var conv_transpose2d(Var x, Var weight, std::optional<Var> bias, std::size_t stride,
                     std::size_t padding, std::size_t output_padding);
Var reshape(Var x, Shape shape);
Var sum(Var x);
Var mean(Var x);
Var frobenius_norm_squared(Var x);
Var log(Var x, double floor = 0.0);
Var scale(Var x, double factor);
Var transpose(Var x);
Var abs(Var x);

// Builds a scalar loss in a fresh graph.
using LossBuilder = std::function<Var(Graph&)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
// for the gradient of the built loss with respect to `param`.
double grad_check(const LossBuilder& build, Parameter& param, double eps = 1e-5);

}  // namespace ncsc::ad
