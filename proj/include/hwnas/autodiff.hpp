// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef HWNAS_AUTODIFF_HPP_
#define HWNAS_AUTODIFF_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hwnas::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major tensor of doubles. The shape is fixed at construction.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;

  void fill(double v);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::uint32_t id = 0;
};

enum class OpCode : std::uint8_t {
  kLeaf,
  kMatmul,
  kAddBias,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kRelu,
  kTanh,
  kExp,
  kLog,
  kAbs,
  kSquare,
  kMinimum,
  kClamp,
  kSum,
  kMean,
  kRowSum,
  kLogSoftmax,
  kSoftmax,
  kPick,
  kReshape,
  kConv2d,
  kAvgPool3x3,
  kGlobalAvgPool,
};

const char* op_code_name(OpCode op);

// Eagerly evaluated reverse-mode tape. Every builder method computes its
// value immediately; backward() walks the tape in reverse creation order,
// which is a valid reverse topological order.
//
// Shape rules are strict: no broadcasting except add_bias.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  // Untracked input; no gradient is accumulated for it.
  Var constant(Tensor value);
  // Tracked leaf owning its value.
  Var variable(Tensor value);
  // Tracked leaf borrowing `value`, which must outlive the graph. Passing
  // track=false borrows without gradient tracking.
  Var parameter(const Tensor& value, bool track = true);

  // a [n,k] x b [k,m] -> [n,m]
  Var matmul(Var a, Var b);
  // x [n,m] + bias [m] (broadcast over rows)
  Var add_bias(Var x, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  // Subgradient at 0 is 0.
  Var relu(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  // Subgradient at 0 is 0.
  Var abs(Var a);
  Var square(Var a);
  // Elementwise min; on ties the gradient goes to `a`.
  Var minimum(Var a, Var b);
  // Gradient is zero where the input lies outside [lo, hi].
  Var clamp(Var a, double lo, double hi);
  // Reductions to a [1] tensor.
  Var sum(Var a);
  Var mean(Var a);
  // [n,k] -> [n]
  Var row_sum(Var a);
  // Row-wise over [n,k].
  Var log_softmax(Var logits);
  Var softmax(Var logits);
  // x [n,k], index per row -> [n]
  Var pick(Var x, std::vector<std::size_t> index);
  Var reshape(Var a, Shape shape);
  // x [N,C,H,W], w [O,C,k,k] with odd k; stride 1, zero "same" padding.
  Var conv2d(Var x, Var w);
  // 3x3, stride 1, pad 1, padding excluded from the average.
  Var avg_pool3x3(Var x);
  // [N,C,H,W] -> [N,C]
  Var global_avg_pool(Var x);

  const Tensor& value(Var v) const;
  // Gradient accumulated by the last backward() call. Zero-filled for
  // tracked nodes that the output does not depend on.
  const Tensor& grad(Var v) const;
  bool tracked(Var v) const { return node(v).needs_grad; }
  OpCode op(Var v) const { return node(v).op; }

  void backward(Var output, const Tensor& seed);
  // Seeds a single-element output with 1.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    OpCode op = OpCode::kLeaf;
    bool needs_grad = false;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double p0 = 0.0;
    double p1 = 0.0;
    Tensor value;
    const Tensor* borrowed = nullptr;
    std::vector<std::size_t> index;
  };

  const Node& node(Var v) const;
  const Tensor& val(std::uint32_t id) const;
  Var push(Node n);
  Node unary(OpCode op, Var a) const;
  void require_same_shape(OpCode op, Var a, Var b) const;
  [[noreturn]] void shape_fail(OpCode op, const std::string& detail) const;
  void backprop_node(std::size_t id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Ordered collection of named parameters owned by a model.
class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor value);
  std::size_t size() const { return params_.size(); }
  NamedTensor& operator[](std::size_t i) { return params_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return params_[i]; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  std::size_t num_scalars() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<NamedTensor> params_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam. Moment buffers are created lazily on the first step
// and must shape-match their parameters afterwards.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParameterSet& params, std::span<const Tensor> grads);

  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  std::int64_t steps() const { return step_; }

  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }
  void restore(std::int64_t step, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace hwnas::ad

#endif  // HWNAS_AUTODIFF_HPP_
