// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include "hwnas/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

namespace hwnas::ad {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_str(shape_) + " needs " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  }
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

const char* op_code_name(OpCode op) {
  switch (op) {
    case OpCode::kLeaf: return "leaf";
    case OpCode::kMatmul: return "matmul";
    case OpCode::kAddBias: return "add_bias";
    case OpCode::kAdd: return "add";
    case OpCode::kSub: return "sub";
    case OpCode::kMul: return "mul";
    case OpCode::kScale: return "scale";
    case OpCode::kAddScalar: return "add_scalar";
    case OpCode::kRelu: return "relu";
    case OpCode::kTanh: return "tanh";
    case OpCode::kExp: return "exp";
    case OpCode::kLog: return "log";
    case OpCode::kAbs: return "abs";
    case OpCode::kSquare: return "square";
    case OpCode::kMinimum: return "minimum";
    case OpCode::kClamp: return "clamp";
    case OpCode::kSum: return "sum";
    case OpCode::kMean: return "mean";
    case OpCode::kRowSum: return "row_sum";
    case OpCode::kLogSoftmax: return "log_softmax";
    case OpCode::kSoftmax: return "softmax";
    case OpCode::kPick: return "pick";
    case OpCode::kReshape: return "reshape";
    case OpCode::kConv2d: return "conv2d";
    case OpCode::kAvgPool3x3: return "avg_pool3x3";
    case OpCode::kGlobalAvgPool: return "global_avg_pool";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Graph plumbing

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) {
    throw std::out_of_range("Var " + std::to_string(v.id) +
                            " does not belong to this graph");
  }
  return nodes_[v.id];
}

const Tensor& Graph::val(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.value;
}

const Tensor& Graph::value(Var v) const {
  node(v);
  return val(v.id);
}

const Tensor& Graph::grad(Var v) const {
  node(v);
  if (v.id >= grads_.size()) {
    throw std::logic_error("grad() requested before backward()");
  }
  return grads_[v.id];
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::shape_fail(OpCode op, const std::string& detail) const {
  throw ShapeError(std::string("shape mismatch at node ") +
                   std::to_string(nodes_.size()) + " (" + op_code_name(op) +
                   "): " + detail);
}

void Graph::require_same_shape(OpCode op, Var a, Var b) const {
  const Shape& sa = value(a).shape();
  const Shape& sb = value(b).shape();
  if (sa != sb) shape_fail(op, shape_str(sa) + " vs " + shape_str(sb));
}

Graph::Node Graph::unary(OpCode op, Var a) const {
  Node n;
  n.op = op;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  return n;
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Graph::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  return push(std::move(n));
}

Var Graph::parameter(const Tensor& value, bool track) {
  Node n;
  n.borrowed = &value;
  n.needs_grad = track;
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Forward builders

Var Graph::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  if (ta.rank() != 2 || tb.rank() != 2 || ta.dim(1) != tb.dim(0)) {
    shape_fail(OpCode::kMatmul,
               shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
  }
  const std::size_t n = ta.dim(0), k = ta.dim(1), m = tb.dim(1);
  Node out;
  out.op = OpCode::kMatmul;
  out.a = a.id;
  out.b = b.id;
  out.needs_grad = node(a).needs_grad || node(b).needs_grad;
  out.value = Tensor({n, m});
  double* o = out.value.ptr();
  const double* pa = ta.ptr();
  const double* pb = tb.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = o + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
  return push(std::move(out));
}

Var Graph::add_bias(Var x, Var bias) {
  const Tensor& tx = value(x);
  const Tensor& tb = value(bias);
  if (tx.rank() != 2 || tb.rank() != 1 || tb.dim(0) != tx.dim(1)) {
    shape_fail(OpCode::kAddBias,
               shape_str(tx.shape()) + " + " + shape_str(tb.shape()));
  }
  Node out;
  out.op = OpCode::kAddBias;
  out.a = x.id;
  out.b = bias.id;
  out.needs_grad = node(x).needs_grad || node(bias).needs_grad;
  out.value = tx;
  const std::size_t n = tx.dim(0), m = tx.dim(1);
  double* o = out.value.ptr();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) o[i * m + j] += tb[j];
  }
  return push(std::move(out));
}

namespace {

template <typename F>
Tensor map1(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

Var Graph::add(Var a, Var b) {
  require_same_shape(OpCode::kAdd, a, b);
  Node n = unary(OpCode::kAdd, a);
  n.b = b.id;
  n.needs_grad = n.needs_grad || node(b).needs_grad;
  n.value = map2(value(a), value(b), [](double x, double y) { return x + y; });
  return push(std::move(n));
}

Var Graph::sub(Var a, Var b) {
  require_same_shape(OpCode::kSub, a, b);
  Node n = unary(OpCode::kSub, a);
  n.b = b.id;
  n.needs_grad = n.needs_grad || node(b).needs_grad;
  n.value = map2(value(a), value(b), [](double x, double y) { return x - y; });
  return push(std::move(n));
}

Var Graph::mul(Var a, Var b) {
  require_same_shape(OpCode::kMul, a, b);
  Node n = unary(OpCode::kMul, a);
  n.b = b.id;
  n.needs_grad = n.needs_grad || node(b).needs_grad;
  n.value = map2(value(a), value(b), [](double x, double y) { return x * y; });
  return push(std::move(n));
}

Var Graph::minimum(Var a, Var b) {
  require_same_shape(OpCode::kMinimum, a, b);
  Node n = unary(OpCode::kMinimum, a);
  n.b = b.id;
  n.needs_grad = n.needs_grad || node(b).needs_grad;
  n.value = map2(value(a), value(b),
                 [](double x, double y) { return y < x ? y : x; });
  return push(std::move(n));
}

Var Graph::scale(Var a, double s) {
  Node n = unary(OpCode::kScale, a);
  n.p0 = s;
  n.value = map1(value(a), [s](double x) { return x * s; });
  return push(std::move(n));
}

Var Graph::add_scalar(Var a, double s) {
  Node n = unary(OpCode::kAddScalar, a);
  n.p0 = s;
  n.value = map1(value(a), [s](double x) { return x + s; });
  return push(std::move(n));
}

Var Graph::relu(Var a) {
  Node n = unary(OpCode::kRelu, a);
  n.value = map1(value(a), [](double x) { return x > 0.0 ? x : 0.0; });
  return push(std::move(n));
}

Var Graph::tanh(Var a) {
  Node n = unary(OpCode::kTanh, a);
  n.value = map1(value(a), [](double x) { return std::tanh(x); });
  return push(std::move(n));
}

Var Graph::exp(Var a) {
  Node n = unary(OpCode::kExp, a);
  n.value = map1(value(a), [](double x) { return std::exp(x); });
  return push(std::move(n));
}

Var Graph::log(Var a) {
  Node n = unary(OpCode::kLog, a);
  n.value = map1(value(a), [](double x) { return std::log(x); });
  return push(std::move(n));
}

Var Graph::abs(Var a) {
  Node n = unary(OpCode::kAbs, a);
  n.value = map1(value(a), [](double x) { return std::fabs(x); });
  return push(std::move(n));
}

Var Graph::square(Var a) {
  Node n = unary(OpCode::kSquare, a);
  n.value = map1(value(a), [](double x) { return x * x; });
  return push(std::move(n));
}

Var Graph::clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  Node n = unary(OpCode::kClamp, a);
  n.p0 = lo;
  n.p1 = hi;
  n.value = map1(value(a), [lo, hi](double x) { return std::clamp(x, lo, hi); });
  return push(std::move(n));
}

Var Graph::sum(Var a) {
  Node n = unary(OpCode::kSum, a);
  double s = 0.0;
  for (double x : value(a).data()) s += x;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Var Graph::mean(Var a) {
  const Tensor& t = value(a);
  if (t.size() == 0) shape_fail(OpCode::kMean, "empty tensor");
  Node n = unary(OpCode::kMean, a);
  double s = 0.0;
  for (double x : t.data()) s += x;
  n.value = Tensor::scalar(s / static_cast<double>(t.size()));
  return push(std::move(n));
}

Var Graph::row_sum(Var a) {
  const Tensor& t = value(a);
  if (t.rank() != 2) shape_fail(OpCode::kRowSum, shape_str(t.shape()));
  Node n = unary(OpCode::kRowSum, a);
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  n.value = Tensor({rows});
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += t[i * cols + j];
    n.value[i] = s;
  }
  return push(std::move(n));
}

namespace {

void log_softmax_rows(const Tensor& in, Tensor& out) {
  const std::size_t rows = in.dim(0), cols = in.dim(1);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* x = in.ptr() + i * cols;
    double* y = out.ptr() + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(x[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
  }
}

}  // namespace

Var Graph::log_softmax(Var logits) {
  const Tensor& t = value(logits);
  if (t.rank() != 2 || t.dim(1) == 0) {
    shape_fail(OpCode::kLogSoftmax, shape_str(t.shape()));
  }
  Node n = unary(OpCode::kLogSoftmax, logits);
  n.value = Tensor(t.shape());
  log_softmax_rows(t, n.value);
  return push(std::move(n));
}

Var Graph::softmax(Var logits) {
  const Tensor& t = value(logits);
  if (t.rank() != 2 || t.dim(1) == 0) {
    shape_fail(OpCode::kSoftmax, shape_str(t.shape()));
  }
  Node n = unary(OpCode::kSoftmax, logits);
  n.value = Tensor(t.shape());
  log_softmax_rows(t, n.value);
  for (double& y : n.value.data()) y = std::exp(y);
  return push(std::move(n));
}

Var Graph::pick(Var x, std::vector<std::size_t> index) {
  const Tensor& t = value(x);
  if (t.rank() != 2 || index.size() != t.dim(0)) {
    shape_fail(OpCode::kPick, shape_str(t.shape()) + " with " +
                                  std::to_string(index.size()) + " indices");
  }
  const std::size_t cols = t.dim(1);
  Node n = unary(OpCode::kPick, x);
  n.value = Tensor({index.size()});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= cols) {
      shape_fail(OpCode::kPick, "index " + std::to_string(index[i]) +
                                    " out of range for " +
                                    shape_str(t.shape()));
    }
    n.value[i] = t[i * cols + index[i]];
  }
  n.index = std::move(index);
  return push(std::move(n));
}

Var Graph::reshape(Var a, Shape shape) {
  const Tensor& t = value(a);
  if (shape_numel(shape) != t.size()) {
    shape_fail(OpCode::kReshape,
               shape_str(t.shape()) + " -> " + shape_str(shape));
  }
  Node n = unary(OpCode::kReshape, a);
  n.value = Tensor(std::move(shape), std::vector<double>(t.data().begin(),
                                                         t.data().end()));
  return push(std::move(n));
}

namespace {

struct ConvDims {
  std::size_t n, c, h, w, o, k;
};

// out[n,o,y,x] += sum_c,ky,kx w[o,c,ky,kx] * in[n,c,y+ky-p,x+kx-p]
void conv_forward(const ConvDims& d, const double* in, const double* w,
                  double* out) {
  const long pad = static_cast<long>(d.k / 2);
  const long H = static_cast<long>(d.h), W = static_cast<long>(d.w);
  const std::size_t plane = d.h * d.w;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < d.o; ++o) {
      double* op = out + (n * d.o + o) * plane;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* ip = in + (n * d.c + c) * plane;
        const double* wp = w + (o * d.c + c) * d.k * d.k;
        for (long ky = 0; ky < static_cast<long>(d.k); ++ky) {
          const long dy = ky - pad;
          const long y0 = std::max(0L, -dy), y1 = std::min(H, H - dy);
          for (long kx = 0; kx < static_cast<long>(d.k); ++kx) {
            const double wv = wp[ky * static_cast<long>(d.k) + kx];
            if (wv == 0.0) continue;
            const long dx = kx - pad;
            const long x0 = std::max(0L, -dx), x1 = std::min(W, W - dx);
            for (long y = y0; y < y1; ++y) {
              double* orow = op + y * W;
              const double* irow = ip + (y + dy) * W + dx;
              for (long x = x0; x < x1; ++x) orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }
}

void conv_backward(const ConvDims& d, const double* in, const double* w,
                   const double* gout, double* gin, double* gw) {
  const long pad = static_cast<long>(d.k / 2);
  const long H = static_cast<long>(d.h), W = static_cast<long>(d.w);
  const std::size_t plane = d.h * d.w;
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t o = 0; o < d.o; ++o) {
      const double* gp = gout + (n * d.o + o) * plane;
      for (std::size_t c = 0; c < d.c; ++c) {
        const double* ip = in + (n * d.c + c) * plane;
        double* gip = gin ? gin + (n * d.c + c) * plane : nullptr;
        const std::size_t widx = (o * d.c + c) * d.k * d.k;
        for (long ky = 0; ky < static_cast<long>(d.k); ++ky) {
          const long dy = ky - pad;
          const long y0 = std::max(0L, -dy), y1 = std::min(H, H - dy);
          for (long kx = 0; kx < static_cast<long>(d.k); ++kx) {
            const long dx = kx - pad;
            const long x0 = std::max(0L, -dx), x1 = std::min(W, W - dx);
            const std::size_t wi = widx + ky * static_cast<long>(d.k) + kx;
            const double wv = w[wi];
            double acc = 0.0;
            for (long y = y0; y < y1; ++y) {
              const double* grow = gp + y * W;
              const double* irow = ip + (y + dy) * W + dx;
              if (gw) {
                for (long x = x0; x < x1; ++x) acc += grow[x] * irow[x];
              }
              if (gip) {
                double* girow = gip + (y + dy) * W + dx;
                for (long x = x0; x < x1; ++x) girow[x] += wv * grow[x];
              }
            }
            if (gw) gw[wi] += acc;
          }
        }
      }
    }
  }
}

// Number of in-bounds taps of a 3x3 window centered at (y, x).
inline double pool_count(long y, long x, long H, long W) {
  const long ny = std::min(y + 1, H - 1) - std::max(y - 1, 0L) + 1;
  const long nx = std::min(x + 1, W - 1) - std::max(x - 1, 0L) + 1;
  return static_cast<double>(ny * nx);
}

}  // namespace

Var Graph::conv2d(Var x, Var w) {
  const Tensor& tx = value(x);
  const Tensor& tw = value(w);
  if (tx.rank() != 4 || tw.rank() != 4 || tw.dim(1) != tx.dim(1) ||
      tw.dim(2) != tw.dim(3) || tw.dim(2) % 2 == 0) {
    shape_fail(OpCode::kConv2d,
               "input " + shape_str(tx.shape()) + " kernel " +
                   shape_str(tw.shape()));
  }
  const ConvDims d{tx.dim(0), tx.dim(1), tx.dim(2), tx.dim(3), tw.dim(0),
                   tw.dim(2)};
  Node n;
  n.op = OpCode::kConv2d;
  n.a = x.id;
  n.b = w.id;
  n.needs_grad = node(x).needs_grad || node(w).needs_grad;
  n.value = Tensor({d.n, d.o, d.h, d.w});
  conv_forward(d, tx.ptr(), tw.ptr(), n.value.ptr());
  return push(std::move(n));
}

Var Graph::avg_pool3x3(Var x) {
  const Tensor& tx = value(x);
  if (tx.rank() != 4) shape_fail(OpCode::kAvgPool3x3, shape_str(tx.shape()));
  const long H = static_cast<long>(tx.dim(2)), W = static_cast<long>(tx.dim(3));
  const std::size_t planes = tx.dim(0) * tx.dim(1);
  Node n = unary(OpCode::kAvgPool3x3, x);
  n.value = Tensor(tx.shape());
  for (std::size_t p = 0; p < planes; ++p) {
    const double* ip = tx.ptr() + p * H * W;
    double* op = n.value.ptr() + p * H * W;
    for (long y = 0; y < H; ++y) {
      for (long xx = 0; xx < W; ++xx) {
        double s = 0.0;
        for (long yy = std::max(y - 1, 0L); yy <= std::min(y + 1, H - 1); ++yy) {
          for (long xk = std::max(xx - 1, 0L); xk <= std::min(xx + 1, W - 1);
               ++xk) {
            s += ip[yy * W + xk];
          }
        }
        op[y * W + xx] = s / pool_count(y, xx, H, W);
      }
    }
  }
  return push(std::move(n));
}

Var Graph::global_avg_pool(Var x) {
  const Tensor& tx = value(x);
  if (tx.rank() != 4 || tx.dim(2) * tx.dim(3) == 0) {
    shape_fail(OpCode::kGlobalAvgPool, shape_str(tx.shape()));
  }
  const std::size_t planes = tx.dim(0) * tx.dim(1);
  const std::size_t hw = tx.dim(2) * tx.dim(3);
  Node n = unary(OpCode::kGlobalAvgPool, x);
  n.value = Tensor({tx.dim(0), tx.dim(1)});
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += tx[p * hw + i];
    n.value[p] = s / static_cast<double>(hw);
  }
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Backward

void Graph::backward(Var output) {
  const Tensor& out = value(output);
  if (out.size() != 1) {
    throw ShapeError("backward() without seed needs a single-element output, "
                     "got " + shape_str(out.shape()));
  }
  backward(output, Tensor(out.shape(), 1.0));
}

void Graph::backward(Var output, const Tensor& seed) {
  const Tensor& out = value(output);
  if (seed.shape() != out.shape()) {
    throw ShapeError("backward seed shape " + shape_str(seed.shape()) +
                     " does not match output shape " + shape_str(out.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].needs_grad) grads_[i] = Tensor(val(i).shape());
  }
  if (!nodes_[output.id].needs_grad) return;
  grads_[output.id] = seed;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    if (!nodes_[id].needs_grad || nodes_[id].op == OpCode::kLeaf) continue;
    backprop_node(id);
  }
}

void Graph::backprop_node(std::size_t id) {
  const Node& n = nodes_[id];
  const Tensor& g = grads_[id];
  const Tensor& y = val(id);
  const bool ga_on = nodes_[n.a].needs_grad;
  const bool gb_on = nodes_[n.b].needs_grad;
  Tensor* ga = ga_on ? &grads_[n.a] : nullptr;
  Tensor* gb = gb_on ? &grads_[n.b] : nullptr;
  const Tensor& a = val(n.a);

  switch (n.op) {
    case OpCode::kLeaf:
      break;
    case OpCode::kMatmul: {
      const Tensor& b = val(n.b);
      const std::size_t rows = a.dim(0), k = a.dim(1), m = b.dim(1);
      if (ga) {
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = g.ptr() + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b.ptr() + p * m;
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += grow[j] * brow[j];
            (*ga)[i * k + p] += s;
          }
        }
      }
      if (gb) {
        for (std::size_t i = 0; i < rows; ++i) {
          const double* grow = g.ptr() + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* gbrow = gb->ptr() + p * m;
            for (std::size_t j = 0; j < m; ++j) gbrow[j] += av * grow[j];
          }
        }
      }
      break;
    }
    case OpCode::kAddBias: {
      const std::size_t rows = g.dim(0), m = g.dim(1);
      if (ga) {
        for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      }
      if (gb) {
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < m; ++j) (*gb)[j] += g[i * m + j];
        }
      }
      break;
    }
    case OpCode::kAdd:
      if (ga) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (gb) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i];
      break;
    case OpCode::kSub:
      if (ga) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      if (gb) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
      break;
    case OpCode::kMul: {
      const Tensor& b = val(n.b);
      if (ga) for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b[i];
      if (gb) for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a[i];
      break;
    }
    case OpCode::kMinimum: {
      const Tensor& b = val(n.b);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (b[i] < a[i]) {
          if (gb) (*gb)[i] += g[i];
        } else if (ga) {
          (*ga)[i] += g[i];
        }
      }
      break;
    }
    case OpCode::kScale:
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * n.p0;
      break;
    case OpCode::kAddScalar:
    case OpCode::kReshape:
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
      break;
    case OpCode::kRelu:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] > 0.0) (*ga)[i] += g[i];
      }
      break;
    case OpCode::kTanh:
      for (std::size_t i = 0; i < g.size(); ++i) {
        (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
      }
      break;
    case OpCode::kExp:
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
      break;
    case OpCode::kLog:
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / a[i];
      break;
    case OpCode::kAbs:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] > 0.0) {
          (*ga)[i] += g[i];
        } else if (a[i] < 0.0) {
          (*ga)[i] -= g[i];
        }
      }
      break;
    case OpCode::kSquare:
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += 2.0 * a[i] * g[i];
      break;
    case OpCode::kClamp:
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a[i] >= n.p0 && a[i] <= n.p1) (*ga)[i] += g[i];
      }
      break;
    case OpCode::kSum:
      for (std::size_t i = 0; i < a.size(); ++i) (*ga)[i] += g[0];
      break;
    case OpCode::kMean: {
      const double s = g[0] / static_cast<double>(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) (*ga)[i] += s;
      break;
    }
    case OpCode::kRowSum: {
      const std::size_t rows = a.dim(0), cols = a.dim(1);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) (*ga)[i * cols + j] += g[i];
      }
      break;
    }
    case OpCode::kLogSoftmax: {
      // dx_j = g_j - softmax_j * sum_k g_k
      const std::size_t rows = a.dim(0), cols = a.dim(1);
      for (std::size_t i = 0; i < rows; ++i) {
        double gs = 0.0;
        for (std::size_t j = 0; j < cols; ++j) gs += g[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t q = i * cols + j;
          (*ga)[q] += g[q] - std::exp(y[q]) * gs;
        }
      }
      break;
    }
    case OpCode::kSoftmax: {
      // dx_j = y_j * (g_j - sum_k g_k y_k)
      const std::size_t rows = a.dim(0), cols = a.dim(1);
      for (std::size_t i = 0; i < rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          dot += g[i * cols + j] * y[i * cols + j];
        }
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t q = i * cols + j;
          (*ga)[q] += y[q] * (g[q] - dot);
        }
      }
      break;
    }
    case OpCode::kPick: {
      const std::size_t cols = a.dim(1);
      for (std::size_t i = 0; i < n.index.size(); ++i) {
        (*ga)[i * cols + n.index[i]] += g[i];
      }
      break;
    }
    case OpCode::kConv2d: {
      const Tensor& w = val(n.b);
      const ConvDims d{a.dim(0), a.dim(1), a.dim(2), a.dim(3), w.dim(0),
                       w.dim(2)};
      conv_backward(d, a.ptr(), w.ptr(), g.ptr(), ga ? ga->ptr() : nullptr,
                    gb ? gb->ptr() : nullptr);
      break;
    }
    case OpCode::kAvgPool3x3: {
      const long H = static_cast<long>(a.dim(2)), W = static_cast<long>(a.dim(3));
      const std::size_t planes = a.dim(0) * a.dim(1);
      for (std::size_t p = 0; p < planes; ++p) {
        const double* gp = g.ptr() + p * H * W;
        double* gap = ga->ptr() + p * H * W;
        for (long yy = 0; yy < H; ++yy) {
          for (long xx = 0; xx < W; ++xx) {
            const double share = gp[yy * W + xx] / pool_count(yy, xx, H, W);
            for (long sy = std::max(yy - 1, 0L); sy <= std::min(yy + 1, H - 1);
                 ++sy) {
              for (long sx = std::max(xx - 1, 0L);
                   sx <= std::min(xx + 1, W - 1); ++sx) {
                gap[sy * W + sx] += share;
              }
            }
          }
        }
      }
      break;
    }
    case OpCode::kGlobalAvgPool: {
      const std::size_t planes = a.dim(0) * a.dim(1);
      const std::size_t hw = a.dim(2) * a.dim(3);
      for (std::size_t p = 0; p < planes; ++p) {
        const double s = g[p] / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) (*ga)[p * hw + i] += s;
      }
      break;
    }
  }
}

// ---------------------------------------------------------------------------
// Parameters and Adam

Tensor& ParameterSet::add(std::string name, Tensor value) {
  for (const auto& p : params_) {
    if (p.name == name) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
  }
  params_.push_back({std::move(name), std::move(value)});
  return params_.back().value;
}

Tensor& ParameterSet::get(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw std::out_of_range("no parameter named " + name);
}

const Tensor& ParameterSet::get(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->get(name);
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Adam::step(ParameterSet& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size()) {
    throw ShapeError("adam: " + std::to_string(grads.size()) +
                     " gradients for " + std::to_string(params.size()) +
                     " parameters");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() ||
        m_[i].shape() != params[i].value.shape()) {
      throw ShapeError("adam: shape mismatch for parameter " +
                       params[i].name + ": param " +
                       shape_str(params[i].value.shape()) + ", grad " +
                       shape_str(grads[i].shape()));
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].value;
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::restore(std::int64_t step, std::vector<Tensor> m,
                   std::vector<Tensor> v) {
  if (m.size() != v.size()) throw ShapeError("adam restore: moment count");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace hwnas::ad
