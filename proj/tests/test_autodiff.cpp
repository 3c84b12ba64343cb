// Copyright 2026 The hwnas Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"

#include "hwnas/autodiff.hpp"

using namespace hwnas;
using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr double kStep = 1e-3;
constexpr double kRelTol = 1e-4;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Keeps |x| >= gap so kinked ops are differentiable within one step.
Tensor away_from_zero(Shape shape, std::mt19937_64& rng, double gap = 0.1) {
  Tensor t = random_tensor(std::move(shape), rng);
  for (auto& v : t.data()) v = v < 0 ? v - gap : v + gap;
  return t;
}

using Builder = std::function<Var(Graph&, const std::vector<Var>&)>;

// Scalarizes through a fixed random projection so every output coordinate
// carries a distinct seed.
double evaluate(const Builder& build, const std::vector<Tensor>& inputs,
                const Tensor& projection) {
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  const Var out = build(g, vars);
  const Var flat = g.reshape(out, {g.value(out).size()});
  return g.value(g.sum(g.mul(flat, g.constant(projection)))).item();
}

// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6) per input.
double gradient_error(const Builder& build, const std::vector<Tensor>& inputs,
                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.variable(t));
  const Var out = build(g, vars);
  const Tensor projection = random_tensor({g.value(out).size()}, rng);
  const Var flat = g.reshape(out, {g.value(out).size()});
  g.backward(g.sum(g.mul(flat, g.constant(projection))));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<Tensor> probe = inputs;
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t j = 0; j < inputs[k].size(); ++j) {
      probe[k][j] = inputs[k][j] + kStep;
      const double up = evaluate(build, probe, projection);
      probe[k][j] = inputs[k][j] - kStep;
      const double down = evaluate(build, probe, projection);
      probe[k][j] = inputs[k][j];
      const double numeric = (up - down) / (2 * kStep);
      const double analytic = g.grad(vars[k])[j];
      diff2 += (analytic - numeric) * (analytic - numeric);
      a2 += analytic * analytic;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
    worst = std::max(worst, std::sqrt(diff2) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("tensor shape invariant") {
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), ad::ShapeError);
  CHECK(ad::shape_numel({4, 1, 3}) == 12);
}

TEST_CASE("relu forward and zero subgradient") {
  Graph g;
  const Var x = g.variable(Tensor({3}, {-1.0, 0.0, 2.0}));
  const Var y = g.relu(x);
  CHECK(g.value(y) == Tensor({3}, {0.0, 0.0, 2.0}));
  g.backward(g.sum(y));
  CHECK(g.grad(x)[0] == 0.0);
  CHECK(g.grad(x)[1] == 0.0);
  CHECK(g.grad(x)[2] == 1.0);
}

TEST_CASE("conv2d counts its 3x3 window") {
  Graph g;
  const Var x = g.constant(Tensor({1, 1, 3, 3}, 1.0));
  const Var w = g.constant(Tensor({1, 1, 3, 3}, 1.0));
  const Tensor& y = g.value(g.conv2d(x, w));
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y[4] == 9.0);
  CHECK(y[0] == 4.0);
  CHECK(y[1] == 6.0);
}

TEST_CASE("avg pool keeps a constant field in the interior") {
  Graph g;
  const Var x = g.constant(Tensor({1, 2, 5, 5}, 2.5));
  const Tensor& y = g.value(g.avg_pool3x3(x));
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 1; i < 4; ++i) {
      for (std::size_t j = 1; j < 4; ++j) {
        CHECK(y[c * 25 + i * 5 + j] == doctest::Approx(2.5).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("gradient of sum(x*x)") {
  Graph g;
  const Var x = g.variable(Tensor({2}, {1.0, 2.0}));
  g.backward(g.sum(g.mul(x, x)));
  CHECK(g.grad(x)[0] == 2.0);
  CHECK(g.grad(x)[1] == 4.0);
}

TEST_CASE("shape errors name the op") {
  Graph g;
  const Var a = g.constant(Tensor({2, 3}));
  const Var b = g.constant(Tensor({2, 3}));
  try {
    g.matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ad::ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, g.constant(Tensor({3, 2}))), ad::ShapeError);
  const Var y = g.add(a, b);
  CHECK_THROWS_AS(g.backward(y, Tensor({3})), ad::ShapeError);
}

TEST_CASE("backward is repeatable on one graph") {
  Graph g;
  const Var x = g.variable(Tensor({2}, {0.5, -1.5}));
  const Var y = g.sum(g.square(x));
  g.backward(y);
  const Tensor first = g.grad(x);
  g.backward(y);
  CHECK(g.grad(x) == first);
}

TEST_CASE("finite-difference check per op") {
  struct Case {
    const char* name;
    std::function<std::vector<Tensor>(std::mt19937_64&)> inputs;
    Builder build;
  };
  const std::vector<Case> cases = {
      {"matmul", [](auto& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({4, 2}, r)}; },
       [](Graph& g, const auto& v) { return g.matmul(v[0], v[1]); }},
      {"add_bias", [](auto& r) { return std::vector{random_tensor({3, 4}, r), random_tensor({4}, r)}; },
       [](Graph& g, const auto& v) { return g.add_bias(v[0], v[1]); }},
      {"add", [](auto& r) { return std::vector{random_tensor({5}, r), random_tensor({5}, r)}; },
       [](Graph& g, const auto& v) { return g.add(v[0], v[1]); }},
      {"sub", [](auto& r) { return std::vector{random_tensor({5}, r), random_tensor({5}, r)}; },
       [](Graph& g, const auto& v) { return g.sub(v[0], v[1]); }},
      {"mul", [](auto& r) { return std::vector{random_tensor({5}, r), random_tensor({5}, r)}; },
       [](Graph& g, const auto& v) { return g.mul(v[0], v[1]); }},
      {"scale", [](auto& r) { return std::vector{random_tensor({5}, r)}; },
       [](Graph& g, const auto& v) { return g.scale(v[0], -1.7); }},
      {"add_scalar", [](auto& r) { return std::vector{random_tensor({5}, r)}; },
       [](Graph& g, const auto& v) { return g.add_scalar(v[0], 0.3); }},
      {"relu", [](auto& r) { return std::vector{away_from_zero({6}, r)}; },
       [](Graph& g, const auto& v) { return g.relu(v[0]); }},
      {"tanh", [](auto& r) { return std::vector{random_tensor({6}, r, -2, 2)}; },
       [](Graph& g, const auto& v) { return g.tanh(v[0]); }},
      {"exp", [](auto& r) { return std::vector{random_tensor({6}, r)}; },
       [](Graph& g, const auto& v) { return g.exp(v[0]); }},
      {"log", [](auto& r) { return std::vector{random_tensor({6}, r, 0.5, 3.0)}; },
       [](Graph& g, const auto& v) { return g.log(v[0]); }},
      {"abs", [](auto& r) { return std::vector{away_from_zero({6}, r)}; },
       [](Graph& g, const auto& v) { return g.abs(v[0]); }},
      {"square", [](auto& r) { return std::vector{random_tensor({6}, r)}; },
       [](Graph& g, const auto& v) { return g.square(v[0]); }},
      {"minimum",
       [](auto& r) {
         Tensor a = random_tensor({6}, r);
         Tensor b = a;
         for (std::size_t i = 0; i < b.size(); ++i) b[i] += (i % 2 ? 0.5 : -0.5);
         return std::vector{a, b};
       },
       [](Graph& g, const auto& v) { return g.minimum(v[0], v[1]); }},
      {"clamp", [](auto&) { return std::vector{Tensor({4}, {0.2, 0.5, 1.5, -0.8})}; },
       [](Graph& g, const auto& v) { return g.clamp(v[0], 0.0, 1.0); }},
      {"mean", [](auto& r) { return std::vector{random_tensor({7}, r)}; },
       [](Graph& g, const auto& v) { return g.mean(v[0]); }},
      {"row_sum", [](auto& r) { return std::vector{random_tensor({3, 4}, r)}; },
       [](Graph& g, const auto& v) { return g.row_sum(v[0]); }},
      {"log_softmax", [](auto& r) { return std::vector{random_tensor({3, 5}, r, -3, 3)}; },
       [](Graph& g, const auto& v) { return g.log_softmax(v[0]); }},
      {"softmax", [](auto& r) { return std::vector{random_tensor({3, 5}, r, -3, 3)}; },
       [](Graph& g, const auto& v) { return g.softmax(v[0]); }},
      {"pick", [](auto& r) { return std::vector{random_tensor({3, 5}, r)}; },
       [](Graph& g, const auto& v) { return g.pick(v[0], {4, 0, 2}); }},
      {"conv1x1", [](auto& r) { return std::vector{random_tensor({2, 3, 4, 4}, r), random_tensor({2, 3, 1, 1}, r)}; },
       [](Graph& g, const auto& v) { return g.conv2d(v[0], v[1]); }},
      {"conv3x3", [](auto& r) { return std::vector{random_tensor({2, 2, 4, 4}, r), random_tensor({3, 2, 3, 3}, r)}; },
       [](Graph& g, const auto& v) { return g.conv2d(v[0], v[1]); }},
      {"avg_pool3x3", [](auto& r) { return std::vector{random_tensor({2, 2, 4, 4}, r)}; },
       [](Graph& g, const auto& v) { return g.avg_pool3x3(v[0]); }},
      {"global_avg_pool", [](auto& r) { return std::vector{random_tensor({2, 3, 3, 3}, r)}; },
       [](Graph& g, const auto& v) { return g.global_avg_pool(v[0]); }},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      CAPTURE(c.name);
      CAPTURE(seed);
      std::mt19937_64 rng(seed);
      CHECK(gradient_error(c.build, c.inputs(rng), seed + 100) < kRelTol);
    }
  }
}

TEST_CASE("two-layer MLP gradient matches finite differences") {
  const Builder mlp = [](Graph& g, const std::vector<Var>& v) {
    const Var h = g.tanh(g.add_bias(g.matmul(v[0], v[1]), v[2]));
    return g.add_bias(g.matmul(h, v[3]), v[4]);
  };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const std::vector<Tensor> inputs = {random_tensor({4, 6}, rng), random_tensor({6, 8}, rng),
                                        random_tensor({8}, rng), random_tensor({8, 3}, rng),
                                        random_tensor({3}, rng)};
    CHECK(gradient_error(mlp, inputs, seed) < kRelTol);
  }
}

TEST_CASE("conv-pool-relu stack gradients keep parameter shapes") {
  std::mt19937_64 rng(9);
  Graph g;
  const Var x = g.constant(random_tensor({2, 3, 5, 5}, rng));
  const Var w1 = g.variable(random_tensor({4, 3, 3, 3}, rng));
  const Var w2 = g.variable(random_tensor({4, 4, 1, 1}, rng));
  const Var h = g.relu(g.avg_pool3x3(g.conv2d(x, w1)));
  const Var y = g.sum(g.global_avg_pool(g.conv2d(h, w2)));
  g.backward(y);
  CHECK(g.grad(w1).shape() == g.value(w1).shape());
  CHECK(g.grad(w2).shape() == g.value(w2).shape());
}

TEST_CASE("evaluation is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(5);
    Graph g;
    const Var a = g.variable(random_tensor({3, 3}, rng));
    const Var y = g.sum(g.tanh(g.matmul(a, a)));
    g.backward(y);
    return std::pair{g.value(y), g.grad(a)};
  };
  CHECK(run() == run());
}

TEST_CASE("adam with zero gradient leaves params and counts the step") {
  ad::ParameterSet params;
  params.add("w", Tensor({2}, {1.0, -2.0}));
  ad::Adam adam({0.1});
  const std::vector<Tensor> grads = {Tensor({2})};
  adam.step(params, grads);
  CHECK(params.get("w") == Tensor({2}, {1.0, -2.0}));
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam first step moves by about lr") {
  ad::ParameterSet params;
  params.add("w", Tensor::scalar(0.0));
  ad::Adam adam({0.1});
  const std::vector<Tensor> grads = {Tensor::scalar(1.0)};
  adam.step(params, grads);
  CHECK(params.get("w").item() == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam minimizes x^2") {
  // Scalar reference recursion, written independently of the engine.
  double x_ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * x_ref;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    x_ref -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
  }

  ad::ParameterSet params;
  params.add("x", Tensor::scalar(1.0));
  ad::Adam adam({0.1});
  for (int t = 0; t < 100; ++t) {
    Graph g;
    const Var x = g.parameter(params.get("x"));
    g.backward(g.sum(g.square(x)));
    const std::vector<Tensor> grads = {g.grad(x)};
    adam.step(params, grads);
  }
  const double x = params.get("x").item();
  CHECK(std::abs(x) < 0.2);
  CHECK(x == doctest::Approx(x_ref).epsilon(1e-12));
  CHECK(adam.steps() == 100);
}

TEST_CASE("adam rejects mismatched gradients") {
  ad::ParameterSet params;
  params.add("w", Tensor({2}));
  ad::Adam adam;
  const std::vector<Tensor> wrong = {Tensor({3})};
  CHECK_THROWS_AS(adam.step(params, wrong), ad::ShapeError);
  const std::vector<Tensor> none;
  CHECK_THROWS_AS(adam.step(params, none), ad::ShapeError);
}
