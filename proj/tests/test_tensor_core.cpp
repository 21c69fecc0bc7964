// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "gmt/gradcheck.hpp"
#include "gmt/graph.hpp"
#include "gmt/models.hpp"
#include "gmt/rng.hpp"

#include <cmath>
#include <cstring>

using namespace gmt;

namespace {

Matrix mat(Index r, Index c, std::initializer_list<double> v) {
  Matrix m(r, c);
  std::copy(v.begin(), v.end(), m.data());
  return m;
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.flat_values()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("tensor buffers follow shape") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rows() == 6);
  CHECK(t.cols() == 4);
  CHECK(t.grad().size() == t.size());
  CHECK(Tensor({5}).rows() == 1);
  CHECK(Tensor(Shape{}).size() == 1);
  CHECK_THROWS_AS(Tensor({3, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, Matrix::Zero(3, 2)), ShapeError);
}

TEST_CASE("forward primitives") {
  Graph64 g;
  SUBCASE("matmul by identity") {
    Var a = g.constant({2, 2}, mat(2, 2, {1, 2, 3, 4}));
    Var i = g.constant({2, 2}, Matrix::Identity(2, 2));
    CHECK(matmul(a, i).value() == mat(2, 2, {1, 2, 3, 4}));
  }
  SUBCASE("relu") {
    Var x = g.constant({3}, mat(1, 3, {-1, 0, 2}));
    CHECK(relu(x).value() == mat(1, 3, {0, 0, 2}));
  }
  SUBCASE("softmax of equal logits") {
    Var x = g.constant({2}, mat(1, 2, {0, 0}));
    CHECK(softmax(x).value() == mat(1, 2, {0.5, 0.5}));
  }
  SUBCASE("causal softmax masks the future") {
    Rng rng(3);
    Var x = g.constant(random_tensor({4, 4}, rng, 3.0));
    const Matrix p = softmax(x, true).value();
    for (Index r = 0; r < 4; ++r) {
      CHECK(std::abs(p.row(r).sum() - 1.0) < 1e-12);
      for (Index c = r + 1; c < 4; ++c) CHECK(p(r, c) == 0.0);
    }
  }
  SUBCASE("bias broadcast") {
    Var x = g.constant({2, 2}, mat(2, 2, {1, 2, 3, 4}));
    Var b = g.constant({2}, mat(1, 2, {10, 20}));
    CHECK(add(x, b).value() == mat(2, 2, {11, 22, 13, 24}));
  }
  SUBCASE("gelu uses the tanh approximation") {
    Var x = g.constant({1}, mat(1, 1, {1.0}));
    const double expected = 0.5 * (1.0 + std::tanh(0.7978845608028654 * (1.0 + 0.044715)));
    CHECK(gelu(x).item() == doctest::Approx(expected).epsilon(1e-15));
  }
  SUBCASE("layer norm rows have zero mean and unit variance") {
    Rng rng(5);
    Tensor gain({3}), bias({3});
    gain.values().setOnes();
    Var y = layer_norm(g.constant(random_tensor({4, 3}, rng, 2.0)), g.constant(gain), g.constant(bias), 0.0);
    for (Index r = 0; r < 4; ++r) {
      CHECK(std::abs(y.value().row(r).mean()) < 1e-12);
      CHECK(y.value().row(r).squaredNorm() / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("cross entropy of uniform logits is log(V)") {
    Var x = g.constant({2, 4}, Matrix::Zero(2, 4));
    const int labels[] = {1, 3};
    CHECK(cross_entropy(x, std::span<const int>(labels)).item() == doctest::Approx(std::log(4.0)));
  }
}

TEST_CASE("forward errors") {
  Graph64 g;
  Var a = g.constant({2, 3}, Matrix::Ones(2, 3));
  Var b = g.constant({2, 3}, Matrix::Ones(2, 3));
  try {
    matmul(a, b);
    FAIL("matmul accepted mismatched shapes");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
  Matrix bad = Matrix::Ones(1, 2);
  bad(0, 1) = std::nan("");
  CHECK_THROWS_AS(g.constant({2}, bad), NumericError);
  const int oob[] = {5};
  CHECK_THROWS_AS(embedding(g.constant({3, 2}, Matrix::Ones(3, 2)), std::span<const int>(oob)), ShapeError);
}

TEST_CASE("backward on simple losses") {
  SUBCASE("sum is linear") {
    Tensor theta({3}, mat(1, 3, {1, 2, 3}));
    Graph64 g;
    g.backward(sum(g.parameter(theta)));
    CHECK(theta.grad() == mat(1, 3, {1, 1, 1}));
  }
  SUBCASE("half squared norm") {
    Tensor theta({2}, mat(1, 2, {3, -4}));
    Graph64 g;
    Var t = g.parameter(theta);
    g.backward(scale(sum(mul(t, t)), 0.5));
    CHECK(theta.grad() == mat(1, 2, {3, -4}));
  }
  SUBCASE("non-scalar loss rejected") {
    Tensor theta({2});
    Graph64 g;
    CHECK_THROWS_AS(g.backward(g.parameter(theta)), ShapeError);
  }
  SUBCASE("consumed graph rejected") {
    Tensor theta({2});
    Graph64 g;
    Var l = sum(g.parameter(theta));
    g.backward(l);
    CHECK_THROWS_AS(g.backward(l), NumericError);
    CHECK_THROWS_AS(sum(l), NumericError);
  }
}

TEST_CASE("backward visits nodes in reverse construction order") {
  Rng rng(1);
  Tensor w = random_tensor({3, 2}, rng);
  Graph64 g;
  Var x = g.constant(random_tensor({4, 3}, rng));
  Var loss = mean(gelu(matmul(x, g.parameter(w))));
  g.backward(loss);
  const auto& order = g.backward_order();
  REQUIRE(order.size() == g.size());
  for (std::size_t k = 0; k < order.size(); ++k) CHECK(order[k] == g.size() - 1 - k);
  for (std::size_t id = 0; id < g.size(); ++id)
    for (std::size_t in : g.inputs(id)) CHECK(in < id);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(11);
  Tensor w = random_tensor({3, 3}, rng);
  const Tensor x = random_tensor({5, 3}, rng);
  auto grads = [&](double a, double b) {
    w.zero_grad();
    Graph64 g;
    Var h = matmul(g.constant(x), g.parameter(w));
    Var l1 = mean(gmt::tanh(h));
    Var l2 = sum(mul(h, h));
    g.backward(add(scale(l1, a), scale(l2, b)));
    return Matrix(w.grad());
  };
  const Matrix g1 = grads(1.0, 0.0);
  const Matrix g2 = grads(0.0, 1.0);
  const Matrix combined = grads(2.5, -0.75);
  CHECK((combined - (2.5 * g1 - 0.75 * g2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradients match central differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    CAPTURE(seed);
    Batch gaussians = make_dataset(TaskKind::Gaussians, seed, 8).all();
    Mlp classifier({{2, 6, 2}, Activation::Gelu, LossKind::CrossEntropy, 0, seed});
    CHECK(check_gradients(classifier, gaussians).max_rel_error < 1e-5);

    Batch regression = make_dataset(TaskKind::Regression, seed, 8).all();
    Mlp regressor({{4, 5, 5, 1}, Activation::Tanh, LossKind::Mse, 0, seed});
    CHECK(check_gradients(regressor, regression).max_rel_error < 1e-5);
  }
}

TEST_CASE("tiny transformer gradients match central differences") {
  TransformerConfig cfg{11, 8, 2, 1, 6, 4};
  TinyTransformer tf(cfg);
  Tensor in({2, 6}), out({2, 6});
  Rng rng(9);
  for (double& v : in.flat_values()) v = double(rng.below(11));
  for (double& v : out.flat_values()) v = double(rng.below(11));
  Batch b{in, out, 2};
  const auto r = check_gradients(tf, b, 150, 4);
  CAPTURE(r.worst_param);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    TinyTransformer tf({13, 8, 2, 2, 5, 21});
    Tensor in({3, 5}), out({3, 5});
    Rng rng(2);
    for (double& v : in.flat_values()) v = double(rng.below(13));
    for (double& v : out.flat_values()) v = double(rng.below(13));
    Graph64 g;
    Var l = tf.loss(g, Batch{in, out, 3});
    g.backward(l);
    std::vector<double> all{l.item()};
    for (const auto& e : tf.params())
      for (double v : e.tensor.flat_grad()) all.push_back(v);
    return all;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
