// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Graph is built fresh for every forward pass. Each primitive appends one
// node holding its cached output and a closure that pushes the output
// gradient to its inputs. Because a node can only reference nodes that
// already exist, construction order is a topological order and backward()
// simply walks the node list in reverse.

#include "gmt/common.hpp"
#include "gmt/flops.hpp"
#include "gmt/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gmt {

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
template <typename Scalar>
class BasicVar {
 public:
  BasicVar() = default;
  BasicVar(Graph<Scalar>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<Scalar>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const MatrixX<Scalar>& value() const { return graph_->value(*this); }
  const Shape& shape() const { return graph_->shape(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar item() const { return value()(0, 0); }

 private:
  Graph<Scalar>* graph_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Graph {
 public:
  using Mat = MatrixX<Scalar>;
  using Var = BasicVar<Scalar>;
  using TensorT = BasicTensor<Scalar>;
  /// Receives the node's output gradient; pushes contributions to inputs.
  using BackwardFn = std::function<void(const Mat& out_grad, Graph& graph)>;

  explicit Graph(FlopLedger* ledger = nullptr) : ledger_(ledger) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Non-differentiable input.
  Var constant(Shape shape, Mat value) {
    check_fold(shape, value, "constant");
    require_finite(value, "constant");
    return push(OpKind::Leaf, std::move(shape), std::move(value), false, {}, nullptr);
  }
  Var constant(const TensorT& tensor) { return constant(tensor.shape(), tensor.values()); }

  /// Differentiable leaf bound to a parameter tensor; backward() adds
  /// d(loss)/d(tensor) into tensor.grad().
  Var parameter(TensorT& tensor) {
    require_finite(tensor.values(), "parameter");
    Var v = push(OpKind::Leaf, tensor.shape(), tensor.values(), true, {}, nullptr);
    nodes_.back().param = &tensor;
    return v;
  }

  const Mat& value(Var v) const { return nodes_.at(v.id()).value; }
  const Shape& shape(Var v) const { return nodes_.at(v.id()).shape; }
  bool needs_grad(Var v) const { return nodes_.at(v.id()).needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  OpKind op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  FlopLedger* ledger() const { return ledger_; }
  bool consumed() const { return consumed_; }

  /// Node ids in the order the last backward() visited them.
  const std::vector<std::size_t>& backward_order() const { return backward_order_; }

  /// Gradient of the last backward() w.r.t. any node that required grad.
  const Mat& grad(Var v) const { return nodes_.at(v.id()).grad; }

  void backward(Var loss) {
    if (consumed_) throw NumericError("backward: graph already consumed");
    Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1)
      throw ShapeError("backward: loss must be a scalar, got shape " + to_string(root.shape));
    consumed_ = true;
    if (!root.needs_grad) return;
    root.grad = Mat::Ones(1, 1);
    backward_order_.clear();
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& node = nodes_[i];
      backward_order_.push_back(i);
      if (!node.needs_grad || node.grad.size() == 0) continue;
      if (node.param != nullptr) {
        node.param->grad() += node.grad;
        continue;
      }
      if (node.backward) {
        node.backward(node.grad, *this);
        if (ledger_ != nullptr) ledger_->add_backward(node.op, node.backward_flops);
      }
      if (!node.grad.allFinite())
        throw NumericError(std::string("backward: non-finite gradient at ") +
                           std::string(op_name(node.op)));
    }
  }

  // --- primitive plumbing -------------------------------------------------

  /// Appends an op node. Inputs must already exist in this graph.
  Var record(OpKind op, std::vector<std::size_t> inputs, Shape shape, Mat value, BackwardFn fn,
             std::uint64_t forward_flops, std::uint64_t backward_flops) {
    if (consumed_) throw NumericError("graph already consumed; build a new graph per step");
    require_finite(value, std::string(op_name(op)));
    bool needs = false;
    for (std::size_t id : inputs) needs = needs || nodes_.at(id).needs_grad;
    if (ledger_ != nullptr) ledger_->add_forward(op, forward_flops);
    Var v = push(op, std::move(shape), std::move(value), needs, std::move(inputs),
                 needs ? std::move(fn) : BackwardFn{});
    nodes_.back().backward_flops = needs ? backward_flops : 0;
    return v;
  }

  /// Adds a contribution to an input's gradient if it participates.
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& contribution) {
    Node& node = nodes_[id];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0)
      node.grad = contribution;
    else
      node.grad += contribution;
  }

  bool input_needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Shape shape;
    Mat value;
    Mat grad;
    bool needs_grad = false;
    TensorT* param = nullptr;
    BackwardFn backward;
    std::uint64_t backward_flops = 0;
  };

  Var push(OpKind op, Shape shape, Mat value, bool needs, std::vector<std::size_t> inputs,
           BackwardFn fn) {
    Node node;
    node.op = op;
    node.shape = std::move(shape);
    node.value = std::move(value);
    node.needs_grad = needs;
    node.inputs = std::move(inputs);
    node.backward = std::move(fn);
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  static void check_fold(const Shape& shape, const Mat& value, const char* what) {
    const auto [r, c] = TensorT::fold(shape);
    if (value.rows() != r || value.cols() != c)
      throw ShapeError(std::string(what) + ": value " + std::to_string(value.rows()) + "x" +
                       std::to_string(value.cols()) + " does not match shape " + to_string(shape));
  }

  static void require_finite(const Mat& value, const std::string& what) {
    if (!value.allFinite()) throw NumericError(what + ": non-finite value");
  }

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
  FlopLedger* ledger_ = nullptr;
  bool consumed_ = false;
};

using Var = BasicVar<double>;
using Graph64 = Graph<double>;

// --- primitives -------------------------------------------------------------

namespace detail {

template <typename Scalar>
void same_graph(BasicVar<Scalar> a, BasicVar<Scalar> b, const char* op) {
  if (&a.graph() != &b.graph())
    throw std::invalid_argument(std::string(op) + ": operands belong to different graphs");
}

inline std::string shapes_msg(const char* op, const Shape& a, const Shape& b) {
  return std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b);
}

inline std::uint64_t u64(Index v) { return static_cast<std::uint64_t>(v); }

}  // namespace detail

/// a[..., k] x b[k, n] -> [..., n]
template <typename Scalar>
BasicVar<Scalar> matmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  using Mat = MatrixX<Scalar>;
  detail::same_graph(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sb.size() != 2 || sa.back() != sb[0])
    throw ShapeError(detail::shapes_msg("matmul", sa, sb));
  Shape out_shape = sa;
  out_shape.back() = sb[1];
  const Index m = a.rows(), k = a.cols(), n = b.cols();
  Mat out = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const std::uint64_t f = 2 * detail::u64(m) * detail::u64(k) * detail::u64(n);
  return a.graph().record(
      OpKind::MatMul, {ia, ib}, std::move(out_shape), std::move(out),
      [ia, ib](const Mat& g, Graph<Scalar>& graph) {
        const Mat& av = graph.value(BasicVar<Scalar>(&graph, ia));
        const Mat& bv = graph.value(BasicVar<Scalar>(&graph, ib));
        if (graph.input_needs_grad(ia)) graph.accumulate(ia, g * bv.transpose());
        if (graph.input_needs_grad(ib)) graph.accumulate(ib, av.transpose() * g);
      },
      f, 2 * f);
}

/// Elementwise sum. b may also be a trailing bias ([n] or [1, n]) broadcast
/// over the rows of a.
template <typename Scalar>
BasicVar<Scalar> add(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  using Mat = MatrixX<Scalar>;
  detail::same_graph(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  const std::uint64_t e = detail::u64(a.value().size());
  if (a.shape() == b.shape()) {
    Mat out = a.value() + b.value();
    return a.graph().record(
        OpKind::Add, {ia, ib}, a.shape(), std::move(out),
        [ia, ib](const Mat& g, Graph<Scalar>& graph) {
          graph.accumulate(ia, g);
          graph.accumulate(ib, g);
        },
        e, 2 * e);
  }
  const bool bias = b.rows() == 1 && b.cols() == a.cols() && !a.shape().empty() &&
                    b.shape().back() == a.shape().back() && b.value().size() == b.cols();
  if (!bias) throw ShapeError(detail::shapes_msg("add", a.shape(), b.shape()));
  Mat out = a.value().rowwise() + b.value().row(0);
  return a.graph().record(
      OpKind::Add, {ia, ib}, a.shape(), std::move(out),
      [ia, ib](const Mat& g, Graph<Scalar>& graph) {
        graph.accumulate(ia, g);
        if (graph.input_needs_grad(ib)) graph.accumulate(ib, Mat(g.colwise().sum()));
      },
      e, 2 * e);
}

template <typename Scalar>
BasicVar<Scalar> operator+(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  return add(a, b);
}

/// Elementwise (Hadamard) product of equal shapes.
template <typename Scalar>
BasicVar<Scalar> mul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  using Mat = MatrixX<Scalar>;
  detail::same_graph(a, b, "mul");
  if (a.shape() != b.shape()) throw ShapeError(detail::shapes_msg("mul", a.shape(), b.shape()));
  Mat out = a.value().cwiseProduct(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  const std::uint64_t e = detail::u64(out.size());
  return a.graph().record(
      OpKind::Mul, {ia, ib}, a.shape(), std::move(out),
      [ia, ib](const Mat& g, Graph<Scalar>& graph) {
        const Mat& av = graph.value(BasicVar<Scalar>(&graph, ia));
        const Mat& bv = graph.value(BasicVar<Scalar>(&graph, ib));
        if (graph.input_needs_grad(ia)) graph.accumulate(ia, g.cwiseProduct(bv));
        if (graph.input_needs_grad(ib)) graph.accumulate(ib, g.cwiseProduct(av));
      },
      e, 2 * e);
}

template <typename Scalar>
BasicVar<Scalar> scale(BasicVar<Scalar> a, Scalar factor) {
  using Mat = MatrixX<Scalar>;
  Mat out = a.value() * factor;
  const std::size_t ia = a.id();
  const std::uint64_t e = detail::u64(out.size());
  return a.graph().record(
      OpKind::Scale, {ia}, a.shape(), std::move(out),
      [ia, factor](const Mat& g, Graph<Scalar>& graph) { graph.accumulate(ia, g * factor); }, e,
      e);
}

template <typename Scalar>
BasicVar<Scalar> relu(BasicVar<Scalar> a) {
  using Mat = MatrixX<Scalar>;
  Mat out = a.value().cwiseMax(Scalar(0));
  const std::size_t ia = a.id();
  const std::uint64_t e = detail::u64(out.size());
  return a.graph().record(
      OpKind::Relu, {ia}, a.shape(), std::move(out),
      [ia](const Mat& g, Graph<Scalar>& graph) {
        const Mat& x = graph.value(BasicVar<Scalar>(&graph, ia));
        graph.accumulate(ia, Mat((x.array() > Scalar(0)).select(g, Scalar(0))));
      },
      e, e);
}

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename Scalar>
BasicVar<Scalar> gelu(BasicVar<Scalar> a) {
  using Mat = MatrixX<Scalar>;
  constexpr Scalar kC = Scalar(0.7978845608028654);  // sqrt(2/pi)
  constexpr Scalar kA = Scalar(0.044715);
  auto inner = [](Scalar x) { return kC * (x + kA * x * x * x); };
  Mat out = a.value().unaryExpr(
      [&](Scalar x) { return Scalar(0.5) * x * (Scalar(1) + std::tanh(inner(x))); });
  const std::size_t ia = a.id();
  const std::uint64_t e = detail::u64(out.size());
  return a.graph().record(
      OpKind::Gelu, {ia}, a.shape(), std::move(out),
      [ia, inner](const Mat& g, Graph<Scalar>& graph) {
        const Mat& x = graph.value(BasicVar<Scalar>(&graph, ia));
        Mat d = x.unaryExpr([&](Scalar v) {
          const Scalar t = std::tanh(inner(v));
          return Scalar(0.5) * (Scalar(1) + t) +
                 Scalar(0.5) * v * (Scalar(1) - t * t) * kC * (Scalar(1) + 3 * kA * v * v);
        });
        graph.accumulate(ia, g.cwiseProduct(d));
      },
      8 * e, 12 * e);
}

template <typename Scalar>
BasicVar<Scalar> tanh(BasicVar<Scalar> a) {
  using Mat = MatrixX<Scalar>;
  Mat out = a.value().array().tanh().matrix();
  const std::size_t ia = a.id();
  const std::size_t io = a.graph().size();  // id this node will receive
  const std::uint64_t e = detail::u64(out.size());
  return a.graph().record(
      OpKind::Tanh, {ia}, a.shape(), std::move(out),
      [ia, io](const Mat& g, Graph<Scalar>& graph) {
        const Mat& y = graph.value(BasicVar<Scalar>(&graph, io));
        graph.accumulate(ia, Mat(g.array() * (Scalar(1) - y.array().square())));
      },
      e, 3 * e);
}

/// Row-wise softmax. With causal=true, row r only attends to columns
/// c <= r + (cols - rows); masked entries are exactly zero.
template <typename Scalar>
BasicVar<Scalar> softmax(BasicVar<Scalar> a, bool causal = false) {
  using Mat = MatrixX<Scalar>;
  const Mat& x = a.value();
  const Index rows = x.rows(), cols = x.cols();
  const Index offset = cols - rows;
  Mat out = Mat::Zero(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Index width = causal ? std::min(cols, std::max<Index>(r + offset + 1, 0)) : cols;
    if (width == 0) continue;
    auto row = x.row(r).head(width);
    const Scalar mx = row.maxCoeff();
    auto e = (row.array() - mx).exp();
    out.row(r).head(width) = (e / e.sum()).matrix();
  }
  const std::size_t ia = a.id();
  const std::size_t io = a.graph().size();
  const std::uint64_t n = detail::u64(out.size());
  return a.graph().record(
      OpKind::Softmax, {ia}, a.shape(), std::move(out),
      [ia, io](const Mat& g, Graph<Scalar>& graph) {
        const Mat& y = graph.value(BasicVar<Scalar>(&graph, io));
        const VectorX<Scalar> dots = g.cwiseProduct(y).rowwise().sum();
        Mat d = y.cwiseProduct(Mat(g.colwise() - dots));
        graph.accumulate(ia, d);
      },
      4 * n, 4 * n);
}

/// Row-wise layer normalization with learned gain and bias over the last
/// dimension.
template <typename Scalar>
BasicVar<Scalar> layer_norm(BasicVar<Scalar> x, BasicVar<Scalar> gamma, BasicVar<Scalar> beta,
                            Scalar eps = Scalar(1e-5)) {
  using Mat = MatrixX<Scalar>;
  using Vec = VectorX<Scalar>;
  detail::same_graph(x, gamma, "layer_norm");
  detail::same_graph(x, beta, "layer_norm");
  const Index d = x.cols();
  if (gamma.value().size() != d || beta.value().size() != d || gamma.rows() != 1 ||
      beta.rows() != 1)
    throw ShapeError(detail::shapes_msg("layer_norm", x.shape(), gamma.shape()));
  const Mat& xv = x.value();
  const Vec mean = xv.rowwise().mean();
  const Mat centered = xv.colwise() - mean;
  const Vec inv_std =
      ((centered.array().square().rowwise().sum() / Scalar(d)) + eps).rsqrt().matrix();
  Mat xhat = centered.array().colwise() * inv_std.array();
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix().rowwise() +
            beta.value().row(0);
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  const std::uint64_t e = detail::u64(out.size());
  return x.graph().record(
      OpKind::LayerNorm, {ix, ig, ib}, x.shape(), std::move(out),
      [ix, ig, ib, xhat = std::move(xhat), inv_std](const Mat& g, Graph<Scalar>& graph) {
        const Mat& gam = graph.value(BasicVar<Scalar>(&graph, ig));
        if (graph.input_needs_grad(ig))
          graph.accumulate(ig, Mat(g.cwiseProduct(xhat).colwise().sum()));
        if (graph.input_needs_grad(ib)) graph.accumulate(ib, Mat(g.colwise().sum()));
        if (graph.input_needs_grad(ix)) {
          const Mat gh = g.array().rowwise() * gam.row(0).array();
          const Vec m1 = gh.rowwise().mean();
          const Vec m2 = gh.cwiseProduct(xhat).rowwise().mean();
          Mat dx = gh.colwise() - m1;
          dx -= (xhat.array().colwise() * m2.array()).matrix();
          dx = dx.array().colwise() * inv_std.array();
          graph.accumulate(ix, dx);
        }
      },
      8 * e, 12 * e);
}

/// Gathers rows of table [V, d] -> [ids.size(), d].
template <typename Scalar>
BasicVar<Scalar> embedding(BasicVar<Scalar> table, std::span<const int> ids) {
  using Mat = MatrixX<Scalar>;
  const Index vocab = table.rows(), d = table.cols();
  if (table.shape().size() != 2) throw ShapeError("embedding: table must be 2-D, got " + to_string(table.shape()));
  Mat out(static_cast<Index>(ids.size()), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= vocab)
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(vocab));
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  const std::size_t it = table.id();
  std::vector<int> idv(ids.begin(), ids.end());
  const std::uint64_t e = detail::u64(out.size());
  return table.graph().record(
      OpKind::Embedding, {it}, Shape{static_cast<Index>(ids.size()), d}, std::move(out),
      [it, idv = std::move(idv), vocab, d](const Mat& g, Graph<Scalar>& graph) {
        Mat dt = Mat::Zero(vocab, d);
        for (std::size_t i = 0; i < idv.size(); ++i) dt.row(idv[i]) += g.row(static_cast<Index>(i));
        graph.accumulate(it, dt);
      },
      0, e);
}

template <typename Scalar>
BasicVar<Scalar> reshape(BasicVar<Scalar> a, Shape shape) {
  using Mat = MatrixX<Scalar>;
  if (shape_size(shape) != a.value().size())
    throw ShapeError(detail::shapes_msg("reshape", a.shape(), shape));
  const auto [r, c] = BasicTensor<Scalar>::fold(shape);
  Mat out = Eigen::Map<const Mat>(a.value().data(), r, c);
  const std::size_t ia = a.id();
  const Index ar = a.rows(), ac = a.cols();
  return a.graph().record(
      OpKind::Reshape, {ia}, std::move(shape), std::move(out),
      [ia, ar, ac](const Mat& g, Graph<Scalar>& graph) {
        graph.accumulate(ia, Mat(Eigen::Map<const Mat>(g.data(), ar, ac)));
      },
      0, 0);
}

template <typename Scalar>
BasicVar<Scalar> transpose(BasicVar<Scalar> a) {
  using Mat = MatrixX<Scalar>;
  if (a.shape().size() != 2) throw ShapeError("transpose: expected 2-D, got " + to_string(a.shape()));
  Mat out = a.value().transpose();
  const std::size_t ia = a.id();
  return a.graph().record(
      OpKind::Transpose, {ia}, Shape{a.shape()[1], a.shape()[0]}, std::move(out),
      [ia](const Mat& g, Graph<Scalar>& graph) { graph.accumulate(ia, Mat(g.transpose())); }, 0,
      0);
}

/// Columns [start, start + count) of a 2-D value.
template <typename Scalar>
BasicVar<Scalar> slice_cols(BasicVar<Scalar> a, Index start, Index count) {
  using Mat = MatrixX<Scalar>;
  if (a.shape().size() != 2 || start < 0 || count <= 0 || start + count > a.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") outside shape " + to_string(a.shape()));
  Mat out = a.value().middleCols(start, count);
  const std::size_t ia = a.id();
  const Index rows = a.rows(), cols = a.cols();
  return a.graph().record(
      OpKind::SliceCols, {ia}, Shape{rows, count}, std::move(out),
      [ia, rows, cols, start, count](const Mat& g, Graph<Scalar>& graph) {
        Mat d = Mat::Zero(rows, cols);
        d.middleCols(start, count) = g;
        graph.accumulate(ia, d);
      },
      0, 0);
}

template <typename Scalar>
BasicVar<Scalar> concat_cols(std::span<const BasicVar<Scalar>> parts) {
  using Mat = MatrixX<Scalar>;
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows || p.shape().size() != 2)
      throw ShapeError(detail::shapes_msg("concat_cols", parts[0].shape(), p.shape()));
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return parts[0].graph().record(
      OpKind::ConcatCols, ids, Shape{rows, cols}, std::move(out),
      [ids, widths](const Mat& g, Graph<Scalar>& graph) {
        Index at = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (graph.input_needs_grad(ids[i])) graph.accumulate(ids[i], Mat(g.middleCols(at, widths[i])));
          at += widths[i];
        }
      },
      0, 0);
}

template <typename Scalar>
BasicVar<Scalar> concat_rows(std::span<const BasicVar<Scalar>> parts) {
  using Mat = MatrixX<Scalar>;
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols || p.shape().size() != 2)
      throw ShapeError(detail::shapes_msg("concat_rows", parts[0].shape(), p.shape()));
    rows += p.rows();
  }
  Mat out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<Index> heights;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    ids.push_back(p.id());
    heights.push_back(p.rows());
  }
  return parts[0].graph().record(
      OpKind::ConcatRows, ids, Shape{rows, cols}, std::move(out),
      [ids, heights](const Mat& g, Graph<Scalar>& graph) {
        Index at = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
          if (graph.input_needs_grad(ids[i])) graph.accumulate(ids[i], Mat(g.middleRows(at, heights[i])));
          at += heights[i];
        }
      },
      0, 0);
}

template <typename Scalar>
BasicVar<Scalar> sum(BasicVar<Scalar> a) {
  using Mat = MatrixX<Scalar>;
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  const std::uint64_t e = detail::u64(a.value().size());
  return a.graph().record(
      OpKind::Sum, {ia}, Shape{}, std::move(out),
      [ia, r, c](const Mat& g, Graph<Scalar>& graph) {
        graph.accumulate(ia, Mat::Constant(r, c, g(0, 0)));
      },
      e - 1, e);
}

template <typename Scalar>
BasicVar<Scalar> mean(BasicVar<Scalar> a) {
  using Mat = MatrixX<Scalar>;
  const Scalar n = Scalar(a.value().size());
  Mat out(1, 1);
  out(0, 0) = a.value().sum() / n;
  const std::size_t ia = a.id();
  const Index r = a.rows(), c = a.cols();
  const std::uint64_t e = detail::u64(a.value().size());
  return a.graph().record(
      OpKind::Mean, {ia}, Shape{}, std::move(out),
      [ia, r, c, n](const Mat& g, Graph<Scalar>& graph) {
        graph.accumulate(ia, Mat::Constant(r, c, g(0, 0) / n));
      },
      e, e);
}

/// Label value that excludes a row from cross_entropy.
inline constexpr int kIgnoreLabel = -1;

/// Mean softmax cross-entropy of logits [n, V] against integer labels;
/// rows labelled kIgnoreLabel do not contribute.
template <typename Scalar>
BasicVar<Scalar> cross_entropy(BasicVar<Scalar> logits, std::span<const int> labels) {
  using Mat = MatrixX<Scalar>;
  const Mat& x = logits.value();
  if (static_cast<Index>(labels.size()) != x.rows())
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     to_string(logits.shape()));
  Mat probs(x.rows(), x.cols());
  Scalar total = 0;
  Index counted = 0;
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar mx = x.row(r).maxCoeff();
    auto e = (x.row(r).array() - mx).exp();
    const Scalar z = e.sum();
    probs.row(r) = (e / z).matrix();
    const int label = labels[static_cast<std::size_t>(r)];
    if (label == kIgnoreLabel) continue;
    if (label < 0 || label >= x.cols())
      throw ShapeError("cross_entropy: label " + std::to_string(label) + " outside " +
                       std::to_string(x.cols()) + " classes");
    total += -(x(r, label) - mx - std::log(z));
    ++counted;
  }
  if (counted == 0) throw ShapeError("cross_entropy: every row is ignored");
  Mat out(1, 1);
  out(0, 0) = total / Scalar(counted);
  const std::size_t il = logits.id();
  std::vector<int> lv(labels.begin(), labels.end());
  const std::uint64_t e = detail::u64(x.size());
  return logits.graph().record(
      OpKind::CrossEntropy, {il}, Shape{}, std::move(out),
      [il, lv = std::move(lv), probs = std::move(probs), counted](const Mat& g, Graph<Scalar>& graph) {
        Mat d = probs;
        for (Index r = 0; r < d.rows(); ++r) {
          const int label = lv[static_cast<std::size_t>(r)];
          if (label == kIgnoreLabel) {
            d.row(r).setZero();
            continue;
          }
          d(r, label) -= Scalar(1);
        }
        graph.accumulate(il, Mat(d * (g(0, 0) / Scalar(counted))));
      },
      4 * e, 3 * e);
}

/// Mean squared error over all elements; target is a constant.
template <typename Scalar>
BasicVar<Scalar> mse(BasicVar<Scalar> pred, const MatrixX<Scalar>& target) {
  using Mat = MatrixX<Scalar>;
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("mse: prediction " + to_string(pred.shape()) + " vs target " +
                     std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  if (!target.allFinite()) throw NumericError("mse: non-finite target");
  Mat diff = pred.value() - target;
  const Scalar n = Scalar(diff.size());
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  const std::size_t ip = pred.id();
  const std::uint64_t e = detail::u64(diff.size());
  return pred.graph().record(
      OpKind::Mse, {ip}, Shape{}, std::move(out),
      [ip, diff = std::move(diff), n](const Mat& g, Graph<Scalar>& graph) {
        graph.accumulate(ip, Mat(diff * (Scalar(2) * g(0, 0) / n)));
      },
      3 * e, 3 * e);
}

}  // namespace gmt
