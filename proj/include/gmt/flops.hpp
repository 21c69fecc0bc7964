// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace gmt {

enum class OpKind : int {
  Leaf = 0,
  MatMul,
  Add,
  Mul,
  Scale,
  Relu,
  Gelu,
  Tanh,
  Softmax,
  LayerNorm,
  Embedding,
  Reshape,
  Transpose,
  SliceCols,
  ConcatCols,
  ConcatRows,
  Mean,
  Sum,
  CrossEntropy,
  Mse,
  kCount
};

std::string_view op_name(OpKind kind);

// Analytic FLOP table, per recorded op (m x k times k x n products, e
// elements, r rows of c columns):
//
//   op            forward          backward
//   matmul        2mkn             4mkn  (two products)
//   add/mul       e                e per differentiable input (+ (m-1)n bias reduce)
//   scale/relu    e                e
//   gelu          8e               12e
//   tanh          e                3e
//   softmax       4e               4e
//   layernorm     8e               12e
//   embedding     0 (gather)       e     (scatter add)
//   reshape etc.  0                0
//   mean/sum      e-1 (+1 mean)    e
//   cross-entropy 4e               3e
//   mse           3e               3e
//
// Mask selection is counted separately: one unit per magnitude, one per
// comparison made by the selection routine, one per threshold test.
class FlopLedger {
 public:
  void add_forward(OpKind kind, std::uint64_t flops) { forward_[idx(kind)] += flops; }
  void add_backward(OpKind kind, std::uint64_t flops) { backward_[idx(kind)] += flops; }
  void add_selection(std::uint64_t ops) { selection_ += ops; }

  std::uint64_t forward(OpKind kind) const { return forward_[idx(kind)]; }
  std::uint64_t backward(OpKind kind) const { return backward_[idx(kind)]; }
  std::uint64_t selection() const { return selection_; }

  /// Forward + backward over every op kind; excludes selection.
  std::uint64_t model_total() const;

  void reset() { *this = FlopLedger{}; }
  FlopLedger& operator+=(const FlopLedger& other);

  /// Model-compute counters equal (selection ignored).
  bool same_model_compute(const FlopLedger& other) const {
    return forward_ == other.forward_ && backward_ == other.backward_;
  }

 private:
  static constexpr std::size_t kKinds = static_cast<std::size_t>(OpKind::kCount);
  static std::size_t idx(OpKind kind) { return static_cast<std::size_t>(kind); }

  std::array<std::uint64_t, kKinds> forward_{};
  std::array<std::uint64_t, kKinds> backward_{};
  std::uint64_t selection_ = 0;
};

}  // namespace gmt
