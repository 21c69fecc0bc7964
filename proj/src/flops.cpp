// SPDX-License-Identifier: Apache-2.0
#include "gmt/flops.hpp"

namespace gmt {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Relu: return "relu";
    case OpKind::Gelu: return "gelu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Softmax: return "softmax";
    case OpKind::LayerNorm: return "layer_norm";
    case OpKind::Embedding: return "embedding";
    case OpKind::Reshape: return "reshape";
    case OpKind::Transpose: return "transpose";
    case OpKind::SliceCols: return "slice_cols";
    case OpKind::ConcatCols: return "concat_cols";
    case OpKind::ConcatRows: return "concat_rows";
    case OpKind::Mean: return "mean";
    case OpKind::Sum: return "sum";
    case OpKind::CrossEntropy: return "cross_entropy";
    case OpKind::Mse: return "mse";
    case OpKind::kCount: break;
  }
  return "unknown";
}

std::uint64_t FlopLedger::model_total() const {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < kKinds; ++i) total += forward_[i] + backward_[i];
  return total;
}

FlopLedger& FlopLedger::operator+=(const FlopLedger& other) {
  for (std::size_t i = 0; i < kKinds; ++i) {
    forward_[i] += other.forward_[i];
    backward_[i] += other.backward_[i];
  }
  selection_ += other.selection_;
  return *this;
}

}  // namespace gmt
