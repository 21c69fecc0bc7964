// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/common.hpp"

#include <span>
#include <utility>

namespace gmt {

/// Dense row-major tensor with a value buffer and a same-shaped gradient
/// buffer. Storage is a 2-D Eigen matrix: all leading dimensions are folded
/// into rows and the last dimension is the column count (a 1-D tensor of
/// length n is a 1 x n row, a scalar is 1 x 1).
template <typename Scalar>
class BasicTensor {
 public:
  using Storage = MatrixX<Scalar>;

  BasicTensor() : BasicTensor(Shape{}) {}

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    const auto [r, c] = fold(shape_);
    values_ = Storage::Zero(r, c);
    grad_ = Storage::Zero(r, c);
  }

  BasicTensor(Shape shape, Storage values) : shape_(std::move(shape)), values_(std::move(values)) {
    validate_shape(shape_);
    const auto [r, c] = fold(shape_);
    if (values_.rows() != r || values_.cols() != c)
      throw ShapeError("tensor: value buffer " + std::to_string(values_.rows()) + "x" +
                       std::to_string(values_.cols()) + " does not match shape " + to_string(shape_));
    grad_ = Storage::Zero(r, c);
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return values_.size(); }
  Index rows() const { return values_.rows(); }
  Index cols() const { return values_.cols(); }

  Storage& values() { return values_; }
  const Storage& values() const { return values_; }
  Storage& grad() { return grad_; }
  const Storage& grad() const { return grad_; }

  std::span<Scalar> flat_values() { return {values_.data(), static_cast<std::size_t>(size())}; }
  std::span<const Scalar> flat_values() const {
    return {values_.data(), static_cast<std::size_t>(size())};
  }
  std::span<Scalar> flat_grad() { return {grad_.data(), static_cast<std::size_t>(size())}; }
  std::span<const Scalar> flat_grad() const {
    return {grad_.data(), static_cast<std::size_t>(size())};
  }

  void zero_grad() { grad_.setZero(); }

  /// Rows x cols of the 2-D storage backing a tensor of this shape.
  static std::pair<Index, Index> fold(const Shape& shape) {
    if (shape.empty()) return {1, 1};
    Index rows = 1;
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) rows *= shape[i];
    return {rows, shape.back()};
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (Index d : shape)
      if (d <= 0) throw ShapeError("tensor: non-positive dimension in shape " + to_string(shape));
  }

  Shape shape_;
  Storage values_;
  Storage grad_;
};

using Tensor = BasicTensor<double>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace gmt
