// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace gmt {

enum class ParamGroup { Weight, Bias, Norm, Embedding };

std::string_view group_name(ParamGroup group);
ParamGroup parse_group(std::string_view name);

struct ParamEntry {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::Weight;
};

/// Named, ordered collection of trainable tensors. Insertion order is the
/// registry order used by masks, optimizers, and checkpoints.
class ParamRegistry {
 public:
  /// Adds a zero-initialized tensor and returns it. Names must be unique and
  /// contain no whitespace.
  Tensor& add(std::string name, Shape shape, ParamGroup group);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  /// Total scalar parameter count.
  Index parameter_count() const;

  ParamEntry& operator[](std::size_t i) { return entries_[i]; }
  const ParamEntry& operator[](std::size_t i) const { return entries_[i]; }
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();
  /// Copies values from another registry with identical names and shapes.
  void copy_values_from(const ParamRegistry& other);

  /// All values concatenated in registry order.
  Vector flat_values() const;
  /// FNV-1a 64 over the little-endian bytes of every value in order.
  std::uint64_t checksum() const;

 private:
  std::vector<ParamEntry> entries_;
};

/// 64-bit FNV-1a over raw bytes, continuing from `hash`.
std::uint64_t fnv1a64(const void* data, std::size_t bytes,
                      std::uint64_t hash = 0xcbf29ce484222325ull);

}  // namespace gmt
