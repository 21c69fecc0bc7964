// SPDX-License-Identifier: Apache-2.0
#include "gmt/registry.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>

namespace gmt {

std::string_view group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::Weight: return "weight";
    case ParamGroup::Bias: return "bias";
    case ParamGroup::Norm: return "norm";
    case ParamGroup::Embedding: return "embedding";
  }
  return "weight";
}

ParamGroup parse_group(std::string_view name) {
  if (name == "weight") return ParamGroup::Weight;
  if (name == "bias") return ParamGroup::Bias;
  if (name == "norm") return ParamGroup::Norm;
  if (name == "embedding") return ParamGroup::Embedding;
  throw ConfigError("unknown parameter group '" + std::string(name) +
                    "' (valid: weight, bias, norm, embedding)");
}

Tensor& ParamRegistry::add(std::string name, Shape shape, ParamGroup group) {
  if (name.empty() || std::any_of(name.begin(), name.end(),
                                  [](unsigned char c) { return std::isspace(c) != 0; }))
    throw std::invalid_argument("registry: invalid parameter name '" + name + "'");
  if (contains(name)) throw std::invalid_argument("registry: duplicate parameter name '" + name + "'");
  entries_.push_back(ParamEntry{std::move(name), Tensor(std::move(shape)), group});
  return entries_.back().tensor;
}

Index ParamRegistry::parameter_count() const {
  Index total = 0;
  for (const auto& e : entries_) total += e.tensor.size();
  return total;
}

Tensor& ParamRegistry::at(std::string_view name) {
  for (auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("registry: no parameter named '" + std::string(name) + "'");
}

const Tensor& ParamRegistry::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::out_of_range("registry: no parameter named '" + std::string(name) + "'");
}

bool ParamRegistry::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const ParamEntry& e) { return e.name == name; });
}

void ParamRegistry::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamRegistry::copy_values_from(const ParamRegistry& other) {
  if (other.size() != size()) throw ShapeError("registry: parameter count differs");
  for (std::size_t i = 0; i < size(); ++i) {
    if (entries_[i].name != other[i].name || entries_[i].tensor.shape() != other[i].tensor.shape())
      throw ShapeError("registry: entry " + entries_[i].name + " does not match " + other[i].name);
    entries_[i].tensor.values() = other[i].tensor.values();
  }
}

Vector ParamRegistry::flat_values() const {
  Vector out(parameter_count());
  Index at = 0;
  for (const auto& e : entries_) {
    auto v = e.tensor.flat_values();
    std::copy(v.begin(), v.end(), out.data() + at);
    at += e.tensor.size();
  }
  return out;
}

std::uint64_t fnv1a64(const void* data, std::size_t bytes, std::uint64_t hash) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    hash ^= p[i];
    hash *= 0x100000001b3ull;
  }
  return hash;
}

std::uint64_t ParamRegistry::checksum() const {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : entries_) {
    auto v = e.tensor.flat_values();
    h = fnv1a64(v.data(), v.size_bytes(), h);
  }
  return h;
}

}  // namespace gmt
