// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/registry.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace gmt {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  Vector values;
};

/// Parameter snapshot detached from any model.
///
/// On-disk layout (GMTCKPT v1):
///   "GMTCKPT v1\n"
///   per parameter: <name> ' ' <d0,d1,...> ' ' <8*size bytes LE f64> '\n'
///   trailer: 8-byte LE FNV-1a 64 of all value bytes in record order
struct Checkpoint {
  std::vector<CheckpointEntry> entries;

  static Checkpoint from_registry(const ParamRegistry& registry);
  /// Overwrites registry values; names and shapes must match in order.
  void load_into(ParamRegistry& registry) const;

  Index parameter_count() const;
  std::uint64_t checksum() const;

  void write(std::ostream& out) const;
  static Checkpoint read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint& other) const;
};

/// Throws ShapeError naming the first entry whose name or shape differs.
void require_same_layout(const Checkpoint& a, const Checkpoint& b);

}  // namespace gmt
