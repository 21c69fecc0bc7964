// SPDX-License-Identifier: Apache-2.0
#include "gmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace gmt {

namespace {

constexpr char kMagic[] = "GMTCKPT v1\n";

std::string shape_field(const Shape& shape) {
  std::string s;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  return s;
}

Shape parse_shape_field(const std::string& field) {
  Shape shape;
  if (field.empty()) return shape;
  std::stringstream ss(field);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t used = 0;
    long long d = 0;
    try {
      d = std::stoll(part, &used);
    } catch (const std::exception&) {
      throw std::runtime_error("checkpoint: bad dimension '" + part + "'");
    }
    if (used != part.size() || d <= 0) throw std::runtime_error("checkpoint: bad dimension '" + part + "'");
    shape.push_back(static_cast<Index>(d));
  }
  return shape;
}

std::string read_token(std::istream& in) {
  std::string token;
  char c = 0;
  while (in.get(c)) {
    if (c == ' ') return token;
    if (c == '\n' || token.size() > 4096) break;
    token += c;
  }
  throw std::runtime_error("checkpoint: truncated or malformed record header");
}

}  // namespace

Checkpoint Checkpoint::from_registry(const ParamRegistry& registry) {
  Checkpoint ck;
  for (const auto& e : registry) {
    auto v = e.tensor.flat_values();
    ck.entries.push_back({e.name, e.tensor.shape(), Eigen::Map<const Vector>(v.data(), e.tensor.size())});
  }
  return ck;
}

void Checkpoint::load_into(ParamRegistry& registry) const {
  if (registry.size() != entries.size())
    throw ShapeError("checkpoint: " + std::to_string(entries.size()) + " entries for registry of " +
                     std::to_string(registry.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& dst = registry[i];
    if (dst.name != entries[i].name || dst.tensor.shape() != entries[i].shape)
      throw ShapeError("checkpoint: entry " + entries[i].name + " " + to_string(entries[i].shape) +
                       " does not match registry entry " + dst.name + " " + to_string(dst.tensor.shape()));
    auto v = dst.tensor.flat_values();
    std::copy(entries[i].values.begin(), entries[i].values.end(), v.begin());
  }
}

Index Checkpoint::parameter_count() const {
  Index n = 0;
  for (const auto& e : entries) n += e.values.size();
  return n;
}

std::uint64_t Checkpoint::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& e : entries)
    h = fnv1a64(e.values.data(), static_cast<std::size_t>(e.values.size()) * sizeof(double), h);
  return h;
}

void Checkpoint::write(std::ostream& out) const {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(kMagic, sizeof(kMagic) - 1);
  for (const auto& e : entries) {
    const std::string head = e.name + ' ' + shape_field(e.shape) + ' ';
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(double)));
    out.put('\n');
  }
  const std::uint64_t sum = checksum();
  out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

Checkpoint Checkpoint::read(std::istream& in) {
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t magic_len = sizeof(kMagic) - 1;
  if (data.compare(0, magic_len, kMagic) != 0) throw std::runtime_error("checkpoint: missing GMTCKPT v1 header");
  if (data.size() < magic_len + 8) throw std::runtime_error("checkpoint: truncated");
  const std::size_t body_end = data.size() - 8;
  std::istringstream body(data.substr(magic_len, body_end - magic_len));
  Checkpoint ck;
  while (body.peek() != std::char_traits<char>::eof()) {
    CheckpointEntry e;
    e.name = read_token(body);
    e.shape = parse_shape_field(read_token(body));
    const Index n = shape_size(e.shape);
    e.values.resize(n);
    body.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (body.gcount() != static_cast<std::streamsize>(n * sizeof(double)) || body.get() != '\n')
      throw std::runtime_error("checkpoint: truncated values for " + e.name);
    ck.entries.push_back(std::move(e));
  }
  std::uint64_t stored = 0;
  std::memcpy(&stored, data.data() + body_end, sizeof(stored));
  if (stored != ck.checksum()) throw std::runtime_error("checkpoint: checksum mismatch");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string());
  write(out);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read(in);
}

bool Checkpoint::operator==(const Checkpoint& other) const {
  if (entries.size() != other.entries.size()) return false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& a = entries[i];
    const auto& b = other.entries[i];
    if (a.name != b.name || a.shape != b.shape || a.values.size() != b.values.size()) return false;
    if (std::memcmp(a.values.data(), b.values.data(), static_cast<std::size_t>(a.values.size()) * sizeof(double)) != 0)
      return false;
  }
  return true;
}

void require_same_layout(const Checkpoint& a, const Checkpoint& b) {
  const std::size_t n = std::min(a.entries.size(), b.entries.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a.entries[i].name != b.entries[i].name || a.entries[i].shape != b.entries[i].shape)
      throw ShapeError("checkpoint layouts differ at entry " + std::to_string(i) + ": " +
                       a.entries[i].name + " " + to_string(a.entries[i].shape) + " vs " +
                       b.entries[i].name + " " + to_string(b.entries[i].shape));
  }
  if (a.entries.size() != b.entries.size())
    throw ShapeError("checkpoint layouts differ at entry " + std::to_string(n) + ": entry count " +
                     std::to_string(a.entries.size()) + " vs " + std::to_string(b.entries.size()));
}

}  // namespace gmt
