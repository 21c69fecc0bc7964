// SPDX-License-Identifier: Apache-2.0
#include "gmt/common.hpp"

#include <cmath>

namespace gmt {

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {
constexpr double kIntegerSnap = 1e-9;
}

std::int64_t ceil_fraction(double fraction, std::int64_t total) {
  const double exact = fraction * static_cast<double>(total);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) <= kIntegerSnap * std::max(1.0, std::abs(exact)))
    return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(std::ceil(exact));
}

std::int64_t floor_fraction(double fraction, std::int64_t total) {
  const double exact = fraction * static_cast<double>(total);
  const double nearest = std::round(exact);
  if (std::abs(exact - nearest) <= kIntegerSnap * std::max(1.0, std::abs(exact)))
    return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(std::floor(exact));
}

}  // namespace gmt
