// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/models.hpp"

#include <cstdint>
#include <string>

namespace gmt {

struct GradCheckResult {
  Index checked = 0;
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = 0;
  double worst_autodiff = 0.0;
  double worst_numeric = 0.0;
};

/// Denominator floor of the relative error |a - f| / max(|a|, |f|, floor):
/// below it, central differences at h = 1e-6 are dominated by rounding.
inline constexpr double kGradCheckFloor = 1e-3;

/// Compares autodiff gradients of the model's mean loss on `batch` with
/// central finite differences (step h). Checks every parameter when
/// sample == 0, otherwise `sample` entries drawn uniformly with `seed`.
GradCheckResult check_gradients(Model& model, const Batch& batch, Index sample = 0,
                                std::uint64_t seed = 0, double h = 1e-6);

}  // namespace gmt
