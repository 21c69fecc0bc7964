// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/grad_masking.hpp"
#include "gmt/models.hpp"

#include <optional>
#include <span>

namespace gmt {

/// Per-parameter importance of each scalar parameter for a dataset.
struct SaliencyReport {
  GradSet saliency;         // s = |dL/dtheta|
  GradSet predicted_delta;  // first-order change in loss from zeroing: -dL/dtheta * theta
  std::optional<GradSet> exact_delta;  // measured change in loss from zeroing
};

/// Gradient of the mean loss over the whole batch. Leaves the model's grad
/// buffers zeroed.
GradSet full_batch_gradient(Model& model, const Batch& data);

/// First-order (Taylor) estimate of the loss change caused by removing each
/// parameter, plus the |gradient| saliency.
SaliencyReport saliency_first_order(Model& model, const Batch& data);

/// Exhaustive ablation: for every scalar parameter, L(theta with that entry
/// zeroed) - L(theta). Costs one forward pass per parameter.
GradSet ablation_delta(Model& model, const Batch& data);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Flattens a GradSet in registry order.
Vector flatten(const GradSet& set);

}  // namespace gmt
