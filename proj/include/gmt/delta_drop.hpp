// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/checkpoint.hpp"
#include "gmt/models.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace gmt {

/// Fine-tuned minus base parameters, kept alongside both checkpoints.
struct DeltaParams {
  Checkpoint base;
  Checkpoint finetuned;
  std::vector<Vector> delta;

  Index total() const;
};

enum class DropStrategy { Trivial, Salient, Random };

std::string_view drop_strategy_name(DropStrategy s);
DropStrategy parse_drop_strategy(std::string_view name);

struct DropSpec {
  double rate = 0.0;  // fraction of delta entries zeroed
  DropStrategy strategy = DropStrategy::Trivial;
  std::uint64_t seed = 0;  // Random only
  bool rescale = false;    // survivors scaled by 1 / (1 - rate)

  void validate() const;
};

struct DropResult {
  Checkpoint merged;
  Index dropped = 0;
  Index total = 0;

  double kept_fraction() const { return total == 0 ? 1.0 : 1.0 - double(dropped) / double(total); }
};

/// Elementwise ft - base. Each delta is nudged by at most a few ulps when
/// needed so that base + delta reproduces ft bitwise. Throws ShapeError
/// naming the first entry whose name or shape differs.
DeltaParams compute_delta(const Checkpoint& base, const Checkpoint& finetuned);

/// Trivial drops the floor(rate * total) smallest |delta| entries, Salient
/// the largest (global order, ties broken by position); Random drops each
/// entry independently with probability rate. Surviving entries take the
/// fine-tuned value (or base + rescaled delta), dropped ones the base value.
DropResult apply_drop(const DeltaParams& delta, const DropSpec& spec);

struct DropCurveRow {
  DropStrategy strategy;
  double rate;
  double eval_loss;
  double eval_metric;
  double kept_fraction;
};

/// Evaluates the merged model for every (strategy, rate) cell, strategy-major.
/// `model` supplies the architecture; its parameters are restored afterwards.
std::vector<DropCurveRow> drop_sweep(const DeltaParams& delta, std::span<const double> rates,
                                     std::span<const DropStrategy> strategies, Model& model,
                                     const Batch& eval_batch, std::uint64_t seed = 0,
                                     bool rescale = false);

}  // namespace gmt
