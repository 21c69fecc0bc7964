// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gradient accumulation, magnitude thresholds and update masks.
//
// All per-parameter data travels as a GradSet: one flat array per registry
// entry, in registry order.

#include "gmt/flops.hpp"
#include "gmt/registry.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

namespace gmt {

using GradSet = std::vector<Vector>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Copies every tensor's grad buffer into a GradSet.
GradSet gradients_of(const ParamRegistry& registry);
GradSet zeros_like(const ParamRegistry& registry);

/// Running sum of per-batch gradients over an interval of N mini-batches.
class GradAccumulator {
 public:
  GradAccumulator(const ParamRegistry& registry, int interval);

  /// Adds one mini-batch gradient. Throws once N batches have been added.
  void accumulate(const GradSet& grads);
  /// Adds the registry's current grad buffers.
  void accumulate_from(const ParamRegistry& registry);

  int interval() const { return interval_; }
  int batches_seen() const { return seen_; }
  bool ready() const { return seen_ == interval_; }

  /// Mean gradient sum / N. Requires exactly N accumulated batches.
  GradSet finalize() const;
  void reset();

 private:
  GradSet sums_;
  int interval_;
  int seen_ = 0;
};

/// Smallest T such that the ceil(k * n) largest values are >= T, found by
/// exact order statistics. keep_fraction == 1 returns 0. When a ledger is
/// given, selection work is added to its selection counter.
double compute_threshold(std::span<const double> abs_values, double keep_fraction,
                         FlopLedger* ledger = nullptr);

enum class MaskStrategy { None, Gmt, Rmt, Hft };
enum class MaskScope { Global, PerTensor };

std::string_view strategy_name(MaskStrategy s);
MaskStrategy parse_strategy(std::string_view name);
std::string_view scope_name(MaskScope s);
MaskScope parse_scope(std::string_view name);

struct MaskPlan {
  MaskStrategy strategy = MaskStrategy::None;
  double keep_fraction = 1.0;
  MaskScope scope = MaskScope::Global;
  /// GMT thresholds: one for GLOBAL, one per tensor for PER_TENSOR (exempt
  /// tensors get 0).
  std::vector<double> thresholds;
  std::vector<Mask> masks;
  std::uint64_t seed = 0;

  Index total() const;
  Index kept_count() const;
  double kept_fraction() const;
};

/// Per-tensor exemption flags from parameter groups; exempt tensors are
/// always updated and never enter a threshold.
std::vector<bool> exempt_by_group(const ParamRegistry& registry, std::span<const ParamGroup> groups);

MaskPlan build_full_mask(const ParamRegistry& registry);

/// M_ij = 1 iff |G_ij| >= T_k, with T_k from the whole set (GLOBAL) or per
/// tensor (PER_TENSOR).
MaskPlan build_gmt_mask(const GradSet& accumulated, double keep_fraction, MaskScope scope,
                        const std::vector<bool>& exempt = {}, FlopLedger* ledger = nullptr);

/// Element-wise Bernoulli(keep_fraction) mask, resampled per (seed, step).
MaskPlan build_rmt_mask(const ParamRegistry& registry, double keep_fraction, std::uint64_t seed,
                        std::uint64_t step, const std::vector<bool>& exempt = {},
                        FlopLedger* ledger = nullptr);

/// ceil(tensors / 2) whole tensors trainable, the rest frozen; fixed per seed.
MaskPlan build_hft_mask(const ParamRegistry& registry, std::uint64_t seed);

/// CSV dump: param_name,index,abs_grad,kept
void write_mask_csv(std::ostream& out, const ParamRegistry& registry, const GradSet& accumulated,
                    const MaskPlan& plan);

}  // namespace gmt
