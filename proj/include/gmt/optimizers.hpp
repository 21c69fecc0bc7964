// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/grad_masking.hpp"
#include "gmt/registry.hpp"

#include <cstdint>
#include <string_view>

namespace gmt {

enum class OptimizerKind { Sgd, Adam };

/// How masked-out entries interact with the update rule.
enum class MaskSemantics {
  /// Dropped entries skip the update entirely: parameter and optimizer
  /// moments stay bitwise unchanged.
  SkipUpdate,
  /// Dropped entries are fed a zero gradient (ablation; Adam momentum can
  /// still move them).
  ZeroGradient,
};

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);
MaskSemantics parse_mask_semantics(std::string_view name);
std::string_view mask_semantics_name(MaskSemantics s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Decoupled; applied only to entries that are updated.
  double weight_decay = 0.0;
  MaskSemantics semantics = MaskSemantics::SkipUpdate;
};

class OptimizerState {
 public:
  OptimizerState(const ParamRegistry& registry, OptimizerConfig config);

  const OptimizerConfig& config() const { return config_; }
  OptimizerKind kind() const { return config_.kind; }
  std::int64_t step() const { return step_; }
  const GradSet& first_moment() const { return m_; }
  const GradSet& second_moment() const { return v_; }

  /// One masked update. SGD: theta -= lr * (g + wd * theta). Adam: standard
  /// bias-corrected moments, theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
  void apply_step(ParamRegistry& registry, const GradSet& grads, const MaskPlan& plan, double lr);

 private:
  OptimizerConfig config_;
  GradSet m_;
  GradSet v_;
  std::int64_t step_ = 0;
};

/// Free-function form of OptimizerState::apply_step.
inline void apply_step(ParamRegistry& registry, const GradSet& grads, const MaskPlan& plan,
                       OptimizerState& opt, double lr) {
  opt.apply_step(registry, grads, plan, lr);
}

/// Linear warmup over W = ceil(warmup_ratio * T) steps, then cosine decay to
/// zero at step T. Steps are 1-based.
class Schedule {
 public:
  Schedule(double base_lr, std::int64_t total_steps, double warmup_ratio = 0.03);

  std::int64_t total_steps() const { return total_; }
  std::int64_t warmup_steps() const { return warmup_; }
  double base_lr() const { return base_; }
  double lr_at(std::int64_t step) const;

 private:
  double base_;
  std::int64_t total_;
  std::int64_t warmup_;
};

}  // namespace gmt
