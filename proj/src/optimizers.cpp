// SPDX-License-Identifier: Apache-2.0
#include "gmt/optimizers.hpp"

#include <cmath>
#include <numbers>

namespace gmt {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (valid: sgd, adam)");
}

std::string_view mask_semantics_name(MaskSemantics s) {
  return s == MaskSemantics::SkipUpdate ? "skip" : "zero-grad";
}

MaskSemantics parse_mask_semantics(std::string_view name) {
  if (name == "skip") return MaskSemantics::SkipUpdate;
  if (name == "zero-grad") return MaskSemantics::ZeroGradient;
  throw ConfigError("unknown mask semantics '" + std::string(name) + "' (valid: skip, zero-grad)");
}

OptimizerState::OptimizerState(const ParamRegistry& registry, OptimizerConfig config)
    : config_(config) {
  if (config.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (config_.kind == OptimizerKind::Adam) {
    m_ = zeros_like(registry);
    v_ = zeros_like(registry);
  }
}

void OptimizerState::apply_step(ParamRegistry& registry, const GradSet& grads, const MaskPlan& plan,
                                double lr) {
  if (grads.size() != registry.size() || plan.masks.size() != registry.size())
    throw ShapeError("apply_step: " + std::to_string(grads.size()) + " grads / " +
                     std::to_string(plan.masks.size()) + " masks for " + std::to_string(registry.size()) +
                     " parameters");
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const Index n = registry[i].tensor.size();
    if (grads[i].size() != n || plan.masks[i].size() != n)
      throw ShapeError("apply_step: size mismatch for " + registry[i].name);
    if (!grads[i].allFinite()) throw NumericError("apply_step: non-finite gradient in " + registry[i].name);
  }
  ++step_;
  const bool skip = config_.semantics == MaskSemantics::SkipUpdate;
  const double wd = config_.weight_decay;
  if (config_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < registry.size(); ++i) {
      auto theta = registry[i].tensor.flat_values();
      const Vector& g = grads[i];
      const Mask& keep = plan.masks[i];
      for (Index j = 0; j < g.size(); ++j) {
        if (!keep[j] && skip) continue;
        double& t = theta[static_cast<std::size_t>(j)];
        const double gj = keep[j] ? g[j] : 0.0;
        t -= lr * (wd == 0.0 ? gj : gj + wd * t);
      }
    }
    return;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(step_));
  const double c2 = 1.0 - std::pow(b2, double(step_));
  for (std::size_t i = 0; i < registry.size(); ++i) {
    auto theta = registry[i].tensor.flat_values();
    const Vector& g = grads[i];
    const Mask& keep = plan.masks[i];
    Vector& m = m_[i];
    Vector& v = v_[i];
    for (Index j = 0; j < g.size(); ++j) {
      if (!keep[j] && skip) continue;
      const double gj = keep[j] ? g[j] : 0.0;
      m[j] = b1 * m[j] + (1.0 - b1) * gj;
      v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
      double& t = theta[static_cast<std::size_t>(j)];
      t -= lr * (wd == 0.0 ? update : update + wd * t);
    }
  }
}

Schedule::Schedule(double base_lr, std::int64_t total_steps, double warmup_ratio)
    : base_(base_lr), total_(total_steps) {
  if (!(base_lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (total_steps < 1) throw ConfigError("total steps must be >= 1");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) throw ConfigError("warmup ratio must be in [0, 1]");
  warmup_ = std::min(ceil_fraction(warmup_ratio, total_steps), total_steps);
}

double Schedule::lr_at(std::int64_t step) const {
  if (step < 1 || step > total_)
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " outside [1, " +
                            std::to_string(total_) + "]");
  if (step <= warmup_) return base_ * (double(step) / double(warmup_));
  const double progress = double(step - warmup_) / double(total_ - warmup_);
  return base_ * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace gmt
