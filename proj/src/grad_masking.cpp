// SPDX-License-Identifier: Apache-2.0
#include "gmt/grad_masking.hpp"

#include "gmt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "gmt/csv.hpp"

namespace gmt {

GradSet gradients_of(const ParamRegistry& registry) {
  GradSet out;
  out.reserve(registry.size());
  for (const auto& e : registry) {
    auto g = e.tensor.flat_grad();
    out.emplace_back(Eigen::Map<const Vector>(g.data(), e.tensor.size()));
  }
  return out;
}

GradSet zeros_like(const ParamRegistry& registry) {
  GradSet out;
  out.reserve(registry.size());
  for (const auto& e : registry) out.push_back(Vector::Zero(e.tensor.size()));
  return out;
}

// --- accumulation -----------------------------------------------------------

GradAccumulator::GradAccumulator(const ParamRegistry& registry, int interval)
    : sums_(zeros_like(registry)), interval_(interval) {
  if (interval < 1) throw ConfigError("accumulation interval must be >= 1, got " + std::to_string(interval));
}

void GradAccumulator::accumulate(const GradSet& grads) {
  if (seen_ >= interval_)
    throw std::logic_error("accumulate: interval of " + std::to_string(interval_) +
                           " batches already filled");
  if (grads.size() != sums_.size()) throw ShapeError("accumulate: parameter count mismatch");
  for (std::size_t i = 0; i < sums_.size(); ++i) {
    if (grads[i].size() != sums_[i].size())
      throw ShapeError("accumulate: size mismatch for parameter " + std::to_string(i));
  }
  for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i] += grads[i];
  ++seen_;
}

void GradAccumulator::accumulate_from(const ParamRegistry& registry) { accumulate(gradients_of(registry)); }

GradSet GradAccumulator::finalize() const {
  if (seen_ != interval_)
    throw std::logic_error("finalize: " + std::to_string(seen_) + " of " + std::to_string(interval_) +
                           " batches accumulated");
  GradSet out = sums_;
  const double n = double(interval_);
  for (auto& g : out) g /= n;
  return out;
}

void GradAccumulator::reset() {
  for (auto& s : sums_) s.setZero();
  seen_ = 0;
}

// --- threshold --------------------------------------------------------------

double compute_threshold(std::span<const double> abs_values, double keep_fraction, FlopLedger* ledger) {
  if (abs_values.empty()) throw std::invalid_argument("compute_threshold: empty input");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("compute_threshold: keep fraction must be in (0, 1], got " +
                                std::to_string(keep_fraction));
  if (keep_fraction == 1.0) return 0.0;
  const auto n = static_cast<std::int64_t>(abs_values.size());
  const std::int64_t keep = std::clamp<std::int64_t>(ceil_fraction(keep_fraction, n), 1, n);
  std::vector<double> work(abs_values.begin(), abs_values.end());
  std::uint64_t comparisons = 0;
  const auto nth = work.begin() + (n - keep);
  std::nth_element(work.begin(), nth, work.end(), [&comparisons](double a, double b) {
    ++comparisons;
    return a < b;
  });
  if (ledger != nullptr) ledger->add_selection(comparisons);
  return *nth;
}

// --- names ------------------------------------------------------------------

std::string_view strategy_name(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::None: return "none";
    case MaskStrategy::Gmt: return "gmt";
    case MaskStrategy::Rmt: return "rmt";
    case MaskStrategy::Hft: return "hft";
  }
  return "none";
}

MaskStrategy parse_strategy(std::string_view name) {
  if (name == "none") return MaskStrategy::None;
  if (name == "gmt") return MaskStrategy::Gmt;
  if (name == "rmt") return MaskStrategy::Rmt;
  if (name == "hft") return MaskStrategy::Hft;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (valid: none, gmt, rmt, hft)");
}

std::string_view scope_name(MaskScope s) { return s == MaskScope::Global ? "global" : "per-tensor"; }

MaskScope parse_scope(std::string_view name) {
  if (name == "global") return MaskScope::Global;
  if (name == "per-tensor") return MaskScope::PerTensor;
  throw ConfigError("unknown scope '" + std::string(name) + "' (valid: global, per-tensor)");
}

// --- plans ------------------------------------------------------------------

Index MaskPlan::total() const {
  Index n = 0;
  for (const auto& m : masks) n += m.size();
  return n;
}

Index MaskPlan::kept_count() const {
  Index n = 0;
  for (const auto& m : masks) n += m.count();
  return n;
}

double MaskPlan::kept_fraction() const {
  const Index t = total();
  return t == 0 ? 0.0 : double(kept_count()) / double(t);
}

std::vector<bool> exempt_by_group(const ParamRegistry& registry, std::span<const ParamGroup> groups) {
  std::vector<bool> out;
  for (const auto& e : registry)
    out.push_back(std::find(groups.begin(), groups.end(), e.group) != groups.end());
  return out;
}

namespace {

bool is_exempt(const std::vector<bool>& exempt, std::size_t i) { return i < exempt.size() && exempt[i]; }

void check_exempt(const std::vector<bool>& exempt, std::size_t n) {
  if (!exempt.empty() && exempt.size() != n)
    throw ShapeError("mask: exemption list has " + std::to_string(exempt.size()) + " flags for " +
                     std::to_string(n) + " tensors");
}

}  // namespace

MaskPlan build_full_mask(const ParamRegistry& registry) {
  MaskPlan plan;
  plan.strategy = MaskStrategy::None;
  plan.keep_fraction = 1.0;
  for (const auto& e : registry) plan.masks.push_back(Mask::Constant(e.tensor.size(), true));
  return plan;
}

MaskPlan build_gmt_mask(const GradSet& accumulated, double keep_fraction, MaskScope scope,
                        const std::vector<bool>& exempt, FlopLedger* ledger) {
  check_exempt(exempt, accumulated.size());
  MaskPlan plan;
  plan.strategy = MaskStrategy::Gmt;
  plan.keep_fraction = keep_fraction;
  plan.scope = scope;
  plan.masks.resize(accumulated.size());
  std::uint64_t tests = 0;
  auto apply = [&](std::size_t i, double threshold) {
    plan.masks[i] = accumulated[i].array().abs() >= threshold;
    tests += 2 * static_cast<std::uint64_t>(accumulated[i].size());  // magnitude + compare
  };
  if (scope == MaskScope::Global) {
    std::vector<double> pool;
    for (std::size_t i = 0; i < accumulated.size(); ++i) {
      if (is_exempt(exempt, i)) continue;
      for (double g : accumulated[i]) pool.push_back(std::abs(g));
    }
    const double t = pool.empty() ? 0.0 : compute_threshold(pool, keep_fraction, ledger);
    plan.thresholds = {t};
    for (std::size_t i = 0; i < accumulated.size(); ++i) {
      if (is_exempt(exempt, i))
        plan.masks[i] = Mask::Constant(accumulated[i].size(), true);
      else
        apply(i, t);
    }
  } else {
    for (std::size_t i = 0; i < accumulated.size(); ++i) {
      if (is_exempt(exempt, i)) {
        plan.thresholds.push_back(0.0);
        plan.masks[i] = Mask::Constant(accumulated[i].size(), true);
        continue;
      }
      std::vector<double> pool(static_cast<std::size_t>(accumulated[i].size()));
      for (Index j = 0; j < accumulated[i].size(); ++j) pool[static_cast<std::size_t>(j)] = std::abs(accumulated[i][j]);
      const double t = compute_threshold(pool, keep_fraction, ledger);
      plan.thresholds.push_back(t);
      apply(i, t);
    }
  }
  if (ledger != nullptr) ledger->add_selection(tests);
  return plan;
}

MaskPlan build_rmt_mask(const ParamRegistry& registry, double keep_fraction, std::uint64_t seed,
                        std::uint64_t step, const std::vector<bool>& exempt, FlopLedger* ledger) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw std::invalid_argument("rmt: keep fraction must be in (0, 1], got " + std::to_string(keep_fraction));
  check_exempt(exempt, registry.size());
  MaskPlan plan;
  plan.strategy = MaskStrategy::Rmt;
  plan.keep_fraction = keep_fraction;
  plan.seed = seed;
  Rng rng(seed, mix64(step));
  std::uint64_t draws = 0;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    const Index n = registry[i].tensor.size();
    if (is_exempt(exempt, i)) {
      plan.masks.push_back(Mask::Constant(n, true));
      continue;
    }
    Mask m(n);
    for (Index j = 0; j < n; ++j) m[j] = rng.uniform() < keep_fraction;
    draws += 2 * static_cast<std::uint64_t>(n);
    plan.masks.push_back(std::move(m));
  }
  if (ledger != nullptr) ledger->add_selection(draws);
  return plan;
}

MaskPlan build_hft_mask(const ParamRegistry& registry, std::uint64_t seed) {
  if (registry.empty()) throw std::invalid_argument("hft: empty registry");
  std::vector<std::size_t> order(registry.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed, 0x4F7ull);
  rng.shuffle(order.begin(), order.end());
  const std::size_t trainable = (registry.size() + 1) / 2;
  std::vector<bool> selected(registry.size(), false);
  for (std::size_t i = 0; i < trainable; ++i) selected[order[i]] = true;
  MaskPlan plan;
  plan.strategy = MaskStrategy::Hft;
  plan.keep_fraction = 0.5;
  plan.seed = seed;
  for (std::size_t i = 0; i < registry.size(); ++i)
    plan.masks.push_back(Mask::Constant(registry[i].tensor.size(), selected[i]));
  return plan;
}

void write_mask_csv(std::ostream& out, const ParamRegistry& registry, const GradSet& accumulated,
                    const MaskPlan& plan) {
  out << "param_name,index,abs_grad,kept\n";
  for (std::size_t i = 0; i < registry.size(); ++i)
    for (Index j = 0; j < accumulated[i].size(); ++j)
      out << registry[i].name << ',' << j << ',' << format_double(std::abs(accumulated[i][j])) << ','
          << (plan.masks[i][j] ? 1 : 0) << '\n';
}

}  // namespace gmt
