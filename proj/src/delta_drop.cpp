// SPDX-License-Identifier: Apache-2.0
#include "gmt/delta_drop.hpp"

#include "gmt/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gmt {

Index DeltaParams::total() const {
  Index n = 0;
  for (const auto& d : delta) n += d.size();
  return n;
}

std::string_view drop_strategy_name(DropStrategy s) {
  switch (s) {
    case DropStrategy::Trivial: return "trivial";
    case DropStrategy::Salient: return "salient";
    case DropStrategy::Random: return "random";
  }
  return "trivial";
}

DropStrategy parse_drop_strategy(std::string_view name) {
  if (name == "trivial") return DropStrategy::Trivial;
  if (name == "salient") return DropStrategy::Salient;
  if (name == "random") return DropStrategy::Random;
  throw ConfigError("unknown drop strategy '" + std::string(name) + "' (valid: trivial, salient, random)");
}

void DropSpec::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("drop rate must be in [0, 1], got " + std::to_string(rate));
  if (rescale && rate == 1.0) throw ConfigError("drop rate 1 with rescale divides by zero");
}

namespace {

double exact_delta(double base, double ft) {
  double d = ft - base;
  if (base + d == ft) return d;
  double up = d, down = d;
  for (int i = 0; i < 4; ++i) {
    up = std::nextafter(up, std::numeric_limits<double>::infinity());
    down = std::nextafter(down, -std::numeric_limits<double>::infinity());
    if (base + up == ft) return up;
    if (base + down == ft) return down;
  }
  return d;
}

}  // namespace

DeltaParams compute_delta(const Checkpoint& base, const Checkpoint& finetuned) {
  require_same_layout(base, finetuned);
  DeltaParams out{base, finetuned, {}};
  for (std::size_t i = 0; i < base.entries.size(); ++i) {
    const Vector& b = base.entries[i].values;
    const Vector& f = finetuned.entries[i].values;
    Vector d(b.size());
    for (Index j = 0; j < b.size(); ++j) d[j] = exact_delta(b[j], f[j]);
    out.delta.push_back(std::move(d));
  }
  return out;
}

DropResult apply_drop(const DeltaParams& delta, const DropSpec& spec) {
  spec.validate();
  const Index total = delta.total();
  // Flat drop flags in registry order.
  std::vector<char> drop(static_cast<std::size_t>(total), 0);
  if (spec.strategy == DropStrategy::Random) {
    Rng rng(spec.seed, 0xD809ull);
    for (auto& f : drop) f = rng.uniform() < spec.rate ? 1 : 0;
  } else {
    std::vector<double> mag;
    mag.reserve(drop.size());
    for (const auto& d : delta.delta)
      for (double v : d) mag.push_back(std::abs(v));
    std::vector<std::size_t> order(mag.size());
    std::iota(order.begin(), order.end(), 0);
    const bool smallest = spec.strategy == DropStrategy::Trivial;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return smallest ? mag[a] < mag[b] : mag[a] > mag[b];
    });
    const auto count = static_cast<std::size_t>(floor_fraction(spec.rate, total));
    for (std::size_t k = 0; k < count; ++k) drop[order[k]] = 1;
  }
  DropResult out;
  out.total = total;
  out.merged = delta.finetuned;
  const double factor = spec.rescale ? 1.0 / (1.0 - spec.rate) : 1.0;
  std::size_t flat = 0;
  for (std::size_t i = 0; i < delta.delta.size(); ++i) {
    Vector& merged = out.merged.entries[i].values;
    const Vector& base = delta.base.entries[i].values;
    const Vector& d = delta.delta[i];
    for (Index j = 0; j < d.size(); ++j, ++flat) {
      if (drop[flat]) {
        merged[j] = base[j];
        ++out.dropped;
      } else if (spec.rescale) {
        merged[j] = base[j] + factor * d[j];
      }
    }
  }
  return out;
}

std::vector<DropCurveRow> drop_sweep(const DeltaParams& delta, std::span<const double> rates,
                                     std::span<const DropStrategy> strategies, Model& model,
                                     const Batch& eval_batch, std::uint64_t seed, bool rescale) {
  const Checkpoint saved = Checkpoint::from_registry(model.params());
  std::vector<DropCurveRow> rows;
  for (DropStrategy s : strategies) {
    for (double rate : rates) {
      const DropResult r = apply_drop(delta, DropSpec{rate, s, seed, rescale && rate < 1.0});
      r.merged.load_into(model.params());
      const EvalResult e = model.evaluate(eval_batch);
      rows.push_back({s, rate, e.loss, e.metric, r.kept_fraction()});
    }
  }
  saved.load_into(model.params());
  return rows;
}

}  // namespace gmt
