// SPDX-License-Identifier: Apache-2.0
#include "doctest.h"

#include "gmt/datasets.hpp"
#include "gmt/grad_masking.hpp"
#include "gmt/models.hpp"
#include "gmt/rng.hpp"
#include "gmt/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

using namespace gmt;

namespace {

// Threshold by sorting everything: the keep-th largest magnitude.
double sorted_threshold(std::vector<double> abs_values, double k) {
  if (k == 1.0) return 0.0;
  std::sort(abs_values.begin(), abs_values.end(), std::greater<>());
  const auto keep = static_cast<std::size_t>(std::ceil(k * double(abs_values.size()) - 1e-9));
  return abs_values[keep - 1];
}

GradSet random_grads(Rng& rng, std::size_t tensors, int style) {
  GradSet g;
  for (std::size_t t = 0; t < tensors; ++t) {
    Vector v(1 + static_cast<Index>(rng.below(40)));
    for (Index i = 0; i < v.size(); ++i) {
      switch (style) {
        case 0: v[i] = rng.normal(); break;
        case 1: v[i] = double(static_cast<int>(rng.below(5)) - 2); break;  // heavy ties
        case 2: v[i] = 0.0; break;
        default: v[i] = rng.uniform() < 0.5 ? 0.75 : -0.75; break;  // all |g| equal
      }
    }
    g.push_back(v);
  }
  return g;
}

std::vector<double> abs_of(const Vector& v) {
  std::vector<double> out(static_cast<std::size_t>(v.size()));
  for (Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = std::abs(v[i]);
  return out;
}

void check_against_sort(const GradSet& g, double k, MaskScope scope) {
  const MaskPlan plan = build_gmt_mask(g, k, scope);
  REQUIRE(plan.masks.size() == g.size());
  std::vector<std::vector<double>> groups;
  if (scope == MaskScope::Global) {
    std::vector<double> all;
    for (const auto& v : g) {
      const auto a = abs_of(v);
      all.insert(all.end(), a.begin(), a.end());
    }
    groups.push_back(all);
  } else {
    for (const auto& v : g) groups.push_back(abs_of(v));
  }
  std::vector<double> oracle;
  for (const auto& grp : groups) oracle.push_back(sorted_threshold(grp, k));
  REQUIRE(plan.thresholds.size() == oracle.size());
  for (std::size_t i = 0; i < oracle.size(); ++i) CHECK(plan.thresholds[i] == oracle[i]);

  for (std::size_t t = 0; t < g.size(); ++t) {
    const double T = scope == MaskScope::Global ? oracle[0] : oracle[t];
    for (Index i = 0; i < g[t].size(); ++i) CHECK(plan.masks[t][i] == (std::abs(g[t][i]) >= T));
  }

  // Keep count: at least ceil(k n), exceeded only by entries tied at T.
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& grp = groups[gi];
    const double T = oracle[gi];
    const auto target = static_cast<std::size_t>(std::ceil(k * double(grp.size()) - 1e-9));
    const auto kept = static_cast<std::size_t>(std::count_if(grp.begin(), grp.end(), [&](double a) { return a >= T; }));
    const auto ties = static_cast<std::size_t>(std::count(grp.begin(), grp.end(), T));
    CHECK(kept >= target);
    if (k < 1.0) CHECK(kept <= target + ties - 1);
  }
}

ParamRegistry registry_with(std::vector<Shape> shapes) {
  ParamRegistry r;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    r.add("p" + std::to_string(i), shapes[i], i % 2 ? ParamGroup::Bias : ParamGroup::Weight);
  return r;
}

Mlp small_mlp(std::uint64_t seed) {
  MlpConfig c;
  c.layer_sizes = {4, 12, 8, 1};
  c.seed = seed;
  return Mlp(c);
}

}  // namespace

TEST_CASE("threshold matches a full sort on random inputs") {
  Rng rng(2024);
  for (int style = 0; style < 4; ++style) {
    for (int trial = 0; trial < 50; ++trial) {
      const GradSet g = random_grads(rng, 1 + rng.below(5), style);
      const double k = trial % 10 == 0 ? 1.0 : 0.01 + 0.99 * rng.uniform();
      check_against_sort(g, k, MaskScope::Global);
      check_against_sort(g, k, MaskScope::PerTensor);
    }
  }
}

TEST_CASE("threshold edge cases") {
  const std::vector<double> ties(10, 0.5);
  CHECK(compute_threshold(ties, 0.3) == 0.5);
  const std::vector<double> zeros(10, 0.0);
  CHECK(compute_threshold(zeros, 0.3) == 0.0);
  const std::vector<double> v{0.1, 0.9, 0.4, 0.7, 0.3};
  CHECK(compute_threshold(v, 1.0) == 0.0);
  CHECK(compute_threshold(v, 0.2) == 0.9);
  CHECK(compute_threshold(v, 0.4) == 0.7);
  CHECK(compute_threshold(v, 0.41) == 0.4);  // ceil(2.05) = 3
  CHECK_THROWS(compute_threshold(v, 0.0));
  CHECK_THROWS(compute_threshold(v, 1.5));
  CHECK_THROWS(compute_threshold(std::vector<double>{}, 0.5));

  FlopLedger ledger;
  compute_threshold(v, 0.4, &ledger);
  CHECK(ledger.selection() > 0);
  CHECK(ledger.model_total() == 0);
}

TEST_CASE("all-zero gradients keep everything") {
  GradSet g{Vector::Zero(5), Vector::Zero(3)};
  const MaskPlan plan = build_gmt_mask(g, 0.25, MaskScope::Global);
  CHECK(plan.kept_count() == 8);
  CHECK(plan.kept_fraction() == 1.0);
}

TEST_CASE("exempt tensors bypass the threshold") {
  GradSet g{Vector::LinSpaced(10, 1.0, 10.0), Vector::Constant(4, 1e-9)};
  const MaskPlan plan = build_gmt_mask(g, 0.2, MaskScope::Global, {false, true});
  CHECK(plan.masks[1].all());
  CHECK(plan.masks[0].count() == 2);
  CHECK(plan.thresholds[0] == 9.0);

  const MaskPlan per = build_gmt_mask(g, 0.2, MaskScope::PerTensor, {false, true});
  CHECK(per.thresholds[1] == 0.0);
  CHECK(per.masks[1].all());

  ParamRegistry r = registry_with({{3, 2}, {2}, {4}});
  const std::vector<ParamGroup> bias{ParamGroup::Bias};
  CHECK(exempt_by_group(r, bias) == std::vector<bool>{false, true, false});
}

TEST_CASE("accumulated gradient equals the full-batch gradient") {
  Mlp m = small_mlp(5);
  const Dataset d = make_dataset(TaskKind::Regression, 5, 24, Split::Train);
  const int N = 4;
  GradAccumulator acc(m.params(), N);
  for (int n = 0; n < N; ++n) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < 6; ++i) idx.push_back(std::size_t(n) * 6 + i);
    m.params().zero_grad();
    Graph64 g;
    g.backward(m.loss(g, d.batch(idx)));
    acc.accumulate_from(m.params());
  }
  CHECK(acc.ready());
  const GradSet gamma = acc.finalize();
  const GradSet full = full_batch_gradient(m, d.all());
  for (const auto& e : m.params()) CHECK(e.tensor.grad().isZero(0.0));
  for (std::size_t t = 0; t < gamma.size(); ++t)
    CHECK((gamma[t] - full[t]).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + full[t].cwiseAbs().maxCoeff()));

  CHECK_THROWS_AS(acc.accumulate(gamma), std::logic_error);
  acc.reset();
  CHECK(acc.batches_seen() == 0);
  acc.accumulate(gamma);
  CHECK_THROWS(acc.finalize());
}

TEST_CASE("accumulator averages exactly") {
  ParamRegistry r = registry_with({{3}});
  GradAccumulator acc(r, 2);
  Vector a(3), b(3);
  a << 1.0, -2.0, 4.0;
  b << 3.0, 2.0, 0.0;
  acc.accumulate({a});
  acc.accumulate({b});
  Vector expect(3);
  expect << 2.0, 0.0, 2.0;
  CHECK(acc.finalize()[0] == expect);
  CHECK_THROWS(GradAccumulator(r, 0));
}

TEST_CASE("random mask keep count stays within a binomial bound") {
  ParamRegistry r = registry_with({{100, 50}, {50}, {40, 40}});
  const double n = double(r.parameter_count());
  for (double k : {0.1, 0.5, 0.9}) {
    for (std::uint64_t step = 1; step <= 5; ++step) {
      const MaskPlan plan = build_rmt_mask(r, k, 17, step);
      const double sigma = std::sqrt(n * k * (1.0 - k));
      CHECK(std::abs(double(plan.kept_count()) - k * n) <= 5.0 * sigma);
    }
  }
  const MaskPlan a = build_rmt_mask(r, 0.5, 17, 1), b = build_rmt_mask(r, 0.5, 17, 1), c = build_rmt_mask(r, 0.5, 17, 2);
  CHECK((a.masks[0] == b.masks[0]).all());
  CHECK_FALSE((a.masks[0] == c.masks[0]).all());

  const MaskPlan ex = build_rmt_mask(r, 0.1, 3, 1, {false, true, false});
  CHECK(ex.masks[1].all());
}

TEST_CASE("half-tensor freeze picks whole tensors") {
  ParamRegistry r = registry_with({{3, 3}, {3}, {3, 2}, {2}, {4}});
  const MaskPlan plan = build_hft_mask(r, 9);
  int trainable = 0;
  for (const auto& m : plan.masks) {
    CHECK((m.all() || !m.any()));
    trainable += m.all();
  }
  CHECK(trainable == 3);
  const MaskPlan again = build_hft_mask(r, 9);
  for (std::size_t t = 0; t < plan.masks.size(); ++t) CHECK((plan.masks[t] == again.masks[t]).all());

  bool differs = false;
  for (std::uint64_t s = 10; s < 20 && !differs; ++s) {
    const MaskPlan other = build_hft_mask(r, s);
    for (std::size_t t = 0; t < plan.masks.size(); ++t) differs |= plan.masks[t][0] != other.masks[t][0];
  }
  CHECK(differs);
}

TEST_CASE("mask csv dump") {
  ParamRegistry r = registry_with({{2}, {1}});
  GradSet g{Vector::Zero(2), Vector::Zero(1)};
  g[0] << -3.0, 1.0;
  g[1] << 2.0;
  const MaskPlan plan = build_gmt_mask(g, 0.5, MaskScope::Global);
  std::ostringstream out;
  write_mask_csv(out, r, g, plan);
  CHECK(out.str() == "param_name,index,abs_grad,kept\np0,0,3,1\np0,1,1,0\np1,0,2,1\n");
}

TEST_CASE("strategy and scope names round trip") {
  for (MaskStrategy s : {MaskStrategy::None, MaskStrategy::Gmt, MaskStrategy::Rmt, MaskStrategy::Hft})
    CHECK(parse_strategy(strategy_name(s)) == s);
  CHECK(parse_scope("per-tensor") == MaskScope::PerTensor);
  CHECK(parse_scope("global") == MaskScope::Global);
  CHECK_THROWS_AS(parse_strategy("lora"), ConfigError);
}

TEST_CASE("spearman rank correlation") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{10, 20, 30, 40, 50}, c{5, 4, 3, 2, 1};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
  const std::vector<double> tied{1, 2, 2, 3}, plain{1, 2, 3, 4};
  CHECK(spearman(tied, plain) == doctest::Approx(4.5 / std::sqrt(22.5)));
  const std::vector<double> square{-3, -1, 0, 2, 7}, cubic{-27, -1, 0, 8, 343};
  CHECK(spearman(square, cubic) == doctest::Approx(1.0));
}

TEST_CASE("ablation delta matches a direct zeroing loop") {
  Mlp m = small_mlp(2);
  const Batch b = make_dataset(TaskKind::Regression, 2, 30, Split::Train).all();
  const GradSet exact = ablation_delta(m, b);
  const double base = m.loss_value(b);
  auto& w = m.params().at("layers.1.weight");
  const double saved = w.flat_values()[5];
  w.flat_values()[5] = 0.0;
  const double zeroed = m.loss_value(b);
  w.flat_values()[5] = saved;
  CHECK(exact[2][5] == zeroed - base);
  CHECK(m.loss_value(b) == base);
}

TEST_CASE("first-order saliency ranks like exhaustive ablation") {
  for (std::uint64_t seed : {1, 2, 3}) {
    Mlp m = small_mlp(seed);
    REQUIRE(m.params().parameter_count() <= 200);
    const Batch b = make_dataset(TaskKind::Regression, seed, 64, Split::Train).all();
    const SaliencyReport rep = saliency_first_order(m, b);
    const Vector pred = flatten(rep.predicted_delta), exact = flatten(ablation_delta(m, b));
    const Vector sal = flatten(rep.saliency);
    const Vector g = flatten(full_batch_gradient(m, b)), theta = m.params().flat_values();
    for (Index i = 0; i < sal.size(); ++i) {
      CHECK(sal[i] == std::abs(g[i]));
      CHECK(pred[i] == -g[i] * theta[i]);
    }
    CHECK(spearman({pred.data(), std::size_t(pred.size())}, {exact.data(), std::size_t(exact.size())}) > 0.8);
  }
}
