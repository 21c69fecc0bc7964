// SPDX-License-Identifier: Apache-2.0
#include "gmt/gradcheck.hpp"

#include "gmt/rng.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace gmt {

GradCheckResult check_gradients(Model& model, const Batch& batch, Index sample, std::uint64_t seed,
                                double h) {
  ParamRegistry& params = model.params();
  params.zero_grad();
  {
    Graph64 graph;
    graph.backward(model.loss(graph, batch));
  }
  std::vector<std::pair<std::size_t, Index>> targets;
  const Index total = params.parameter_count();
  if (sample <= 0 || sample >= total) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (Index j = 0; j < params[i].tensor.size(); ++j) targets.emplace_back(i, j);
  } else {
    Rng rng(seed, 0x6C4Eull);
    for (Index s = 0; s < sample; ++s) {
      Index flat = static_cast<Index>(rng.below(static_cast<std::uint64_t>(total)));
      std::size_t i = 0;
      while (flat >= params[i].tensor.size()) flat -= params[i++].tensor.size();
      targets.emplace_back(i, flat);
    }
  }
  GradCheckResult result;
  for (const auto& [i, j] : targets) {
    auto theta = params[i].tensor.flat_values();
    const double analytic = params[i].tensor.flat_grad()[static_cast<std::size_t>(j)];
    double& t = theta[static_cast<std::size_t>(j)];
    const double saved = t;
    t = saved + h;
    const double up = model.loss_value(batch);
    t = saved - h;
    const double down = model.loss_value(batch);
    t = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++result.checked;
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = params[i].name;
      result.worst_index = j;
      result.worst_autodiff = analytic;
      result.worst_numeric = numeric;
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace gmt
