// SPDX-License-Identifier: Apache-2.0
#include "gmt/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gmt {

GradSet full_batch_gradient(Model& model, const Batch& data) {
  ParamRegistry& params = model.params();
  params.zero_grad();
  Graph64 graph;
  graph.backward(model.loss(graph, data));
  GradSet g = gradients_of(params);
  params.zero_grad();
  for (const auto& v : g)
    if (!v.allFinite()) throw NumericError("saliency: non-finite gradient");
  return g;
}

SaliencyReport saliency_first_order(Model& model, const Batch& data) {
  SaliencyReport report;
  const GradSet grad = full_batch_gradient(model, data);
  const ParamRegistry& params = model.params();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    auto theta = params[i].tensor.flat_values();
    Eigen::Map<const Vector> t(theta.data(), static_cast<Index>(theta.size()));
    report.saliency.push_back(grad[i].cwiseAbs());
    report.predicted_delta.push_back(-grad[i].cwiseProduct(t));
  }
  return report;
}

GradSet ablation_delta(Model& model, const Batch& data) {
  ParamRegistry& params = model.params();
  const double base = model.loss_value(data);
  GradSet out = zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].tensor.flat_values();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double saved = theta[j];
      theta[j] = 0.0;
      out[i][static_cast<Index>(j)] = model.loss_value(data) - base;
      theta[j] = saved;
    }
  }
  return out;
}

namespace {
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}
}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = double(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

Vector flatten(const GradSet& set) {
  Index n = 0;
  for (const auto& v : set) n += v.size();
  Vector out(n);
  Index at = 0;
  for (const auto& v : set) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

}  // namespace gmt
