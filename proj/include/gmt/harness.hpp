// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/checkpoint.hpp"
#include "gmt/config.hpp"
#include "gmt/gradcheck.hpp"
#include "gmt/trainer.hpp"

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace gmt {

/// Worker cap: GMT_THREADS when set to a positive integer, else the
/// hardware concurrency (at least 1).
int worker_limit();

/// Evaluates fn(0..n-1) on up to `workers` threads. Results are stored by
/// index, so the output order never depends on completion order. The first
/// exception (by index) is rethrown after all cells finish.
template <typename R>
std::vector<R> parallel_cells(std::size_t n, int workers, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// One training run and where its artifacts went.
struct RunResult {
  std::string label;  // none, gmt, rmt, hft or drop
  MaskStrategy strategy = MaskStrategy::None;
  double keep_fraction = 1.0;
  std::uint64_t seed = 0;
  RunReport report;
  Checkpoint initial;
  Checkpoint final_params;
  std::filesystem::path dir;
  std::string error;  // non-empty when the run failed

  bool ok() const { return error.empty(); }
};

/// Builds data and model from `cfg` and trains once. When `dir` is not
/// empty it receives train_log.csv, eval.csv, final.ckpt and summary.csv.
RunResult run_single(const ExperimentConfig& cfg, MaskStrategy strategy, double keep_fraction,
                     std::uint64_t seed, const std::filesystem::path& dir = {});

/// samples / second over the training loop only.
double measure_throughput(const RunReport& report);

/// Writes cfg.to_text() to dir/config.txt, creating dir.
void write_resolved_config(const ExperimentConfig& cfg, const std::filesystem::path& dir);

struct CompareRow {
  std::string strategy;
  std::uint64_t seed = 0;
  double keep_fraction = 1.0;
  double final_eval_loss = 0.0;
  double final_eval_metric = 0.0;
  double throughput = 0.0;
  double train_seconds = 0.0;
  std::uint64_t model_flops = 0;
  std::uint64_t selection_flops = 0;
  std::uint64_t checksum = 0;
  bool failed = false;
};

/// One row per (strategy, seed), strategy-major, plus a post-hoc delta drop
/// row per seed when cfg.compare_drop and NONE is among the strategies.
/// Writes out/comparison.csv. Failed cells are written with status=failed
/// and the first failure is rethrown afterwards.
std::vector<CompareRow> run_compare(const ExperimentConfig& cfg);

struct SweepRow {
  double mask_ratio = 0.0;
  std::uint64_t seed = 0;
  double final_eval_loss = 0.0;
  double final_eval_metric = 0.0;
  std::uint64_t checksum = 0;
};

/// GMT at keep = 1 - ratio for every (ratio, seed). Writes out/mask_sweep.csv.
std::vector<SweepRow> run_mask_ratio_sweep(const ExperimentConfig& cfg);

struct DropSweepRow {
  std::uint64_t seed = 0;
  DropStrategy strategy = DropStrategy::Trivial;
  double rate = 0.0;
  double eval_loss = 0.0;
  double eval_metric = 0.0;
  double kept_fraction = 1.0;
};

/// Per seed: train a base model for cfg.pretrain_steps, fine-tune it for
/// cfg.steps on the related task (regression teacher perturbed by
/// cfg.finetune_shift), then evaluate every drop strategy and rate on the
/// delta. Writes out/drop_sweep.csv and the two checkpoints per seed.
std::vector<DropSweepRow> run_drop_sweep(const ExperimentConfig& cfg);

struct FlopsRow {
  std::string strategy;
  std::uint64_t model_flops = 0;
  std::uint64_t selection_flops = 0;
  double selection_ratio = 0.0;
  std::int64_t train_samples = 0;
  double train_seconds = 0.0;
  double throughput = 0.0;
};

/// One run per strategy in cfg.strategies at cfg.seed. Writes out/flops.csv
/// and the per-op breakdown out/flops_ops.csv.
std::vector<FlopsRow> run_flops(const ExperimentConfig& cfg);

struct GradCheckCase {
  std::string name;
  Index parameters = 0;
  GradCheckResult result;
};

/// Seeded MLP and transformer cases; transformers are spot-checked on
/// `transformer_sample` parameters.
std::vector<GradCheckCase> run_grad_check_suite(std::uint64_t seed, Index transformer_sample = 200);

struct SaliencyCheck {
  Index parameters = 0;
  double spearman = 0.0;
};

/// Exhaustive ablation against the first-order prediction on the config's
/// model at initialization. Writes out/saliency.csv when out is not empty.
SaliencyCheck run_saliency_check(const ExperimentConfig& cfg, std::uint64_t seed,
                                 const std::filesystem::path& out = {});

/// Turns a CSV written by this harness into whitespace-separated plot files
/// in `dir` and returns their paths:
///   mask_sweep.csv  -> mask_sweep_<tag>.dat   (mask_ratio, mean metric)
///   comparison.csv  -> comparison_bars.dat    (strategy, metric per seed)
///   drop_sweep.csv  -> drop_<strategy>.dat    (rate, mean eval loss)
std::vector<std::filesystem::path> emit_plot_data(const std::filesystem::path& csv,
                                                  const std::filesystem::path& dir,
                                                  const std::string& tag = "task");

}  // namespace gmt
