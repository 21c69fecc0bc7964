// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/checkpoint.hpp"
#include "gmt/datasets.hpp"
#include "gmt/flops.hpp"
#include "gmt/grad_masking.hpp"
#include "gmt/models.hpp"
#include "gmt/optimizers.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace gmt {

/// Everything an observer can inspect around one optimizer step.
struct StepEvent {
  std::int64_t step = 0;  // 1-based
  const GradSet& accumulated;
  const MaskPlan& plan;
  const Checkpoint& params_before;
  const OptimizerState& optimizer_before;
  const ParamRegistry& params_after;
  const OptimizerState& optimizer_after;
};

struct TrainConfig {
  std::int64_t steps = 100;  // T
  int accum = 1;             // N
  int batch_size = 16;
  double base_lr = 1e-2;
  double warmup_ratio = 0.03;
  OptimizerConfig optimizer;
  MaskStrategy strategy = MaskStrategy::None;
  double keep_fraction = 1.0;
  MaskScope scope = MaskScope::Global;
  std::vector<ParamGroup> exempt_groups;
  std::uint64_t seed = 0;         // data order, RMT and HFT streams
  std::int64_t eval_every = 0;    // 0: evaluate only after the last step

  std::filesystem::path log_csv;  // step,loss,lr,kept_fraction; empty = off
  std::filesystem::path checkpoint_dir;
  std::int64_t checkpoint_every = 0;
  std::filesystem::path mask_dump_dir;  // per-step mask CSVs; empty = off

  /// Called after each step. Setting it makes every step snapshot the
  /// parameters and optimizer state beforehand.
  std::function<void(const StepEvent&)> observer;

  void validate() const;
};

struct EvalPoint {
  std::int64_t step = 0;
  double loss = 0.0;
  double metric = 0.0;
};

struct RunReport {
  std::vector<double> losses;  // mean mini-batch loss per step
  std::vector<double> lrs;
  std::vector<double> kept_fractions;
  std::vector<EvalPoint> evals;
  std::uint64_t final_checksum = 0;
  std::int64_t train_samples = 0;
  double train_seconds = 0.0;
  double throughput = 0.0;  // train samples / train wall-clock second
  FlopLedger flops;

  const EvalPoint& final_eval() const { return evals.back(); }
};

/// Runs T steps of: accumulate N mini-batch gradients, build the step's mask,
/// apply the masked update. Deterministic for a given config and model.
/// Throws NumericError naming the step if the loss or gradients go non-finite.
RunReport train(const TrainConfig& config, Model& model, const Dataset& train_data,
                const Dataset* eval_data = nullptr);

/// Seeded, epoch-reshuffled mini-batch index stream.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  void reshuffle();

  std::size_t size_;
  std::size_t batch_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace gmt
