// SPDX-License-Identifier: Apache-2.0
#include "gmt/trainer.hpp"

#include "gmt/csv.hpp"
#include "gmt/rng.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>

namespace gmt {

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (accum < 1) throw ConfigError("accumulation interval N must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("learning rate must be positive");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw ConfigError("keep fraction must be in (0, 1], got " + std::to_string(keep_fraction));
  if (eval_every < 0 || checkpoint_every < 0) throw ConfigError("cadences must be >= 0");
}

BatchSampler::BatchSampler(std::size_t dataset_size, int batch_size, std::uint64_t seed)
    : size_(dataset_size), batch_(static_cast<std::size_t>(batch_size)), seed_(seed) {
  if (batch_ == 0 || batch_ > size_)
    throw ConfigError("batch size " + std::to_string(batch_size) + " must be in [1, " +
                      std::to_string(dataset_size) + "]");
  order_.resize(size_);
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(seed_, 0xBA7C4000ull + epoch_);
  rng.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
  ++epoch_;
}

std::vector<std::size_t> BatchSampler::next() {
  if (cursor_ + batch_ > size_) reshuffle();
  std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
  cursor_ += batch_;
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

MaskPlan plan_for_step(const TrainConfig& cfg, const ParamRegistry& params, const GradSet& gamma,
                       const std::vector<bool>& exempt, std::int64_t step, FlopLedger& ledger) {
  switch (cfg.strategy) {
    case MaskStrategy::Gmt:
      return build_gmt_mask(gamma, cfg.keep_fraction, cfg.scope, exempt, &ledger);
    case MaskStrategy::Rmt:
      return build_rmt_mask(params, cfg.keep_fraction, cfg.seed, static_cast<std::uint64_t>(step), exempt,
                            &ledger);
    case MaskStrategy::None:
    case MaskStrategy::Hft:
      break;
  }
  throw std::logic_error("plan_for_step: fixed-mask strategy");
}

}  // namespace

RunReport train(const TrainConfig& cfg, Model& model, const Dataset& train_data, const Dataset* eval_data) {
  cfg.validate();
  ParamRegistry& params = model.params();
  RunReport report;
  OptimizerState opt(params, cfg.optimizer);
  const Schedule schedule(cfg.base_lr, cfg.steps, cfg.warmup_ratio);
  BatchSampler sampler(train_data.size(), cfg.batch_size, cfg.seed);
  GradAccumulator acc(params, cfg.accum);
  const auto exempt = exempt_by_group(params, cfg.exempt_groups);

  std::optional<MaskPlan> fixed_plan;
  if (cfg.strategy == MaskStrategy::None) fixed_plan = build_full_mask(params);
  if (cfg.strategy == MaskStrategy::Hft) fixed_plan = build_hft_mask(params, cfg.seed);

  std::unique_ptr<CsvWriter> log;
  if (!cfg.log_csv.empty()) log = std::make_unique<CsvWriter>(cfg.log_csv, std::initializer_list<std::string_view>{"step", "loss", "lr", "kept_fraction"});
  if (!cfg.mask_dump_dir.empty()) std::filesystem::create_directories(cfg.mask_dump_dir);
  if (!cfg.checkpoint_dir.empty() && cfg.checkpoint_every > 0) std::filesystem::create_directories(cfg.checkpoint_dir);

  auto run_eval = [&](std::int64_t step) {
    if (eval_data == nullptr) return;
    const EvalResult r = model.evaluate(eval_data->all());
    report.evals.push_back({step, r.loss, r.metric});
  };

  for (std::int64_t step = 1; step <= cfg.steps; ++step) {
    const auto t0 = Clock::now();
    double loss_sum = 0.0;
    acc.reset();
    try {
      for (int n = 0; n < cfg.accum; ++n) {
        const auto idx = sampler.next();
        const Batch batch = train_data.batch(idx);
        params.zero_grad();
        Graph64 graph(&report.flops);
        Var loss = model.loss(graph, batch);
        graph.backward(loss);
        loss_sum += loss.item();
        acc.accumulate_from(params);
      }
    } catch (const NumericError& e) {
      throw NumericError("diverged at step " + std::to_string(step) + ": " + e.what());
    }
    const double mean_loss = loss_sum / double(cfg.accum);
    if (!std::isfinite(mean_loss)) throw NumericError("diverged at step " + std::to_string(step) + ": loss is not finite");
    const GradSet gamma = acc.finalize();
    const MaskPlan plan = fixed_plan ? *fixed_plan : plan_for_step(cfg, params, gamma, exempt, step, report.flops);
    const double lr = schedule.lr_at(step);

    std::optional<Checkpoint> before;
    std::optional<OptimizerState> opt_before;
    if (cfg.observer) {
      before = Checkpoint::from_registry(params);
      opt_before = opt;
    }
    opt.apply_step(params, gamma, plan, lr);
    report.train_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    report.train_samples += static_cast<std::int64_t>(cfg.accum) * cfg.batch_size;
    params.zero_grad();

    const double kept = plan.kept_fraction();
    report.losses.push_back(mean_loss);
    report.lrs.push_back(lr);
    report.kept_fractions.push_back(kept);
    if (cfg.observer) cfg.observer(StepEvent{step, gamma, plan, *before, *opt_before, params, opt});
    if (log) log->field(static_cast<long long>(step)).field(mean_loss).field(lr).field(kept).end_row();
    if (!cfg.mask_dump_dir.empty()) {
      std::ofstream dump(cfg.mask_dump_dir / ("mask_step" + std::to_string(step) + ".csv"), std::ios::binary);
      write_mask_csv(dump, params, gamma, plan);
    }
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() && step % cfg.checkpoint_every == 0)
      Checkpoint::from_registry(params).save(cfg.checkpoint_dir / ("step" + std::to_string(step) + ".ckpt"));
    if (cfg.eval_every > 0 && step % cfg.eval_every == 0 && step != cfg.steps) run_eval(step);
  }
  run_eval(cfg.steps);
  report.final_checksum = params.checksum();
  report.throughput = report.train_seconds > 0.0 ? double(report.train_samples) / report.train_seconds : 0.0;
  return report;
}

}  // namespace gmt
