// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/datasets.hpp"
#include "gmt/delta_drop.hpp"
#include "gmt/grad_masking.hpp"
#include "gmt/models.hpp"
#include "gmt/optimizers.hpp"
#include "gmt/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace gmt {

enum class ModelKind { Mlp, TinyTransformer };

std::string_view model_kind_name(ModelKind k);
ModelKind parse_model_kind(std::string_view name);

/// Mask-ratio grid: 0.1 ... 0.9 in steps of 0.1, then 0.95 and 0.99.
std::vector<double> default_mask_ratios();

/// All knobs of one experiment. Keys in the key=value file are the CLI long
/// option names without the leading dashes.
struct ExperimentConfig {
  TaskKind task = TaskKind::Regression;
  ModelKind model = ModelKind::Mlp;

  // model shape
  std::vector<Index> hidden = {32};
  Activation activation = Activation::Tanh;
  Index d_model = 16;
  int n_heads = 2;
  int n_layers = 1;
  Index context_len = 16;

  // data
  std::size_t n_train = 256;
  std::size_t n_eval = 128;
  double noise = 0.05;
  int modulus = 7;

  // training
  std::uint64_t seed = 7;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::int64_t steps = 300;
  int accum = 4;
  int batch_size = 16;
  double lr = 1e-2;
  double warmup_ratio = 0.03;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double weight_decay = 0.0;
  MaskSemantics mask_semantics = MaskSemantics::SkipUpdate;
  std::int64_t eval_every = 0;
  std::int64_t checkpoint_every = 0;

  // masking
  MaskStrategy strategy = MaskStrategy::None;
  double mask_ratio = 0.0;
  MaskScope scope = MaskScope::Global;
  std::vector<ParamGroup> exempt_groups;
  std::vector<MaskStrategy> strategies = {MaskStrategy::None, MaskStrategy::Gmt, MaskStrategy::Rmt,
                                          MaskStrategy::Hft};
  bool compare_drop = true;
  std::vector<double> ratios = default_mask_ratios();

  // delta drop
  DropStrategy drop_strategy = DropStrategy::Trivial;
  double drop_rate = 0.5;
  std::vector<double> drop_rates = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  bool rescale = false;
  std::int64_t pretrain_steps = 300;
  double finetune_shift = 0.5;  // regression teacher perturbation for the fine-tuning stage

  std::filesystem::path out = "gmt_out";
  bool verbose = false;

  double keep_fraction() const { return 1.0 - mask_ratio; }

  /// Throws ConfigError on the first invalid field.
  void validate() const;

  /// Sets one field from its textual key/value. Throws ConfigError for an
  /// unknown key or unparsable value.
  void set(std::string_view key, std::string_view value);

  /// Canonical key=value text, one key per line in a fixed order.
  std::string to_text() const;
};

/// Parses key=value lines ('#' starts a comment) on top of `base`.
ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base = {});

/// Every key accepted by ExperimentConfig::set, in to_text() order.
const std::vector<std::string>& config_keys();

DatasetOptions dataset_options(const ExperimentConfig& cfg);
Dataset make_train_data(const ExperimentConfig& cfg, std::uint64_t seed);
Dataset make_eval_data(const ExperimentConfig& cfg, std::uint64_t seed);
/// Model matching the task's input/output schema, initialized from `seed`.
std::unique_ptr<Model> make_model(const ExperimentConfig& cfg, std::uint64_t seed);
/// Trainer settings for one run.
TrainConfig make_train_config(const ExperimentConfig& cfg, MaskStrategy strategy, double keep_fraction,
                              std::uint64_t seed);

}  // namespace gmt
