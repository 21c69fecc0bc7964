// SPDX-License-Identifier: Apache-2.0
#include "gmt/harness.hpp"

#include "gmt/csv.hpp"
#include "gmt/delta_drop.hpp"
#include "gmt/saliency.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>

namespace gmt {

namespace fs = std::filesystem;

int worker_limit() {
  if (const char* env = std::getenv("GMT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

namespace {

std::mutex log_mutex;

void progress(const ExperimentConfig& cfg, const std::string& msg) {
  if (!cfg.verbose) return;
  std::lock_guard lock(log_mutex);
  std::cerr << msg << '\n';
}

double keep_for(MaskStrategy strategy, double keep) {
  return strategy == MaskStrategy::Gmt || strategy == MaskStrategy::Rmt ? keep : 1.0;
}

std::string seed_dir(std::string_view label, std::uint64_t seed) {
  return std::string(label) + "_s" + std::to_string(seed);
}

}  // namespace

double measure_throughput(const RunReport& report) {
  return report.train_seconds > 0.0 ? double(report.train_samples) / report.train_seconds : 0.0;
}

void write_resolved_config(const ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.txt", std::ios::binary);
  out << cfg.to_text();
  if (!out) throw std::runtime_error("cannot write " + (dir / "config.txt").string());
}

RunResult run_single(const ExperimentConfig& cfg, MaskStrategy strategy, double keep_fraction,
                     std::uint64_t seed, const fs::path& dir) {
  RunResult r;
  r.label = std::string(strategy_name(strategy));
  r.strategy = strategy;
  r.keep_fraction = keep_fraction;
  r.seed = seed;
  r.dir = dir;

  const Dataset train_data = make_train_data(cfg, seed);
  const Dataset eval_data = make_eval_data(cfg, seed);
  auto model = make_model(cfg, seed);
  r.initial = Checkpoint::from_registry(model->params());

  TrainConfig tc = make_train_config(cfg, strategy, keep_fraction, seed);
  if (!dir.empty()) {
    fs::create_directories(dir);
    tc.log_csv = dir / "train_log.csv";
    tc.checkpoint_dir = dir / "checkpoints";
  }
  r.report = train(tc, *model, train_data, &eval_data);
  r.final_params = Checkpoint::from_registry(model->params());

  if (!dir.empty()) {
    {
      CsvWriter eval(dir / "eval.csv", {"step", "loss", "metric"});
      for (const auto& e : r.report.evals)
        eval.field(static_cast<long long>(e.step)).field(e.loss).field(e.metric).end_row();
    }
    r.final_params.save(dir / "final.ckpt");
    CsvWriter summary(dir / "summary.csv",
                      {"strategy", "keep_fraction", "seed", "final_eval_loss", "final_eval_metric",
                       "metric_name", "throughput", "train_seconds", "model_flops", "selection_flops",
                       "checksum"});
    summary.field(r.label)
        .field(keep_fraction)
        .field(static_cast<unsigned long long>(seed))
        .field(r.report.final_eval().loss)
        .field(r.report.final_eval().metric)
        .field(model->metric_name())
        .field(measure_throughput(r.report))
        .field(r.report.train_seconds)
        .field(static_cast<unsigned long long>(r.report.flops.model_total()))
        .field(static_cast<unsigned long long>(r.report.flops.selection()))
        .field(static_cast<unsigned long long>(r.final_params.checksum()))
        .end_row();
  }
  return r;
}

std::vector<CompareRow> run_compare(const ExperimentConfig& cfg) {
  cfg.validate();
  write_resolved_config(cfg, cfg.out);
  const std::size_t n_seeds = cfg.seeds.size();
  const std::size_t cells = cfg.strategies.size() * n_seeds;

  // Failures are captured per cell so the CSV can still be written.
  const auto results = parallel_cells<RunResult>(cells, worker_limit(), [&](std::size_t i) {
    const MaskStrategy s = cfg.strategies[i / n_seeds];
    const std::uint64_t seed = cfg.seeds[i % n_seeds];
    const std::string label(strategy_name(s));
    progress(cfg, "compare: " + label + " seed " + std::to_string(seed));
    try {
      return run_single(cfg, s, keep_for(s, cfg.keep_fraction()), seed, cfg.out / "runs" / seed_dir(label, seed));
    } catch (const std::exception& e) {
      RunResult failed;
      failed.label = label;
      failed.strategy = s;
      failed.seed = seed;
      failed.error = e.what();
      return failed;
    }
  });

  std::vector<CompareRow> rows;
  std::string first_error;
  for (const auto& r : results) {
    CompareRow row;
    row.strategy = r.label;
    row.seed = r.seed;
    row.keep_fraction = keep_for(r.strategy, cfg.keep_fraction());
    if (!r.ok()) {
      row.failed = true;
      if (first_error.empty()) first_error = r.label + " seed " + std::to_string(r.seed) + ": " + r.error;
    } else {
      row.final_eval_loss = r.report.final_eval().loss;
      row.final_eval_metric = r.report.final_eval().metric;
      row.throughput = measure_throughput(r.report);
      row.train_seconds = r.report.train_seconds;
      row.model_flops = r.report.flops.model_total();
      row.selection_flops = r.report.flops.selection();
      row.checksum = r.final_params.checksum();
    }
    rows.push_back(row);
  }

  // One-off drop applied to the vanilla run's delta.
  if (cfg.compare_drop) {
    for (const auto& r : results) {
      if (r.strategy != MaskStrategy::None || !r.ok()) continue;
      const DeltaParams delta = compute_delta(r.initial, r.final_params);
      DropSpec spec{cfg.drop_rate, cfg.drop_strategy, r.seed, cfg.rescale};
      const DropResult dropped = apply_drop(delta, spec);
      auto model = make_model(cfg, r.seed);
      dropped.merged.load_into(model->params());
      const EvalResult ev = model->evaluate(make_eval_data(cfg, r.seed).all());
      const fs::path dir = cfg.out / "runs" / seed_dir("drop", r.seed);
      fs::create_directories(dir);
      dropped.merged.save(dir / "final.ckpt");

      CompareRow row;
      row.strategy = "drop";
      row.seed = r.seed;
      row.keep_fraction = dropped.kept_fraction();
      row.final_eval_loss = ev.loss;
      row.final_eval_metric = ev.metric;
      row.throughput = measure_throughput(r.report);
      row.train_seconds = r.report.train_seconds;
      row.model_flops = r.report.flops.model_total();
      row.checksum = dropped.merged.checksum();
      rows.push_back(row);
    }
  }

  CsvWriter csv(cfg.out / "comparison.csv",
                {"strategy", "seed", "keep_fraction", "final_eval_loss", "final_eval_metric", "throughput",
                 "train_seconds", "model_flops", "selection_flops", "checksum", "status"});
  for (const auto& row : rows) {
    csv.field(row.strategy)
        .field(static_cast<unsigned long long>(row.seed))
        .field(row.keep_fraction)
        .field(row.final_eval_loss)
        .field(row.final_eval_metric)
        .field(row.throughput)
        .field(row.train_seconds)
        .field(static_cast<unsigned long long>(row.model_flops))
        .field(static_cast<unsigned long long>(row.selection_flops))
        .field(static_cast<unsigned long long>(row.checksum))
        .field(row.failed ? "failed" : "ok")
        .end_row();
  }
  if (!first_error.empty()) throw NumericError("compare: run failed (" + first_error + ")");
  return rows;
}

std::vector<SweepRow> run_mask_ratio_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  write_resolved_config(cfg, cfg.out);
  const std::size_t n_seeds = cfg.seeds.size();
  const auto rows = parallel_cells<SweepRow>(cfg.ratios.size() * n_seeds, worker_limit(), [&](std::size_t i) {
    const double ratio = cfg.ratios[i / n_seeds];
    const std::uint64_t seed = cfg.seeds[i % n_seeds];
    progress(cfg, "sweep-mask: ratio " + format_double(ratio) + " seed " + std::to_string(seed));
    const RunResult r = run_single(cfg, MaskStrategy::Gmt, 1.0 - ratio, seed);
    return SweepRow{ratio, seed, r.report.final_eval().loss, r.report.final_eval().metric,
                    r.final_params.checksum()};
  });
  CsvWriter csv(cfg.out / "mask_sweep.csv",
                {"mask_ratio", "seed", "final_eval_loss", "final_eval_metric", "checksum"});
  for (const auto& row : rows)
    csv.field(row.mask_ratio)
        .field(static_cast<unsigned long long>(row.seed))
        .field(row.final_eval_loss)
        .field(row.final_eval_metric)
        .field(static_cast<unsigned long long>(row.checksum))
        .end_row();
  return rows;
}

std::vector<DropSweepRow> run_drop_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  write_resolved_config(cfg, cfg.out);
  const std::vector<DropStrategy> strategies = {DropStrategy::Trivial, DropStrategy::Salient, DropStrategy::Random};

  const auto per_seed = parallel_cells<std::vector<DropSweepRow>>(
      cfg.seeds.size(), worker_limit(), [&](std::size_t i) {
        const std::uint64_t seed = cfg.seeds[i];
        progress(cfg, "sweep-drop: seed " + std::to_string(seed));
        auto model = make_model(cfg, seed);

        const Dataset pre_train = make_train_data(cfg, seed);
        TrainConfig pre = make_train_config(cfg, MaskStrategy::None, 1.0, seed);
        pre.steps = cfg.pretrain_steps;
        train(pre, *model, pre_train);
        const Checkpoint base = Checkpoint::from_registry(model->params());

        DatasetOptions shifted = dataset_options(cfg);
        shifted.teacher_shift = cfg.finetune_shift;
        const Dataset ft_train = make_dataset(cfg.task, seed, cfg.n_train, Split::Train, shifted);
        const Dataset ft_eval = make_dataset(cfg.task, seed, cfg.n_eval, Split::Eval, shifted);
        train(make_train_config(cfg, MaskStrategy::None, 1.0, seed), *model, ft_train);
        const Checkpoint finetuned = Checkpoint::from_registry(model->params());

        const fs::path dir = cfg.out / "runs" / seed_dir("drop", seed);
        fs::create_directories(dir);
        base.save(dir / "base.ckpt");
        finetuned.save(dir / "finetuned.ckpt");

        const DeltaParams delta = compute_delta(base, finetuned);
        const auto curve = drop_sweep(delta, cfg.drop_rates, strategies, *model, ft_eval.all(), seed, cfg.rescale);
        std::vector<DropSweepRow> rows;
        for (const auto& c : curve)
          rows.push_back({seed, c.strategy, c.rate, c.eval_loss, c.eval_metric, c.kept_fraction});
        return rows;
      });

  std::vector<DropSweepRow> rows;
  for (const auto& block : per_seed) rows.insert(rows.end(), block.begin(), block.end());
  CsvWriter csv(cfg.out / "drop_sweep.csv",
                {"seed", "strategy", "rate", "eval_loss", "eval_metric", "kept_fraction"});
  for (const auto& row : rows)
    csv.field(static_cast<unsigned long long>(row.seed))
        .field(drop_strategy_name(row.strategy))
        .field(row.rate)
        .field(row.eval_loss)
        .field(row.eval_metric)
        .field(row.kept_fraction)
        .end_row();
  return rows;
}

std::vector<FlopsRow> run_flops(const ExperimentConfig& cfg) {
  cfg.validate();
  write_resolved_config(cfg, cfg.out);
  std::vector<FlopsRow> rows;
  std::vector<FlopLedger> ledgers;
  // Sequential on purpose: throughput is compared across these runs.
  for (MaskStrategy s : cfg.strategies) {
    progress(cfg, "flops: " + std::string(strategy_name(s)));
    const RunResult r = run_single(cfg, s, keep_for(s, cfg.keep_fraction()), cfg.seed);
    FlopsRow row;
    row.strategy = r.label;
    row.model_flops = r.report.flops.model_total();
    row.selection_flops = r.report.flops.selection();
    row.selection_ratio = row.model_flops ? double(row.selection_flops) / double(row.model_flops) : 0.0;
    row.train_samples = r.report.train_samples;
    row.train_seconds = r.report.train_seconds;
    row.throughput = measure_throughput(r.report);
    rows.push_back(row);
    ledgers.push_back(r.report.flops);
  }
  {
    CsvWriter csv(cfg.out / "flops.csv",
                  {"strategy", "model_flops", "selection_flops", "selection_ratio", "train_samples",
                   "train_seconds", "throughput"});
    for (const auto& row : rows)
      csv.field(row.strategy)
          .field(static_cast<unsigned long long>(row.model_flops))
          .field(static_cast<unsigned long long>(row.selection_flops))
          .field(row.selection_ratio)
          .field(static_cast<long long>(row.train_samples))
          .field(row.train_seconds)
          .field(row.throughput)
          .end_row();
  }
  CsvWriter ops(cfg.out / "flops_ops.csv", {"strategy", "op", "forward", "backward"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < static_cast<int>(OpKind::kCount); ++k) {
      const auto kind = static_cast<OpKind>(k);
      ops.field(rows[i].strategy)
          .field(op_name(kind))
          .field(static_cast<unsigned long long>(ledgers[i].forward(kind)))
          .field(static_cast<unsigned long long>(ledgers[i].backward(kind)))
          .end_row();
    }
  }
  return rows;
}

std::vector<GradCheckCase> run_grad_check_suite(std::uint64_t seed, Index transformer_sample) {
  std::vector<GradCheckCase> cases;
  auto add = [&](std::string name, Model& model, const Batch& batch, Index sample) {
    GradCheckCase c;
    c.name = std::move(name);
    c.parameters = model.params().parameter_count();
    c.result = check_gradients(model, batch, sample, seed);
    cases.push_back(std::move(c));
  };
  auto mlp = [&](std::vector<Index> sizes, Activation act, LossKind loss, int one_hot, std::uint64_t s) {
    MlpConfig m;
    m.layer_sizes = std::move(sizes);
    m.activation = act;
    m.loss = loss;
    m.one_hot_vocab = one_hot;
    m.seed = s;
    return Mlp(m);
  };
  auto first = [](const Dataset& d, std::size_t n) {
    std::vector<std::size_t> idx(std::min(n, d.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return d.batch(idx);
  };

  DatasetOptions opt;
  opt.noise = 0.1;
  {
    Mlp m = mlp({4, 16, 16, 1}, Activation::Tanh, LossKind::Mse, 0, seed);
    add("mlp-tanh-regression", m, first(make_dataset(TaskKind::Regression, seed, 16, Split::Train, opt), 16), 0);
  }
  {
    Mlp m = mlp({4, 12, 8, 1}, Activation::Gelu, LossKind::Mse, 0, seed + 1);
    add("mlp-gelu-regression", m, first(make_dataset(TaskKind::Regression, seed + 1, 16, Split::Train, opt), 16), 0);
  }
  {
    Mlp m = mlp({2, 16, 16, 2}, Activation::Gelu, LossKind::CrossEntropy, 0, seed + 2);
    add("mlp-gelu-gaussians", m, first(make_dataset(TaskKind::Gaussians, seed + 2, 16, Split::Train, opt), 16), 0);
  }
  {
    Mlp m = mlp({14, 12, 7}, Activation::Tanh, LossKind::CrossEntropy, 7, seed + 3);
    add("mlp-tanh-modadd", m, first(make_dataset(TaskKind::ModAdd, seed + 3, 16, Split::Train, opt), 16), 0);
  }
  {
    TransformerConfig t;
    t.vocab = 7;
    t.d_model = 16;
    t.n_heads = 2;
    t.n_layers = 2;
    t.context_len = 2;
    t.seed = seed + 4;
    TinyTransformer m(t);
    add("tinytf-modadd", m, first(make_dataset(TaskKind::ModAdd, seed + 4, 16, Split::Train, opt), 16),
        transformer_sample);
  }
  {
    DatasetOptions lm;
    lm.context_len = 12;
    TransformerConfig t;
    t.vocab = static_cast<int>(corpus_alphabet().size());
    t.d_model = 32;
    t.n_heads = 4;
    t.n_layers = 2;
    t.context_len = 12;
    t.seed = seed + 5;
    TinyTransformer m(t);
    add("tinytf-charlm", m, first(make_dataset(TaskKind::CharLm, seed + 5, 4, Split::Train, lm), 4),
        transformer_sample);
  }
  return cases;
}

SaliencyCheck run_saliency_check(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& out) {
  auto model = make_model(cfg, seed);
  const Batch data = make_train_data(cfg, seed).all();
  const SaliencyReport rep = saliency_first_order(*model, data);
  const GradSet exact = ablation_delta(*model, data);
  const Vector predicted = flatten(rep.predicted_delta);
  const Vector measured = flatten(exact);
  SaliencyCheck check;
  check.parameters = model->params().parameter_count();
  check.spearman = spearman(std::span<const double>(predicted.data(), static_cast<std::size_t>(predicted.size())),
                            std::span<const double>(measured.data(), static_cast<std::size_t>(measured.size())));
  if (!out.empty()) {
    fs::create_directories(out);
    CsvWriter csv(out / "saliency.csv", {"param_name", "index", "saliency", "predicted_delta", "exact_delta"});
    const auto& params = model->params();
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (Index i = 0; i < rep.saliency[p].size(); ++i)
        csv.field(params[p].name)
            .field(static_cast<long long>(i))
            .field(rep.saliency[p][i])
            .field(rep.predicted_delta[p][i])
            .field(exact[p][i])
            .end_row();
    }
  }
  return check;
}

namespace {

double to_double(const std::string& s) { return std::stod(s); }

std::ofstream open_plot(const fs::path& path, std::vector<fs::path>& written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  written.push_back(path);
  return out;
}

}  // namespace

std::vector<fs::path> emit_plot_data(const fs::path& csv, const fs::path& dir, const std::string& tag) {
  const CsvTable table = CsvTable::read(csv);
  auto has = [&](std::string_view name) {
    return std::find(table.header.begin(), table.header.end(), name) != table.header.end();
  };
  fs::create_directories(dir);
  std::vector<fs::path> written;

  if (has("mask_ratio")) {
    const std::size_t x = table.column("mask_ratio"), y = table.column("final_eval_metric");
    std::map<double, std::pair<double, int>> mean;
    for (const auto& row : table.rows) {
      auto& m = mean[to_double(row[x])];
      m.first += to_double(row[y]);
      ++m.second;
    }
    auto out = open_plot(dir / ("mask_sweep_" + tag + ".dat"), written);
    out << "# mask_ratio final_eval_metric\n";
    for (const auto& [ratio, m] : mean) out << format_double(ratio) << ' ' << format_double(m.first / m.second) << '\n';
  } else if (has("rate") && has("strategy")) {
    const std::size_t s = table.column("strategy"), x = table.column("rate"), y = table.column("eval_loss");
    std::map<std::string, std::map<double, std::pair<double, int>>> series;
    for (const auto& row : table.rows) {
      auto& m = series[row[s]][to_double(row[x])];
      m.first += to_double(row[y]);
      ++m.second;
    }
    for (const auto& [name, points] : series) {
      auto out = open_plot(dir / ("drop_" + name + ".dat"), written);
      out << "# rate eval_loss\n";
      for (const auto& [rate, m] : points) out << format_double(rate) << ' ' << format_double(m.first / m.second) << '\n';
    }
  } else if (has("strategy") && has("final_eval_metric")) {
    const std::size_t s = table.column("strategy"), seed = table.column("seed"), y = table.column("final_eval_metric");
    std::vector<std::string> strategies, seeds;
    std::map<std::pair<std::string, std::string>, std::string> cell;
    for (const auto& row : table.rows) {
      if (std::find(strategies.begin(), strategies.end(), row[s]) == strategies.end()) strategies.push_back(row[s]);
      if (std::find(seeds.begin(), seeds.end(), row[seed]) == seeds.end()) seeds.push_back(row[seed]);
      cell[{row[s], row[seed]}] = row[y];
    }
    auto out = open_plot(dir / "comparison_bars.dat", written);
    out << "# strategy";
    for (const auto& sd : seeds) out << " seed" << sd;
    out << '\n';
    for (const auto& st : strategies) {
      out << st;
      for (const auto& sd : seeds) {
        const auto it = cell.find({st, sd});
        out << ' ' << (it == cell.end() ? std::string("nan") : it->second);
      }
      out << '\n';
    }
  } else {
    throw ConfigError("emit_plot_data: unrecognized CSV layout in " + csv.string());
  }
  return written;
}

}  // namespace gmt
