// SPDX-License-Identifier: Apache-2.0
// gmt: training, comparison and sweep runner for gradient-masked fine-tuning.
#include "gmt/csv.hpp"
#include "gmt/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <string>

namespace {

using namespace gmt;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheck = 4;

constexpr double kGradCheckTolerance = 1e-5;
constexpr double kSaliencyMinSpearman = 0.8;

struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;  // key -> raw text
  std::vector<std::string> sets;              // --set key=value
};

void add_override(CLI::App& app, Overrides& o, const std::string& key, const std::string& help) {
  app.add_option("--" + key, o.values[key], help);
}

ExperimentConfig resolve(const CLI::App& app, const Overrides& o) {
  ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = load_config_file(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [key, value] : o.values)
    if (app.count("--" + key) > 0) cfg.set(key, value);
  cfg.validate();
  return cfg;
}

double default_keep(const ExperimentConfig& cfg) {
  return cfg.strategy == MaskStrategy::Gmt || cfg.strategy == MaskStrategy::Rmt ? cfg.keep_fraction() : 1.0;
}

void emit_plots(const std::filesystem::path& csv, const ExperimentConfig& cfg) {
  for (const auto& p : emit_plot_data(csv, cfg.out / "plots", std::string(task_name(cfg.task))))
    std::cout << "wrote " << p.string() << '\n';
}

int cmd_train(const ExperimentConfig& cfg) {
  write_resolved_config(cfg, cfg.out);
  const RunResult r = run_single(cfg, cfg.strategy, default_keep(cfg), cfg.seed, cfg.out);
  const auto& ev = r.report.final_eval();
  std::printf("strategy=%s keep=%g steps=%lld final_eval_loss=%.6g final_eval_metric=%.6g throughput=%.1f/s "
              "checksum=%016llx\n",
              r.label.c_str(), r.keep_fraction, static_cast<long long>(cfg.steps), ev.loss, ev.metric,
              measure_throughput(r.report), static_cast<unsigned long long>(r.final_params.checksum()));
  return kExitOk;
}

int cmd_compare(const ExperimentConfig& cfg) {
  const auto rows = run_compare(cfg);
  std::printf("%-6s %6s %14s %14s %12s\n", "strat", "seed", "eval_loss", "eval_metric", "samples/s");
  for (const auto& r : rows)
    std::printf("%-6s %6llu %14.6g %14.6g %12.1f\n", r.strategy.c_str(), static_cast<unsigned long long>(r.seed),
                r.final_eval_loss, r.final_eval_metric, r.throughput);
  emit_plots(cfg.out / "comparison.csv", cfg);
  return kExitOk;
}

int cmd_sweep_mask(const ExperimentConfig& cfg) {
  const auto rows = run_mask_ratio_sweep(cfg);
  for (const auto& r : rows)
    std::printf("mask_ratio=%-5g seed=%llu final_eval_loss=%.6g\n", r.mask_ratio,
                static_cast<unsigned long long>(r.seed), r.final_eval_loss);
  emit_plots(cfg.out / "mask_sweep.csv", cfg);
  return kExitOk;
}

int cmd_sweep_drop(const ExperimentConfig& cfg) {
  const auto rows = run_drop_sweep(cfg);
  for (const auto& r : rows)
    std::printf("seed=%llu strategy=%-7s rate=%-4g eval_loss=%.6g\n", static_cast<unsigned long long>(r.seed),
                std::string(drop_strategy_name(r.strategy)).c_str(), r.rate, r.eval_loss);
  emit_plots(cfg.out / "drop_sweep.csv", cfg);
  return kExitOk;
}

int cmd_grad_check(const ExperimentConfig& cfg) {
  write_resolved_config(cfg, cfg.out);
  const auto cases = run_grad_check_suite(cfg.seed);
  CsvWriter csv(cfg.out / "gradcheck.csv",
                {"case", "parameters", "checked", "max_rel_error", "worst_param", "worst_index", "status"});
  bool ok = true;
  for (const auto& c : cases) {
    const bool pass = c.result.max_rel_error < kGradCheckTolerance;
    ok = ok && pass;
    csv.field(c.name)
        .field(static_cast<long long>(c.parameters))
        .field(static_cast<long long>(c.result.checked))
        .field(c.result.max_rel_error)
        .field(c.result.worst_param)
        .field(static_cast<long long>(c.result.worst_index))
        .field(pass ? "pass" : "fail")
        .end_row();
    std::printf("%-22s params=%-6lld checked=%-5lld max_rel_error=%.3e %s\n", c.name.c_str(),
                static_cast<long long>(c.parameters), static_cast<long long>(c.result.checked),
                c.result.max_rel_error, pass ? "PASS" : "FAIL");
  }
  return ok ? kExitOk : kExitCheck;
}

int cmd_saliency_check(const ExperimentConfig& cfg) {
  write_resolved_config(cfg, cfg.out);
  const SaliencyCheck s = run_saliency_check(cfg, cfg.seed, cfg.out);
  const bool pass = s.spearman > kSaliencyMinSpearman;
  std::printf("params=%lld spearman=%.4f %s\n", static_cast<long long>(s.parameters), s.spearman,
              pass ? "PASS" : "FAIL");
  return pass ? kExitOk : kExitCheck;
}

int cmd_flops(const ExperimentConfig& cfg) {
  const auto rows = run_flops(cfg);
  for (const auto& r : rows)
    std::printf("%-5s model_flops=%llu selection_flops=%llu ratio=%.3e samples/s=%.1f\n", r.strategy.c_str(),
                static_cast<unsigned long long>(r.model_flops), static_cast<unsigned long long>(r.selection_flops),
                r.selection_ratio, r.throughput);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-mask tuning trainer and experiment harness"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config_path, "key=value config file; flags override it");
  app.add_option("--set", o.sets, "override any config key (key=value), repeatable");
  add_override(app, o, "task", "regression|gaussians|modadd|charlm");
  add_override(app, o, "model", "mlp|tinytf");
  add_override(app, o, "strategy", "none|gmt|rmt|hft");
  add_override(app, o, "mask-ratio", "fraction of gradient entries masked per step");
  add_override(app, o, "scope", "global|per-tensor");
  add_override(app, o, "accum-N", "mini-batches accumulated per update");
  add_override(app, o, "steps", "optimizer steps T");
  add_override(app, o, "lr", "base learning rate");
  add_override(app, o, "seed", "seed for single runs");
  add_override(app, o, "seeds", "comma-separated seeds for compare and sweeps");
  add_override(app, o, "out", "output directory");
  add_override(app, o, "ratios", "comma-separated mask ratios");
  add_override(app, o, "drop-strategy", "trivial|salient|random");
  add_override(app, o, "drop-rate", "delta drop rate");
  add_override(app, o, "rescale", "rescale surviving deltas by 1/(1-rate)");
  add_override(app, o, "verbose", "progress on stderr");

  std::map<std::string, int (*)(const ExperimentConfig&)> verbs = {
      {"train", cmd_train},           {"compare", cmd_compare},       {"sweep-mask", cmd_sweep_mask},
      {"sweep-drop", cmd_sweep_drop}, {"grad-check", cmd_grad_check}, {"saliency-check", cmd_saliency_check},
      {"flops", cmd_flops}};
  const std::map<std::string, std::string> help = {
      {"train", "single run with the configured strategy"},
      {"compare", "NONE/GMT/RMT/HFT (+ one-off drop) across seeds"},
      {"sweep-mask", "GMT final loss across mask ratios"},
      {"sweep-drop", "post-hoc delta drop curves per strategy"},
      {"grad-check", "autodiff vs central finite differences"},
      {"saliency-check", "first-order saliency vs exhaustive ablation"},
      {"flops", "FLOP ledger and throughput per strategy"}};
  for (const auto& [name, fn] : verbs) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const ExperimentConfig cfg = resolve(app, o);
    for (const auto* sub : app.get_subcommands()) return verbs.at(sub->get_name())(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
