// SPDX-License-Identifier: Apache-2.0
#include "gmt/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace gmt {

std::string_view model_kind_name(ModelKind k) { return k == ModelKind::Mlp ? "mlp" : "tinytf"; }

ModelKind parse_model_kind(std::string_view name) {
  if (name == "mlp") return ModelKind::Mlp;
  if (name == "tinytf") return ModelKind::TinyTransformer;
  throw ConfigError("unknown model '" + std::string(name) + "' (valid: mlp, tinytf)");
}

std::vector<double> default_mask_ratios() {
  return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("config: '" + std::string(key) + "' expects " + std::string(expected) + ", got '" +
                    std::string(value) + "'");
}

double parse_double(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  try {
    std::size_t used = 0;
    const double d = std::stod(s, &used);
    if (used == s.size()) return d;
  } catch (const std::exception&) {
  }
  bad_value(key, v, "a number");
}

long long parse_int(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) bad_value(key, v, "an integer");
  return out;
}

long long parse_nonneg(std::string_view key, std::string_view v) {
  const long long n = parse_int(key, v);
  if (n < 0) bad_value(key, v, "a non-negative integer");
  return n;
}

bool parse_bool(std::string_view key, std::string_view v) {
  const std::string s = trim(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad_value(key, v, "a boolean (true/false)");
}

template <typename T, typename F>
std::vector<T> parse_list(std::string_view key, std::string_view v, F&& one) {
  std::vector<T> out;
  for (const auto& item : split_list(v)) {
    if (item.empty()) bad_value(key, v, "a comma-separated list");
    out.push_back(one(key, item));
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items, auto&& fmt) {
  std::string s;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) s += ',';
    s += fmt(items[i]);
  }
  return s;
}

std::string num(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "task", "model", "hidden", "activation", "d-model", "n-heads", "n-layers", "context-len",
      "n-train", "n-eval", "noise", "modulus", "seed", "seeds", "steps", "accum-N", "batch-size", "lr",
      "warmup-ratio", "optimizer", "weight-decay", "mask-semantics", "eval-every", "checkpoint-every",
      "strategy", "mask-ratio", "scope", "exempt-groups", "strategies", "compare-drop", "ratios",
      "drop-strategy", "drop-rate", "drop-rates", "rescale", "pretrain-steps", "finetune-shift", "out", "verbose"};
  return keys;
}

void ExperimentConfig::set(std::string_view key_in, std::string_view value_in) {
  const std::string key = trim(key_in);
  const std::string value = trim(value_in);
  const std::string_view k = key, v = value;
  if (k == "task") task = parse_task(v);
  else if (k == "model") model = parse_model_kind(v);
  else if (k == "hidden") hidden = parse_list<Index>(k, v, parse_int);
  else if (k == "activation") activation = parse_activation(v);
  else if (k == "d-model") d_model = parse_int(k, v);
  else if (k == "n-heads") n_heads = static_cast<int>(parse_int(k, v));
  else if (k == "n-layers") n_layers = static_cast<int>(parse_int(k, v));
  else if (k == "context-len") context_len = parse_int(k, v);
  else if (k == "n-train") n_train = static_cast<std::size_t>(parse_nonneg(k, v));
  else if (k == "n-eval") n_eval = static_cast<std::size_t>(parse_nonneg(k, v));
  else if (k == "noise") noise = parse_double(k, v);
  else if (k == "modulus") modulus = static_cast<int>(parse_int(k, v));
  else if (k == "seed") seed = static_cast<std::uint64_t>(parse_nonneg(k, v));
  else if (k == "seeds")
    seeds = parse_list<std::uint64_t>(k, v, [](std::string_view kk, std::string_view s) {
      return static_cast<std::uint64_t>(parse_nonneg(kk, s));
    });
  else if (k == "steps") steps = parse_int(k, v);
  else if (k == "accum-N") accum = static_cast<int>(parse_int(k, v));
  else if (k == "batch-size") batch_size = static_cast<int>(parse_int(k, v));
  else if (k == "lr") lr = parse_double(k, v);
  else if (k == "warmup-ratio") warmup_ratio = parse_double(k, v);
  else if (k == "optimizer") optimizer = parse_optimizer(v);
  else if (k == "weight-decay") weight_decay = parse_double(k, v);
  else if (k == "mask-semantics") mask_semantics = parse_mask_semantics(v);
  else if (k == "eval-every") eval_every = parse_int(k, v);
  else if (k == "checkpoint-every") checkpoint_every = parse_int(k, v);
  else if (k == "strategy") strategy = parse_strategy(v);
  else if (k == "mask-ratio") mask_ratio = parse_double(k, v);
  else if (k == "scope") scope = parse_scope(v);
  else if (k == "exempt-groups")
    exempt_groups = v.empty() ? std::vector<ParamGroup>{}
                              : parse_list<ParamGroup>(k, v, [](std::string_view, std::string_view s) {
                                  return parse_group(s);
                                });
  else if (k == "strategies")
    strategies = parse_list<MaskStrategy>(k, v, [](std::string_view, std::string_view s) { return parse_strategy(s); });
  else if (k == "compare-drop") compare_drop = parse_bool(k, v);
  else if (k == "ratios") ratios = parse_list<double>(k, v, parse_double);
  else if (k == "drop-strategy") drop_strategy = parse_drop_strategy(v);
  else if (k == "drop-rate") drop_rate = parse_double(k, v);
  else if (k == "drop-rates") drop_rates = parse_list<double>(k, v, parse_double);
  else if (k == "rescale") rescale = parse_bool(k, v);
  else if (k == "pretrain-steps") pretrain_steps = parse_int(k, v);
  else if (k == "finetune-shift") finetune_shift = parse_double(k, v);
  else if (k == "out") out = value;
  else if (k == "verbose") verbose = parse_bool(k, v);
  else throw ConfigError("config: unknown key '" + key + "'");
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(!hidden.empty(), "hidden needs at least one layer width");
  for (Index h : hidden) require(h > 0, "hidden widths must be positive");
  require(d_model > 0 && n_heads > 0 && n_layers > 0 && context_len > 0, "transformer sizes must be positive");
  require(d_model % n_heads == 0, "d-model must be divisible by n-heads");
  require(n_train >= 2 && n_eval >= 2, "n-train and n-eval must be >= 2");
  require(noise >= 0.0, "noise must be >= 0");
  require(modulus >= 2, "modulus must be >= 2");
  require(!seeds.empty(), "seeds must not be empty");
  require(steps >= 1, "steps (T) must be >= 1");
  require(accum >= 1, "accum-N must be >= 1");
  require(batch_size >= 1 && static_cast<std::size_t>(batch_size) <= n_train, "batch-size must be in [1, n-train]");
  require(lr > 0.0, "lr must be positive");
  require(warmup_ratio >= 0.0 && warmup_ratio <= 1.0, "warmup-ratio must be in [0, 1]");
  require(weight_decay >= 0.0, "weight-decay must be >= 0");
  require(eval_every >= 0 && checkpoint_every >= 0, "cadences must be >= 0");
  require(mask_ratio >= 0.0 && mask_ratio < 1.0, "mask-ratio must be in [0, 1)");
  require(!strategies.empty(), "strategies must not be empty");
  require(!ratios.empty(), "ratios must not be empty");
  for (double r : ratios) require(r >= 0.0 && r < 1.0, "ratios must lie in [0, 1)");
  require(drop_rate >= 0.0 && drop_rate <= 1.0, "drop-rate must be in [0, 1]");
  require(!(rescale && drop_rate == 1.0), "drop-rate 1 with rescale divides by zero");
  for (double r : drop_rates) require(r >= 0.0 && r <= 1.0, "drop-rates must lie in [0, 1]");
  require(pretrain_steps >= 1, "pretrain-steps must be >= 1");
  require(finetune_shift >= 0.0, "finetune-shift must be >= 0");
  if (model == ModelKind::Mlp) require(task != TaskKind::CharLm, "task charlm needs model tinytf");
  if (model == ModelKind::TinyTransformer)
    require(is_token_task(task), "model tinytf needs a token task (modadd or charlm)");
  if (model == ModelKind::TinyTransformer && task == TaskKind::ModAdd)
    require(context_len >= 2, "modadd sequences need context-len >= 2");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  auto line = [&](std::string_view k, const std::string& v) { os << k << '=' << v << '\n'; };
  line("task", std::string(task_name(task)));
  line("model", std::string(model_kind_name(model)));
  line("hidden", join(hidden, [](Index h) { return std::to_string(h); }));
  line("activation", std::string(activation_name(activation)));
  line("d-model", std::to_string(d_model));
  line("n-heads", std::to_string(n_heads));
  line("n-layers", std::to_string(n_layers));
  line("context-len", std::to_string(context_len));
  line("n-train", std::to_string(n_train));
  line("n-eval", std::to_string(n_eval));
  line("noise", num(noise));
  line("modulus", std::to_string(modulus));
  line("seed", std::to_string(seed));
  line("seeds", join(seeds, [](std::uint64_t s) { return std::to_string(s); }));
  line("steps", std::to_string(steps));
  line("accum-N", std::to_string(accum));
  line("batch-size", std::to_string(batch_size));
  line("lr", num(lr));
  line("warmup-ratio", num(warmup_ratio));
  line("optimizer", std::string(optimizer_name(optimizer)));
  line("weight-decay", num(weight_decay));
  line("mask-semantics", std::string(mask_semantics_name(mask_semantics)));
  line("eval-every", std::to_string(eval_every));
  line("checkpoint-every", std::to_string(checkpoint_every));
  line("strategy", std::string(strategy_name(strategy)));
  line("mask-ratio", num(mask_ratio));
  line("scope", std::string(scope_name(scope)));
  line("exempt-groups", join(exempt_groups, [](ParamGroup g) { return std::string(group_name(g)); }));
  line("strategies", join(strategies, [](MaskStrategy s) { return std::string(strategy_name(s)); }));
  line("compare-drop", compare_drop ? "true" : "false");
  line("ratios", join(ratios, num));
  line("drop-strategy", std::string(drop_strategy_name(drop_strategy)));
  line("drop-rate", num(drop_rate));
  line("drop-rates", join(drop_rates, num));
  line("rescale", rescale ? "true" : "false");
  line("pretrain-steps", std::to_string(pretrain_steps));
  line("finetune-shift", num(finetune_shift));
  line("out", out.string());
  line("verbose", verbose ? "true" : "false");
  return os.str();
}

ExperimentConfig parse_config_text(std::string_view text, ExperimentConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    base.set(std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
  }
  return base;
}

ExperimentConfig load_config_file(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), std::move(base));
}

DatasetOptions dataset_options(const ExperimentConfig& cfg) {
  DatasetOptions o;
  o.noise = cfg.noise;
  o.modulus = cfg.modulus;
  o.context_len = static_cast<int>(cfg.context_len);
  return o;
}

Dataset make_train_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  return make_dataset(cfg.task, seed, cfg.n_train, Split::Train, dataset_options(cfg));
}

Dataset make_eval_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  return make_dataset(cfg.task, seed, cfg.n_eval, Split::Eval, dataset_options(cfg));
}

std::unique_ptr<Model> make_model(const ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const DatasetOptions opt = dataset_options(cfg);
  if (cfg.model == ModelKind::TinyTransformer) {
    TransformerConfig t;
    t.vocab = cfg.task == TaskKind::ModAdd ? cfg.modulus : static_cast<int>(corpus_alphabet().size());
    t.d_model = cfg.d_model;
    t.n_heads = cfg.n_heads;
    t.n_layers = cfg.n_layers;
    t.context_len = cfg.context_len;
    t.seed = seed;
    return std::make_unique<TinyTransformer>(t);
  }
  MlpConfig m;
  m.activation = cfg.activation;
  m.seed = seed;
  switch (cfg.task) {
    case TaskKind::Regression:
      m.layer_sizes.push_back(opt.input_dim);
      m.loss = LossKind::Mse;
      break;
    case TaskKind::Gaussians:
      m.layer_sizes.push_back(2);
      m.loss = LossKind::CrossEntropy;
      break;
    case TaskKind::ModAdd:
      m.layer_sizes.push_back(2 * cfg.modulus);
      m.one_hot_vocab = cfg.modulus;
      m.loss = LossKind::CrossEntropy;
      break;
    case TaskKind::CharLm:
      throw ConfigError("task charlm needs model tinytf");
  }
  m.layer_sizes.insert(m.layer_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  m.layer_sizes.push_back(cfg.task == TaskKind::Regression ? 1
                          : cfg.task == TaskKind::Gaussians ? 2
                                                            : cfg.modulus);
  return std::make_unique<Mlp>(m);
}

TrainConfig make_train_config(const ExperimentConfig& cfg, MaskStrategy strategy, double keep_fraction,
                              std::uint64_t seed) {
  TrainConfig t;
  t.steps = cfg.steps;
  t.accum = cfg.accum;
  t.batch_size = cfg.batch_size;
  t.base_lr = cfg.lr;
  t.warmup_ratio = cfg.warmup_ratio;
  t.optimizer.kind = cfg.optimizer;
  t.optimizer.weight_decay = cfg.weight_decay;
  t.optimizer.semantics = cfg.mask_semantics;
  t.strategy = strategy;
  t.keep_fraction = keep_fraction;
  t.scope = cfg.scope;
  t.exempt_groups = cfg.exempt_groups;
  t.seed = seed;
  t.eval_every = cfg.eval_every;
  t.checkpoint_every = cfg.checkpoint_every;
  return t;
}

}  // namespace gmt
