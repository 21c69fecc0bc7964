// SPDX-License-Identifier: Apache-2.0
#include "gmt/datasets.hpp"

#include "gmt/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace gmt {

namespace {

constexpr std::array<TaskKind, 4> kAllTasks = {TaskKind::Regression, TaskKind::Gaussians,
                                               TaskKind::ModAdd, TaskKind::CharLm};

// Stream tags keep per-kind and per-split generators independent.
constexpr std::uint64_t kTeacherStream = 0x7EAC4E12ull;
constexpr std::uint64_t kEvalStream = 0xE7A1ull << 40;

std::uint64_t example_stream(TaskKind kind, Split split) {
  return (static_cast<std::uint64_t>(kind) + 1) << 48 | (split == Split::Eval ? kEvalStream : 0);
}

struct Teacher {
  Matrix w1;  // [in, hidden]
  Vector b1;
  Vector w2;  // [hidden]

  double operator()(const std::vector<double>& x) const {
    Eigen::Map<const Eigen::RowVectorXd> xv(x.data(), static_cast<Index>(x.size()));
    Eigen::RowVectorXd h = (xv * w1 + b1.transpose()).array().tanh().matrix();
    return h.dot(w2);
  }
};

Teacher make_teacher(std::uint64_t seed, const DatasetOptions& opt) {
  Rng rng(seed, kTeacherStream);
  Teacher t;
  t.w1.resize(opt.input_dim, opt.teacher_hidden);
  t.b1.resize(opt.teacher_hidden);
  t.w2.resize(opt.teacher_hidden);
  const double s1 = 1.5 / std::sqrt(double(opt.input_dim));
  for (Index i = 0; i < t.w1.size(); ++i) t.w1.data()[i] = s1 * rng.normal();
  for (Index i = 0; i < t.b1.size(); ++i) t.b1[i] = 0.1 * rng.normal();
  const double s2 = 1.0 / std::sqrt(double(opt.teacher_hidden));
  for (Index i = 0; i < t.w2.size(); ++i) t.w2[i] = s2 * rng.normal();
  if (opt.teacher_shift > 0.0) {
    Rng shift(seed, kTeacherStream + 1);
    for (Index i = 0; i < t.w1.size(); ++i) t.w1.data()[i] += opt.teacher_shift * s1 * shift.normal();
    for (Index i = 0; i < t.b1.size(); ++i) t.b1[i] += opt.teacher_shift * 0.1 * shift.normal();
    for (Index i = 0; i < t.w2.size(); ++i) t.w2[i] += opt.teacher_shift * s2 * shift.normal();
  }
  return t;
}

std::vector<int> corpus_ids() {
  const auto text = embedded_corpus();
  const auto& alphabet = corpus_alphabet();
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(static_cast<int>(alphabet.find(c)));
  return ids;
}

std::vector<Example> generate(TaskKind kind, std::uint64_t seed, std::size_t n, Split split,
                              const DatasetOptions& opt) {
  std::vector<Example> out;
  out.reserve(n);
  const std::uint64_t stream = example_stream(kind, split);
  switch (kind) {
    case TaskKind::Regression: {
      const Teacher teacher = make_teacher(seed, opt);
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(seed, stream + i);
        Example e;
        e.x.resize(static_cast<std::size_t>(opt.input_dim));
        for (auto& v : e.x) v = rng.uniform(-1.0, 1.0);
        double y = teacher(e.x);
        if (opt.noise > 0.0) y += opt.noise * rng.normal();
        e.y = {y};
        out.push_back(std::move(e));
      }
      break;
    }
    case TaskKind::Gaussians: {
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(seed, stream + i);
        const int label = rng.uniform() < 0.5 ? 0 : 1;
        const double mu = label == 1 ? 3.0 : -3.0;
        const double x0 = mu + rng.normal();
        const double x1 = mu + rng.normal();
        out.push_back(Example{{x0, x1}, {double(label)}});
      }
      break;
    }
    case TaskKind::ModAdd: {
      const int p = opt.modulus;
      std::vector<std::pair<int, int>> pairs;
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) pairs.emplace_back(a, b);
      Rng perm(seed, example_stream(kind, Split::Train) - 1);
      perm.shuffle(pairs.begin(), pairs.end());
      const std::size_t n_train = static_cast<std::size_t>(ceil_fraction(0.8, static_cast<std::int64_t>(pairs.size())));
      const std::size_t lo = split == Split::Train ? 0 : n_train;
      const std::size_t hi = split == Split::Train ? n_train : pairs.size();
      if (hi <= lo) throw ConfigError("modadd: modulus too small for a non-empty split");
      for (std::size_t i = 0; i < n; ++i) {
        const auto [a, b] = pairs[lo + i % (hi - lo)];
        out.push_back(Example{{double(a), double(b)}, {double((a + b) % p)}});
      }
      break;
    }
    case TaskKind::CharLm: {
      static const std::vector<int> ids = corpus_ids();
      const std::size_t len = static_cast<std::size_t>(opt.context_len);
      const std::size_t cut = ids.size() * 9 / 10;
      const std::size_t lo = split == Split::Train ? 0 : cut;
      const std::size_t hi = split == Split::Train ? cut : ids.size();
      if (hi - lo < len + 1) throw ConfigError("charlm: context_len too long for the corpus split");
      const std::size_t starts = hi - lo - len;
      for (std::size_t i = 0; i < n; ++i) {
        Rng rng(seed, stream + i);
        const std::size_t s = lo + rng.below(starts);
        Example e;
        for (std::size_t t = 0; t < len; ++t) {
          e.x.push_back(ids[s + t]);
          e.y.push_back(ids[s + t + 1]);
        }
        out.push_back(std::move(e));
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::Regression: return "regression";
    case TaskKind::Gaussians: return "gaussians";
    case TaskKind::ModAdd: return "modadd";
    case TaskKind::CharLm: return "charlm";
  }
  return "regression";
}

TaskKind parse_task(std::string_view name) {
  for (TaskKind k : kAllTasks)
    if (task_name(k) == name) return k;
  throw ConfigError("unknown task kind '" + std::string(name) +
                    "' (valid: regression, gaussians, modadd, charlm)");
}

bool is_token_task(TaskKind kind) { return kind == TaskKind::ModAdd || kind == TaskKind::CharLm; }
bool is_classification_task(TaskKind kind) { return kind != TaskKind::Regression; }

int gaussians_bayes_label(double x0, double x1) { return x0 + x1 > 0.0 ? 1 : 0; }

const std::string& corpus_alphabet() {
  static const std::string alphabet = [] {
    std::string s(embedded_corpus());
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    return s;
  }();
  return alphabet;
}

Dataset::Dataset(TaskKind kind, std::uint64_t seed, Split split, DatasetOptions options,
                 std::vector<Example> examples)
    : kind_(kind), seed_(seed), split_(split), options_(options), examples_(std::move(examples)) {}

Index Dataset::input_width() const {
  return examples_.empty() ? 0 : static_cast<Index>(examples_.front().x.size());
}

Index Dataset::target_width() const {
  return examples_.empty() ? 0 : static_cast<Index>(examples_.front().y.size());
}

int Dataset::num_classes() const {
  switch (kind_) {
    case TaskKind::Regression: return 0;
    case TaskKind::Gaussians: return 2;
    case TaskKind::ModAdd: return options_.modulus;
    case TaskKind::CharLm: return static_cast<int>(corpus_alphabet().size());
  }
  return 0;
}

Batch Dataset::batch(std::span<const std::size_t> indices) const {
  const Index b = static_cast<Index>(indices.size());
  if (b == 0) throw ShapeError("batch: no indices");
  Matrix x(b, input_width());
  Matrix y(b, target_width());
  for (Index r = 0; r < b; ++r) {
    const Example& e = examples_.at(indices[static_cast<std::size_t>(r)]);
    x.row(r) = Eigen::Map<const Eigen::RowVectorXd>(e.x.data(), input_width());
    y.row(r) = Eigen::Map<const Eigen::RowVectorXd>(e.y.data(), target_width());
  }
  return Batch{Tensor({b, input_width()}, std::move(x)), Tensor({b, target_width()}, std::move(y)), b};
}

Batch Dataset::all() const {
  std::vector<std::size_t> idx(examples_.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return batch(idx);
}

Dataset make_dataset(TaskKind kind, std::uint64_t seed, std::size_t n, Split split,
                     const DatasetOptions& options) {
  if (n < 2) throw ConfigError("make_dataset: need at least 2 examples, got " + std::to_string(n));
  if (options.input_dim <= 0 || options.teacher_hidden <= 0 || options.modulus < 2 ||
      options.context_len <= 0 || options.noise < 0.0 || options.teacher_shift < 0.0)
    throw ConfigError("make_dataset: invalid dataset options");
  return Dataset(kind, seed, split, options, generate(kind, seed, n, split, options));
}

Dataset make_dataset(std::string_view kind, std::uint64_t seed, std::size_t n, Split split,
                     const DatasetOptions& options) {
  return make_dataset(parse_task(kind), seed, n, split, options);
}

}  // namespace gmt
