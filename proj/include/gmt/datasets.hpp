// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gmt {

enum class TaskKind { Regression, Gaussians, ModAdd, CharLm };
enum class Split { Train, Eval };

std::string_view task_name(TaskKind kind);
/// Throws ConfigError listing the valid kinds.
TaskKind parse_task(std::string_view name);
/// True for tasks whose inputs are integer token ids.
bool is_token_task(TaskKind kind);
/// True for tasks scored with cross-entropy and accuracy.
bool is_classification_task(TaskKind kind);

struct DatasetOptions {
  int input_dim = 4;       // regression
  int teacher_hidden = 16; // regression
  double noise = 0.0;      // regression: stddev of additive label noise
  double teacher_shift = 0.0;  // regression: stddev of a seeded perturbation of the teacher weights
  int modulus = 7;         // modadd
  int context_len = 16;    // charlm
};

/// One example. Token tasks store ids as exact small integers.
struct Example {
  std::vector<double> x;
  std::vector<double> y;
};

struct Batch {
  Tensor inputs;   // [size, input_width]
  Tensor targets;  // [size, target_width]
  Index size = 0;
};

/// Deterministic synthetic dataset. Example i is a pure function of
/// (kind, seed, split, i); train and eval splits never share an example.
///
/// Schemas:
///   regression  x ~ U(-1,1)^input_dim, y = teacher(x) + noise * N(0,1);
///               teacher is a seeded tanh MLP input_dim -> teacher_hidden -> 1
///   gaussians   label ~ Bernoulli(1/2), x ~ N(+-(3,3), I), y = [label]
///   modadd      x = [a, b], y = [(a + b) mod p]; the p^2 pairs are split
///               80/20 by a seeded permutation
///   charlm      x = context_len char ids, y = the same window shifted by
///               one; train windows come from the first 90% of the embedded
///               corpus, eval windows from the rest
class Dataset {
 public:
  Dataset(TaskKind kind, std::uint64_t seed, Split split, DatasetOptions options,
          std::vector<Example> examples);

  TaskKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  Split split() const { return split_; }
  const DatasetOptions& options() const { return options_; }
  std::size_t size() const { return examples_.size(); }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  Index input_width() const;
  Index target_width() const;
  /// Number of classes / vocabulary size for classification tasks.
  int num_classes() const;

  Batch batch(std::span<const std::size_t> indices) const;
  Batch all() const;

 private:
  TaskKind kind_;
  std::uint64_t seed_;
  Split split_;
  DatasetOptions options_;
  std::vector<Example> examples_;
};

Dataset make_dataset(TaskKind kind, std::uint64_t seed, std::size_t n, Split split = Split::Train,
                     const DatasetOptions& options = {});
Dataset make_dataset(std::string_view kind, std::uint64_t seed, std::size_t n,
                     Split split = Split::Train, const DatasetOptions& options = {});

/// Closed-form Bayes decision for the two-Gaussians task (equal priors,
/// identity covariance, means +-(3,3)): class 1 iff x0 + x1 > 0.
int gaussians_bayes_label(double x0, double x1);

/// Embedded text used by charlm.
std::string_view embedded_corpus();
/// Sorted distinct characters of the corpus; index = token id.
const std::string& corpus_alphabet();

}  // namespace gmt
