// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gmt/datasets.hpp"
#include "gmt/graph.hpp"
#include "gmt/registry.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace gmt {

enum class Activation { Relu, Tanh, Gelu };
enum class LossKind { Mse, CrossEntropy };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct EvalResult {
  double loss = 0.0;
  /// Accuracy for classification losses, mean squared error otherwise.
  double metric = 0.0;
};

/// A toy model: a parameter registry plus a differentiable forward pass.
class Model {
 public:
  virtual ~Model() = default;

  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  LossKind loss_kind() const { return loss_kind_; }
  std::string_view metric_name() const {
    return loss_kind_ == LossKind::CrossEntropy ? "accuracy" : "mse";
  }

  /// Predictions ([batch, out]) or logits ([rows, classes]) for a batch,
  /// with parameters bound as differentiable leaves.
  virtual Var forward(Graph64& graph, const Batch& batch) = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  /// Mean loss over the batch (mean over counted positions for sequences).
  Var loss(Graph64& graph, const Batch& batch);
  /// Loss and metric without touching gradient buffers.
  EvalResult evaluate(const Batch& batch);
  /// Plain loss value; gradient buffers untouched.
  double loss_value(const Batch& batch);

  /// Per-row class labels for cross-entropy. Sequence batches whose target
  /// width is 1 only score the last position of each sequence.
  static std::vector<int> row_labels(const Batch& batch, Index output_rows);

 protected:
  explicit Model(LossKind loss_kind) : loss_kind_(loss_kind) {}

  ParamRegistry params_;
  LossKind loss_kind_;
};

struct MlpConfig {
  std::vector<Index> layer_sizes;  // input width first, output width last
  Activation activation = Activation::Tanh;
  LossKind loss = LossKind::Mse;
  /// When > 0, every input is a token id one-hot encoded to this width;
  /// layer_sizes[0] must then be input_count * one_hot_vocab.
  int one_hot_vocab = 0;
  std::uint64_t seed = 0;
};

/// Fully connected network. Parameters are layers.<i>.weight [in, out]
/// drawn from U(-1/sqrt(in), 1/sqrt(in)) and layers.<i>.bias [out] set to 0.
class Mlp final : public Model {
 public:
  explicit Mlp(MlpConfig config);

  const MlpConfig& config() const { return config_; }
  Var forward(Graph64& graph, const Batch& batch) override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<Mlp>(*this); }

  /// Closed-form parameter count for the given layer sizes.
  static Index parameter_count(std::span<const Index> layer_sizes);

 private:
  MlpConfig config_;
};

struct TransformerConfig {
  int vocab = 16;
  Index d_model = 8;
  int n_heads = 2;
  int n_layers = 1;
  Index context_len = 8;
  std::uint64_t seed = 0;
};

/// Pre-norm decoder-only transformer with learned positional embeddings,
/// causal multi-head attention and a GELU MLP of width 4*d_model.
///
/// Initialization: embeddings U(-0.5, 0.5); weight matrices U(-1/sqrt(in),
/// 1/sqrt(in)); biases 0; layer-norm gains 1 and biases 0.
class TinyTransformer final : public Model {
 public:
  explicit TinyTransformer(TransformerConfig config);

  const TransformerConfig& config() const { return config_; }
  /// Logits [batch * seq_len, vocab], sequences stacked in batch order.
  Var forward(Graph64& graph, const Batch& batch) override;
  std::unique_ptr<Model> clone() const override { return std::make_unique<TinyTransformer>(*this); }

  /// Logits [seq_len, vocab] for one sequence (no gradients recorded).
  Matrix logits(std::span<const int> tokens);
  /// Attention probabilities for one sequence: one [len, len] matrix per
  /// (layer, head), layer-major.
  std::vector<Matrix> attention_maps(std::span<const int> tokens);

  /// V*d + C*d + L*(12 d^2 + 13 d) + 2 d + d*V + V
  static Index parameter_count(const TransformerConfig& config);

 private:
  struct Bound;
  Bound bind(Graph64& graph);
  Var forward_sequence(const Bound& p, std::span<const int> tokens,
                       std::vector<Matrix>* attention) const;

  TransformerConfig config_;
};

}  // namespace gmt
