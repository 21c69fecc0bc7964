// SPDX-License-Identifier: Apache-2.0
#include "gmt/models.hpp"

#include "gmt/rng.hpp"

#include <cmath>

namespace gmt {

namespace {

void fill_uniform(Tensor& t, Rng& rng, double bound) {
  for (double& v : t.flat_values()) v = rng.uniform(-bound, bound);
}

std::vector<int> token_row(const Matrix& inputs, Index row) {
  std::vector<int> ids(static_cast<std::size_t>(inputs.cols()));
  for (Index c = 0; c < inputs.cols(); ++c) ids[static_cast<std::size_t>(c)] = static_cast<int>(std::lround(inputs(row, c)));
  return ids;
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::Relu: return relu(x);
    case Activation::Tanh: return gmt::tanh(x);
    case Activation::Gelu: return gelu(x);
  }
  return x;
}

}  // namespace

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Gelu: return "gelu";
  }
  return "tanh";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + std::string(name) + "' (valid: relu, tanh, gelu)");
}

// --- Model ------------------------------------------------------------------

std::vector<int> Model::row_labels(const Batch& batch, Index output_rows) {
  const Matrix& y = batch.targets.values();
  const Index b = batch.size;
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(output_rows));
  if (output_rows == b * y.cols()) {
    for (Index r = 0; r < b; ++r)
      for (Index c = 0; c < y.cols(); ++c) labels.push_back(static_cast<int>(std::lround(y(r, c))));
    return labels;
  }
  if (y.cols() == 1 && b > 0 && output_rows % b == 0) {
    const Index per = output_rows / b;
    for (Index r = 0; r < b; ++r) {
      for (Index t = 0; t + 1 < per; ++t) labels.push_back(kIgnoreLabel);
      labels.push_back(static_cast<int>(std::lround(y(r, 0))));
    }
    return labels;
  }
  throw ShapeError("labels: " + std::to_string(output_rows) + " output rows for targets " +
                   to_string(batch.targets.shape()));
}

Var Model::loss(Graph64& graph, const Batch& batch) {
  Var out = forward(graph, batch);
  if (loss_kind_ == LossKind::Mse) return mse(out, batch.targets.values());
  const auto labels = row_labels(batch, out.rows());
  return cross_entropy(out, std::span<const int>(labels));
}

EvalResult Model::evaluate(const Batch& batch) {
  Graph64 graph;
  Var out = forward(graph, batch);
  EvalResult r;
  if (loss_kind_ == LossKind::Mse) {
    r.loss = mse(out, batch.targets.values()).item();
    r.metric = r.loss;
    return r;
  }
  const auto labels = row_labels(batch, out.rows());
  r.loss = cross_entropy(out, std::span<const int>(labels)).item();
  const Matrix& logits = out.value();
  Index correct = 0, counted = 0;
  for (Index row = 0; row < logits.rows(); ++row) {
    const int label = labels[static_cast<std::size_t>(row)];
    if (label == kIgnoreLabel) continue;
    Index arg = 0;
    logits.row(row).maxCoeff(&arg);
    correct += arg == label ? 1 : 0;
    ++counted;
  }
  r.metric = double(correct) / double(counted);
  return r;
}

double Model::loss_value(const Batch& batch) {
  Graph64 graph;
  return loss(graph, batch).item();
}

// --- Mlp --------------------------------------------------------------------

Mlp::Mlp(MlpConfig config) : Model(config.loss), config_(std::move(config)) {
  const auto& sizes = config_.layer_sizes;
  if (sizes.size() < 2) throw ConfigError("mlp: need at least 2 layer sizes");
  for (Index s : sizes)
    if (s <= 0) throw ConfigError("mlp: zero-width layer in layer_sizes");
  Rng rng(config_.seed, 0x31F);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::string prefix = "layers." + std::to_string(l);
    Tensor& w = params_.add(prefix + ".weight", {sizes[l], sizes[l + 1]}, ParamGroup::Weight);
    fill_uniform(w, rng, 1.0 / std::sqrt(double(sizes[l])));
    params_.add(prefix + ".bias", {sizes[l + 1]}, ParamGroup::Bias);
  }
}

Index Mlp::parameter_count(std::span<const Index> layer_sizes) {
  Index n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
  return n;
}

Var Mlp::forward(Graph64& graph, const Batch& batch) {
  Matrix in = batch.inputs.values();
  if (config_.one_hot_vocab > 0) {
    const Index vocab = config_.one_hot_vocab;
    Matrix hot = Matrix::Zero(in.rows(), in.cols() * vocab);
    for (Index r = 0; r < in.rows(); ++r)
      for (Index c = 0; c < in.cols(); ++c) {
        const long id = std::lround(in(r, c));
        if (id < 0 || id >= vocab)
          throw ShapeError("mlp: token id " + std::to_string(id) + " outside one-hot width " +
                           std::to_string(vocab));
        hot(r, c * vocab + id) = 1.0;
      }
    in = std::move(hot);
  }
  if (in.cols() != config_.layer_sizes.front())
    throw ShapeError("mlp: input width " + std::to_string(in.cols()) + " but first layer expects " +
                     std::to_string(config_.layer_sizes.front()));
  Shape shape{in.rows(), in.cols()};
  Var x = graph.constant(std::move(shape), std::move(in));
  const std::size_t layers = config_.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    Var w = graph.parameter(params_[2 * l].tensor);
    Var b = graph.parameter(params_[2 * l + 1].tensor);
    x = matmul(x, w) + b;
    if (l + 1 < layers) x = activate(x, config_.activation);
  }
  return x;
}

// --- TinyTransformer --------------------------------------------------------

struct TinyTransformer::Bound {
  struct Block {
    Var ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, fc1_w, fc1_b,
        fc2_w, fc2_b;
  };
  Var tok_emb, pos_emb;
  std::vector<Block> blocks;
  Var lnf_gain, lnf_bias, head_w, head_b;
};

TinyTransformer::TinyTransformer(TransformerConfig config)
    : Model(LossKind::CrossEntropy), config_(config) {
  const auto& c = config_;
  if (c.vocab <= 0 || c.d_model <= 0 || c.n_heads <= 0 || c.n_layers <= 0 || c.context_len <= 0)
    throw ConfigError("transformer: all sizes must be positive");
  if (c.d_model % c.n_heads != 0)
    throw ConfigError("transformer: d_model " + std::to_string(c.d_model) +
                      " not divisible by n_heads " + std::to_string(c.n_heads));
  Rng rng(c.seed, 0x7F);
  const Index d = c.d_model, v = c.vocab, h = 4 * d;
  auto weight = [&](const std::string& name, Index in, Index out) {
    fill_uniform(params_.add(name, {in, out}, ParamGroup::Weight), rng, 1.0 / std::sqrt(double(in)));
  };
  auto bias = [&](const std::string& name, Index n) { params_.add(name, {n}, ParamGroup::Bias); };
  auto norm = [&](const std::string& prefix) {
    params_.add(prefix + ".gain", {d}, ParamGroup::Norm).values().setOnes();
    params_.add(prefix + ".bias", {d}, ParamGroup::Norm);
  };
  fill_uniform(params_.add("tok_emb", {v, d}, ParamGroup::Embedding), rng, 0.5);
  fill_uniform(params_.add("pos_emb", {c.context_len, d}, ParamGroup::Embedding), rng, 0.5);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l);
    norm(p + ".ln1");
    for (const char* m : {"q", "k", "v", "o"}) {
      weight(p + ".attn.w" + m, d, d);
      bias(p + ".attn.b" + m, d);
    }
    norm(p + ".ln2");
    weight(p + ".mlp.fc1.weight", d, h);
    bias(p + ".mlp.fc1.bias", h);
    weight(p + ".mlp.fc2.weight", h, d);
    bias(p + ".mlp.fc2.bias", d);
  }
  norm("ln_f");
  weight("head.weight", d, v);
  bias("head.bias", v);
}

Index TinyTransformer::parameter_count(const TransformerConfig& c) {
  const Index d = c.d_model, v = c.vocab;
  return v * d + c.context_len * d + c.n_layers * (12 * d * d + 13 * d) + 2 * d + d * v + v;
}

TinyTransformer::Bound TinyTransformer::bind(Graph64& graph) {
  std::size_t i = 0;
  auto next = [&] { return graph.parameter(params_[i++].tensor); };
  Bound b;
  b.tok_emb = next();
  b.pos_emb = next();
  for (int l = 0; l < config_.n_layers; ++l) {
    Bound::Block k;
    k.ln1_gain = next();
    k.ln1_bias = next();
    k.wq = next();
    k.bq = next();
    k.wk = next();
    k.bk = next();
    k.wv = next();
    k.bv = next();
    k.wo = next();
    k.bo = next();
    k.ln2_gain = next();
    k.ln2_bias = next();
    k.fc1_w = next();
    k.fc1_b = next();
    k.fc2_w = next();
    k.fc2_b = next();
    b.blocks.push_back(k);
  }
  b.lnf_gain = next();
  b.lnf_bias = next();
  b.head_w = next();
  b.head_b = next();
  return b;
}

Var TinyTransformer::forward_sequence(const Bound& p, std::span<const int> tokens,
                                      std::vector<Matrix>* attention) const {
  const Index len = static_cast<Index>(tokens.size());
  if (len == 0) throw ShapeError("transformer: empty sequence");
  if (len > config_.context_len)
    throw ShapeError("transformer: context overflow, sequence length " + std::to_string(len) +
                     " exceeds context_len " + std::to_string(config_.context_len));
  std::vector<int> positions(static_cast<std::size_t>(len));
  for (Index t = 0; t < len; ++t) positions[static_cast<std::size_t>(t)] = static_cast<int>(t);
  Var x = embedding(p.tok_emb, tokens) + embedding(p.pos_emb, std::span<const int>(positions));
  const Index dh = config_.d_model / config_.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(double(dh));
  for (const auto& blk : p.blocks) {
    Var h = layer_norm(x, blk.ln1_gain, blk.ln1_bias);
    Var q = matmul(h, blk.wq) + blk.bq;
    Var k = matmul(h, blk.wk) + blk.bk;
    Var v = matmul(h, blk.wv) + blk.bv;
    std::vector<Var> heads;
    for (int head = 0; head < config_.n_heads; ++head) {
      const Index at = head * dh;
      Var qh = slice_cols(q, at, dh);
      Var kh = slice_cols(k, at, dh);
      Var vh = slice_cols(v, at, dh);
      Var probs = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), /*causal=*/true);
      if (attention != nullptr) attention->push_back(probs.value());
      heads.push_back(matmul(probs, vh));
    }
    Var attn = heads.size() == 1 ? heads[0] : concat_cols(std::span<const Var>(heads));
    x = x + (matmul(attn, blk.wo) + blk.bo);
    Var m = layer_norm(x, blk.ln2_gain, blk.ln2_bias);
    m = gelu(matmul(m, blk.fc1_w) + blk.fc1_b);
    x = x + (matmul(m, blk.fc2_w) + blk.fc2_b);
  }
  x = layer_norm(x, p.lnf_gain, p.lnf_bias);
  return matmul(x, p.head_w) + p.head_b;
}

Var TinyTransformer::forward(Graph64& graph, const Batch& batch) {
  const Bound p = bind(graph);
  std::vector<Var> rows;
  for (Index r = 0; r < batch.size; ++r) {
    const auto ids = token_row(batch.inputs.values(), r);
    rows.push_back(forward_sequence(p, ids, nullptr));
  }
  return rows.size() == 1 ? rows[0] : concat_rows(std::span<const Var>(rows));
}

Matrix TinyTransformer::logits(std::span<const int> tokens) {
  Graph64 graph;
  const Bound p = bind(graph);
  return forward_sequence(p, tokens, nullptr).value();
}

std::vector<Matrix> TinyTransformer::attention_maps(std::span<const int> tokens) {
  Graph64 graph;
  const Bound p = bind(graph);
  std::vector<Matrix> maps;
  forward_sequence(p, tokens, &maps);
  return maps;
}

}  // namespace gmt
