// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/models.hpp"

#include <cmath>
#include <stdexcept>

#include "otrlab/rng.hpp"

namespace otrlab {

std::string to_string(ModelKind kind) { return kind == ModelKind::transformer ? "transformer" : "bigram"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "transformer") return ModelKind::transformer;
  if (s == "bigram") return ModelKind::bigram;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected transformer or bigram)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(vocab_size, "vocab_size");
  if (context_len < 2) throw std::invalid_argument("context_len must be at least 2");
  if (kind == ModelKind::bigram) return;
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_layers, "n_layers");
  positive(d_ff, "d_ff");
  if (d_model % n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
}

// --- ParameterSet ---------------------------------------------------------

std::size_t ParameterSet::add(std::string name, Tensor value) {
  for (const auto& it : items_) {
    if (it.name == name) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  items_.push_back({std::move(name), std::move(value)});
  return items_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].name == name) return i;
  throw std::out_of_range("no parameter named '" + name + "'");
}

std::size_t ParameterSet::total_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.value.size();
  return n;
}

std::uint64_t ParameterSet::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : items_) h = otrlab::checksum(p.value.values, h);
  return h;
}

Binding bind(Graph& g, const ParameterSet& params, bool requires_grad) {
  Binding b;
  b.params.reserve(params.size());
  for (const auto& p : params) b.params.push_back(g.leaf(p.value, requires_grad));
  return b;
}

// --- TokenPolicy ----------------------------------------------------------

Var TokenPolicy::logits(Graph& g, const Binding& b, std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw std::invalid_argument("logits: empty token sequence");
  if (tokens.size() > config_.context_len) {
    throw std::invalid_argument("logits: sequence length " + std::to_string(tokens.size()) + " exceeds context_len " +
                                std::to_string(config_.context_len));
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= config_.vocab_size) {
      throw std::invalid_argument("logits: token id " + std::to_string(tokens[i]) + " at position " +
                                  std::to_string(i) + " out of range for vocab_size " +
                                  std::to_string(config_.vocab_size));
    }
  }
  if (b.params.size() != params_.size()) throw std::invalid_argument("logits: binding does not match model");
  return forward(g, b, tokens);
}

Tensor TokenPolicy::logits_values(std::span<const TokenId> tokens) const {
  Graph g;
  Binding b = bind(g, params_, false);
  Var out = logits(g, b, tokens);
  return Tensor(out.shape(), std::vector<double>(out.values().begin(), out.values().end()));
}

namespace {

Tensor gaussian(const Shape& shape, std::uint64_t seed, std::uint32_t tensor_index, double stddev) {
  Tensor t(shape);
  CounterRng rng(seed, Stream::init, tensor_index);
  for (std::size_t i = 0; i < t.size(); ++i) t.values[i] = stddev * rng.normal(i);
  return t;
}

Tensor filled(const Shape& shape, double v) {
  Tensor t(shape);
  std::fill(t.values.begin(), t.values.end(), v);
  return t;
}

constexpr double kInitStd = 0.02;

}  // namespace

// --- TinyTransformer ------------------------------------------------------

TinyTransformer::TinyTransformer(ModelConfig config) : TokenPolicy(std::move(config)) {
  config_.kind = ModelKind::transformer;
  config_.validate();
  const auto& c = config_;
  const std::size_t dh = c.d_model / c.n_heads;
  const auto seed = c.init_seed;
  auto weight = [&](std::string name, Shape shape) {
    const auto idx = static_cast<std::uint32_t>(params_.size());
    return params_.add(std::move(name), gaussian(shape, seed, idx, kInitStd));
  };
  auto constant = [&](std::string name, std::size_t n, double v) { return params_.add(std::move(name), filled({n}, v)); };

  tok_emb_ = weight("tok_emb", {c.vocab_size, c.d_model});
  pos_emb_ = weight("pos_emb", {c.context_len, c.d_model});
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerIndex li;
    li.ln1_gain = constant(p + "ln1.gain", c.d_model, 1.0);
    li.ln1_bias = constant(p + "ln1.bias", c.d_model, 0.0);
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      const std::string hp = p + "attn.head" + std::to_string(h) + ".";
      HeadIndex hi;
      hi.wq = weight(hp + "wq", {c.d_model, dh});
      hi.wk = weight(hp + "wk", {c.d_model, dh});
      hi.wv = weight(hp + "wv", {c.d_model, dh});
      hi.wo = weight(hp + "wo", {dh, c.d_model});
      li.heads.push_back(hi);
    }
    li.ln2_gain = constant(p + "ln2.gain", c.d_model, 1.0);
    li.ln2_bias = constant(p + "ln2.bias", c.d_model, 0.0);
    li.ff_in = weight(p + "mlp.w_in", {c.d_model, c.d_ff});
    li.ff_out = weight(p + "mlp.w_out", {c.d_ff, c.d_model});
    layers_.push_back(std::move(li));
  }
  lnf_gain_ = constant("ln_f.gain", c.d_model, 1.0);
  lnf_bias_ = constant("ln_f.bias", c.d_model, 0.0);
  unembed_ = weight("unembed", {c.d_model, c.vocab_size});
}

std::unique_ptr<TokenPolicy> TinyTransformer::clone() const { return std::make_unique<TinyTransformer>(*this); }

Var TinyTransformer::forward(Graph& /*g*/, const Binding& b, std::span<const TokenId> tokens) const {
  const auto& P = b.params;
  const std::size_t L = tokens.size();
  const std::size_t dh = config_.d_model / config_.n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<TokenId> positions(L);
  for (std::size_t i = 0; i < L; ++i) positions[i] = static_cast<TokenId>(i);
  std::vector<bool> causal(L * L);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j) causal[i * L + j] = j > i;

  Var x = gather_rows(P[tok_emb_], tokens) + gather_rows(P[pos_emb_], positions);
  for (const auto& layer : layers_) {
    Var h = layer_norm(x, P[layer.ln1_gain], P[layer.ln1_bias]);
    Var attn;
    for (const auto& head : layer.heads) {
      Var q = matmul(h, P[head.wq]);
      Var k = matmul(h, P[head.wk]);
      Var v = matmul(h, P[head.wv]);
      Var scores = masked_fill(scale(matmul(q, transpose(k)), inv_sqrt_dh), causal);
      Var out = matmul(matmul(softmax(scores), v), P[head.wo]);
      attn = attn.valid() ? attn + out : out;
    }
    x = x + attn;
    Var h2 = layer_norm(x, P[layer.ln2_gain], P[layer.ln2_bias]);
    x = x + matmul(gelu(matmul(h2, P[layer.ff_in])), P[layer.ff_out]);
  }
  return matmul(layer_norm(x, P[lnf_gain_], P[lnf_bias_]), P[unembed_]);
}

std::size_t transformer_param_count(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t per_layer = 2 * 2 * d + 4 * d * d + 2 * d * c.d_ff;
  return c.vocab_size * d + c.context_len * d + c.n_layers * per_layer + 2 * d + d * c.vocab_size;
}

// --- TabularBigram --------------------------------------------------------

TabularBigram::TabularBigram(ModelConfig config) : TokenPolicy(std::move(config)) {
  config_.kind = ModelKind::bigram;
  config_.validate();
  params_.add("table", gaussian({config_.vocab_size, config_.vocab_size}, config_.init_seed, 0, kInitStd));
}

std::unique_ptr<TokenPolicy> TabularBigram::clone() const { return std::make_unique<TabularBigram>(*this); }

Var TabularBigram::forward(Graph& g, const Binding& b, std::span<const TokenId> tokens) const {
  (void)g;
  return gather_rows(b.params[0], tokens);
}

std::unique_ptr<TokenPolicy> init_params(const ModelConfig& config) {
  config.validate();
  if (config.kind == ModelKind::bigram) return std::make_unique<TabularBigram>(config);
  return std::make_unique<TinyTransformer>(config);
}

}  // namespace otrlab
