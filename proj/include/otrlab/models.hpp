// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "otrlab/autodiff.hpp"
#include "otrlab/tensor.hpp"

namespace otrlab {

enum class ModelKind { transformer, bigram };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelConfig {
  ModelKind kind = ModelKind::transformer;
  std::size_t vocab_size = 16;
  std::size_t context_len = 32;
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t d_ff = 64;
  std::uint64_t init_seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Ordered parameter list; order is the checkpoint and optimizer order.
class ParameterSet {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return items_.size(); }
  NamedTensor& operator[](std::size_t i) { return items_[i]; }
  const NamedTensor& operator[](std::size_t i) const { return items_[i]; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t index_of(const std::string& name) const;
  std::size_t total_count() const;
  std::uint64_t checksum() const;

 private:
  std::vector<NamedTensor> items_;
};

/// Parameters placed on a graph as leaves, in ParameterSet order.
struct Binding {
  std::vector<Var> params;
};

Binding bind(Graph& g, const ParameterSet& params, bool requires_grad);

/// A parameterized next-token model pi_theta.
class TokenPolicy {
 public:
  virtual ~TokenPolicy() = default;

  const ModelConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  /// [L x V]; row t scores the token following tokens[0..t].
  Var logits(Graph& g, const Binding& b, std::span<const TokenId> tokens) const;
  /// Forward pass without gradient tracking; returns a row-major [L x V] tensor.
  Tensor logits_values(std::span<const TokenId> tokens) const;

  virtual std::unique_ptr<TokenPolicy> clone() const = 0;

 protected:
  explicit TokenPolicy(ModelConfig config) : config_(std::move(config)) {}
  virtual Var forward(Graph& g, const Binding& b, std::span<const TokenId> tokens) const = 0;

  ModelConfig config_;
  ParameterSet params_;
};

/// Pre-norm causal transformer with learned absolute positions, per-head
/// projection matrices, GELU MLP and no linear biases.
class TinyTransformer final : public TokenPolicy {
 public:
  explicit TinyTransformer(ModelConfig config);
  std::unique_ptr<TokenPolicy> clone() const override;

 protected:
  Var forward(Graph& g, const Binding& b, std::span<const TokenId> tokens) const override;

 private:
  struct HeadIndex {
    std::size_t wq, wk, wv, wo;
  };
  struct LayerIndex {
    std::size_t ln1_gain, ln1_bias;
    std::vector<HeadIndex> heads;
    std::size_t ln2_gain, ln2_bias, ff_in, ff_out;
  };
  std::size_t tok_emb_ = 0, pos_emb_ = 0, lnf_gain_ = 0, lnf_bias_ = 0, unembed_ = 0;
  std::vector<LayerIndex> layers_;
};

/// Logit table [V x V]; row i holds the successor logits of token i.
class TabularBigram final : public TokenPolicy {
 public:
  explicit TabularBigram(ModelConfig config);
  std::unique_ptr<TokenPolicy> clone() const override;

  Tensor& table() { return params_[0].value; }
  const Tensor& table() const { return params_[0].value; }

 protected:
  Var forward(Graph& g, const Binding& b, std::span<const TokenId> tokens) const override;
};

/// Builds the model named by config.kind with Gaussian(0, 0.02^2) weights.
std::unique_ptr<TokenPolicy> init_params(const ModelConfig& config);

/// Closed-form parameter count of a TinyTransformer configuration.
std::size_t transformer_param_count(const ModelConfig& c);

}  // namespace otrlab
