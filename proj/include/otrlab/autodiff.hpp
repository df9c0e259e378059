// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Define-by-run reverse-mode autodiff over dense 64-bit tensors.
//
// A Graph is a tape: nodes are appended in creation order, so an op's inputs
// always precede it and backward is a single reverse sweep. Graphs are cheap
// and meant to be rebuilt every step.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "otrlab/tensor.hpp"

namespace otrlab {

class Graph;

/// Handle to one node of a Graph. Trivially copyable; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> values() const;
  double value() const;  // scalar only
  /// Empty until backward has run (or if the node does not require grad).
  std::span<const double> grad() const;
  bool requires_grad() const;

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Records an op output. `backward` runs only if some input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);

  void backward(Var loss);
  bool backpropagated() const { return done_; }
  void reset();

  std::size_t size() const { return nodes_.size(); }

  const Shape& shape(std::uint32_t id) const { return nodes_[id].value.shape; }
  std::span<const double> values(std::uint32_t id) const { return nodes_[id].value.values; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  std::span<const double> grad(std::uint32_t id) const { return nodes_[id].grad; }

  /// Gradient buffer of an input during backward, zero-initialized on first touch.
  std::vector<double>& grad_buffer(std::uint32_t id);
  const std::vector<double>& out_grad(std::uint32_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool done_ = false;
};

// --- primitive ops --------------------------------------------------------
// Exact shapes everywhere; the only broadcast is tensor * scalar constant.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var matmul(Var a, Var b);                              // [m,k] x [k,n]
Var transpose(Var a);                                  // 2-D
Var reshape(Var a, Shape shape);
Var gather_rows(Var table, std::span<const TokenId> ids);  // embedding lookup
/// a + fill wherever mask is set; `mask` has a's element count.
Var masked_fill(Var a, const std::vector<bool>& mask, double fill = -1e9);
Var log_softmax(Var a);                                // over last axis
Var softmax(Var a);                                    // over last axis
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var gelu(Var a);
Var sum(Var a);
Var mean(Var a);

struct Cell {
  std::size_t row;
  std::size_t col;
};

/// Picks x[row, col] for each cell. A 1-D x is treated as a single row.
Var gather_at(Var x, std::span<const Cell> cells);
/// Scalar -sum_i w_i * logp[cell_i]; w defaults to all ones. Weights are constants.
Var nll_gather(Var logp, std::span<const Cell> cells, std::span<const double> weights = {});

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double s) { return scale(a, s); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// --- finite-difference checking -------------------------------------------

using ScalarFn = std::function<Var(Graph&, std::span<const Var>)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// If set, checks this many randomly chosen coordinates per input instead of all.
  std::optional<std::size_t> coords_per_input;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_coord = 0;
  std::size_t coords_checked = 0;
};

/// max over coords of |analytic - central| / max(1e-8, |analytic| + |central|).
GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opts);
double grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double h);

}  // namespace otrlab
