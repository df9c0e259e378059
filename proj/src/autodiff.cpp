// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace otrlab {

// --- Var ------------------------------------------------------------------

const Shape& Var::shape() const { return graph_->shape(id_); }
std::size_t Var::size() const { return graph_->values(id_).size(); }
std::span<const double> Var::values() const { return graph_->values(id_); }
std::span<const double> Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

double Var::value() const {
  auto v = values();
  if (v.size() != 1) throw ShapeError("value() on non-scalar tensor of shape " + shape_str(shape()));
  return v[0];
}

// --- Graph ----------------------------------------------------------------

Var Graph::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), {}, requires_grad, {}});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool rg = false;
  for (const Var& in : inputs) {
    if (&in.graph() != this) throw std::logic_error("op inputs belong to different graphs");
    rg = rg || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, rg, rg ? std::move(backward) : BackwardFn{}});
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

std::vector<double>& Graph::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.values.size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw std::logic_error("backward: loss belongs to a different graph");
  if (done_) throw std::logic_error("backward: graph already back-propagated; reset() before reuse");
  if (!loss.shape().empty()) throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  done_ = true;
  if (nodes_[loss.id()].requires_grad) {
    nodes_[loss.id()].grad.assign(1, 1.0);
    for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.backward && !n.grad.empty()) n.backward(*this, id);
    }
  }
  for (auto& n : nodes_) {
    if (n.requires_grad && n.grad.empty()) n.grad.assign(n.value.values.size(), 0.0);
  }
}

void Graph::reset() {
  nodes_.clear();
  done_ = false;
}

// --- helpers --------------------------------------------------------------

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(a.shape()));
  }
}

// rows x cols view of the last axis
std::pair<std::size_t, std::size_t> rows_cols(const char* op, Var a) {
  if (a.shape().empty()) throw ShapeError(std::string(op) + ": needs at least one axis");
  std::size_t cols = a.shape().back();
  if (cols == 0) throw ShapeError(std::string(op) + ": empty last axis");
  return {a.size() / cols, cols};
}

Tensor like(Var a) { return Tensor(a.shape()); }

}  // namespace

// --- elementwise ----------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out = like(a);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = av[i] + bv[i];
  auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    if (g.requires_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (g.requires_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out = like(a);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = av[i] - bv[i];
  auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    if (g.requires_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (g.requires_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out = like(a);
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = av[i] * bv[i];
  auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto av = g.values(ia), bv = g.values(ib);
    if (g.requires_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
    }
    if (g.requires_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = like(a);
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = av[i] * s;
  auto ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, s](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * s;
  });
}

// --- linear algebra -------------------------------------------------------

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &out.values[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  auto ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib, m, k, n](Graph& g, std::uint32_t self) {
    const auto& dc = g.out_grad(self);
    auto av = g.values(ia), bv = g.values(ib);
    if (g.requires_grad(ia)) {
      auto& da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = &dc[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &bv[p * n];
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
          da[i * k + p] += acc;
        }
      }
    }
    if (g.requires_grad(ib)) {
      auto& db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = &dc[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          double* dbrow = &db[p * n];
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.values[j * r + i] = av[i * c + j];
  auto ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, r, c](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) da[i * c + j] += dy[j * r + i];
  });
}

Var reshape(Var a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  auto ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
  });
}

Var gather_rows(Var table, std::span<const TokenId> ids) {
  require_rank("gather_rows", table, 2);
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  std::vector<TokenId> idx(ids.begin(), ids.end());
  Tensor out({idx.size(), d});
  auto tv = table.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[i]) + " out of range for table " +
                       shape_str(table.shape()));
    }
    std::copy_n(&tv[idx[i] * d], d, &out.values[i * d]);
  }
  auto it = table.id();
  return table.graph().record(std::move(out), {table}, [it, d, idx = std::move(idx)](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto& dt = g.grad_buffer(it);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) dt[idx[i] * d + j] += dy[i * d + j];
  });
}

Var masked_fill(Var a, const std::vector<bool>& mask, double fill) {
  if (mask.size() != a.size()) {
    throw ShapeError("masked_fill: mask has " + std::to_string(mask.size()) + " entries, tensor " +
                     shape_str(a.shape()));
  }
  Tensor out = like(a);
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = mask[i] ? av[i] + fill : av[i];
  auto ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto& da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
  });
}

// --- normalizations -------------------------------------------------------

Var log_softmax(Var a) {
  auto [rows, cols] = rows_cols("log_softmax", a);
  Tensor out = like(a);
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &av[r * cols];
    double* y = &out.values[r * cols];
    const double mx = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
    const double ls = std::log(s);
    for (std::size_t c = 0; c < cols; ++c) y[c] = (x[c] - mx) - ls;
  }
  auto ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, rows, cols](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto y = g.values(self);
    auto& da = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < cols; ++c) total += dy[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        da[i] += dy[i] - std::exp(y[i]) * total;
      }
    }
  });
}

Var softmax(Var a) {
  auto [rows, cols] = rows_cols("softmax", a);
  Tensor out = like(a);
  auto av = a.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = &av[r * cols];
    double* y = &out.values[r * cols];
    const double mx = *std::max_element(x, x + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= s;
  }
  auto ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, rows, cols](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto y = g.values(self);
    auto& da = g.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        da[i] += y[i] * (dy[i] - dot);
      }
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  auto [rows, cols] = rows_cols("layer_norm", x);
  if (gain.shape() != Shape{cols} || bias.shape() != Shape{cols}) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(cols) + "], got " + shape_str(gain.shape()) +
                     " and " + shape_str(bias.shape()));
  }
  Tensor out = like(x);
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(rows);
  auto xv = x.values(), gv = gain.values(), bv = bias.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * cols];
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xr[c];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(cols);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      xhat[i] = (xr[c] - mu) * rstd[r];
      out.values[i] = gv[c] * xhat[i] + bv[c];
    }
  }
  auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, rows, cols, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& g, std::uint32_t self) {
        const auto& dy = g.out_grad(self);
        auto gv = g.values(ig);
        if (g.requires_grad(ig)) {
          auto& dg = g.grad_buffer(ig);
          for (std::size_t i = 0; i < dy.size(); ++i) dg[i % cols] += dy[i] * xhat[i];
        }
        if (g.requires_grad(ib)) {
          auto& db = g.grad_buffer(ib);
          for (std::size_t i = 0; i < dy.size(); ++i) db[i % cols] += dy[i];
        }
        if (g.requires_grad(ix)) {
          auto& dx = g.grad_buffer(ix);
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              const double d = dy[i] * gv[c];
              mean_d += d;
              mean_dx += d * xhat[i];
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t c = 0; c < cols; ++c) {
              const std::size_t i = r * cols + c;
              dx[i] += rstd[r] * (dy[i] * gv[c] - mean_d - xhat[i] * mean_dx);
            }
          }
        }
      });
}

Var gelu(Var a) {
  Tensor out = like(a);
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = 0.5 * av[i] * (1.0 + std::erf(av[i] * std::numbers::sqrt2 / 2.0));
  auto ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto av = g.values(ia);
    auto& da = g.grad_buffer(ia);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const double x = av[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      da[i] += dy[i] * (cdf + x * pdf);
    }
  });
}

// --- reductions and picks -------------------------------------------------

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto ia = a.id();
  return a.graph().record(Tensor::scalar(s), {a}, [ia](Graph& g, std::uint32_t self) {
    const double dy = g.out_grad(self)[0];
    for (auto& d : g.grad_buffer(ia)) d += dy;
  });
}

Var mean(Var a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double v : a.values()) s += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  auto ia = a.id();
  return a.graph().record(Tensor::scalar(s * inv), {a}, [ia, inv](Graph& g, std::uint32_t self) {
    const double dy = g.out_grad(self)[0] * inv;
    for (auto& d : g.grad_buffer(ia)) d += dy;
  });
}

namespace {

std::vector<std::size_t> flat_cells(const char* op, Var x, std::span<const Cell> cells) {
  if (x.shape().empty() || x.shape().size() > 2) {
    throw ShapeError(std::string(op) + ": expected a vector or matrix, got " + shape_str(x.shape()));
  }
  const std::size_t rows = x.shape().size() == 2 ? x.shape()[0] : 1;
  const std::size_t cols = x.shape().back();
  std::vector<std::size_t> flat(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].row >= rows || cells[i].col >= cols) {
      throw ShapeError(std::string(op) + ": cell (" + std::to_string(cells[i].row) + "," +
                       std::to_string(cells[i].col) + ") outside " + shape_str(x.shape()));
    }
    flat[i] = cells[i].row * cols + cells[i].col;
  }
  return flat;
}

}  // namespace

Var gather_at(Var x, std::span<const Cell> cells) {
  auto flat = flat_cells("gather_at", x, cells);
  Tensor out({flat.size()});
  auto xv = x.values();
  for (std::size_t i = 0; i < flat.size(); ++i) out.values[i] = xv[flat[i]];
  auto ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, flat = std::move(flat)](Graph& g, std::uint32_t self) {
    const auto& dy = g.out_grad(self);
    auto& dx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < flat.size(); ++i) dx[flat[i]] += dy[i];
  });
}

Var nll_gather(Var logp, std::span<const Cell> cells, std::span<const double> weights) {
  if (!weights.empty() && weights.size() != cells.size()) {
    throw ShapeError("nll_gather: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(cells.size()) + " cells");
  }
  auto flat = flat_cells("nll_gather", logp, cells);
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(flat.size(), 1.0);
  auto lv = logp.values();
  double s = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) s -= w[i] * lv[flat[i]];
  auto il = logp.id();
  return logp.graph().record(Tensor::scalar(s), {logp},
                             [il, flat = std::move(flat), w = std::move(w)](Graph& g, std::uint32_t self) {
                               const double dy = g.out_grad(self)[0];
                               auto& dl = g.grad_buffer(il);
                               for (std::size_t i = 0; i < flat.size(); ++i) dl[flat[i]] -= w[i] * dy;
                             });
}

// --- grad check -----------------------------------------------------------

namespace {

double eval_at(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Graph g;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(g.constant(t));
  Var out = f(g, vars);
  if (!out.shape().empty()) throw ShapeError("grad_check: function must return a scalar, got " + shape_str(out.shape()));
  return out.value();
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, const GradCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw std::invalid_argument("grad_check: step must be positive");
  Graph g;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(g.leaf(t, true));
  Var out = f(g, vars);
  if (!out.shape().empty()) throw ShapeError("grad_check: function must return a scalar, got " + shape_str(out.shape()));
  g.backward(out);

  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::size_t n = inputs[k].size();
    std::vector<std::size_t> coords;
    if (opts.coords_per_input && *opts.coords_per_input < n) {
      for (std::size_t c = 0; c < *opts.coords_per_input; ++c) coords.push_back(rng() % n);
    } else {
      for (std::size_t c = 0; c < n; ++c) coords.push_back(c);
    }
    auto analytic = vars[k].grad();
    for (std::size_t c : coords) {
      const double orig = inputs[k].values[c];
      probe[k].values[c] = orig + opts.step;
      const double fp = eval_at(f, probe);
      probe[k].values[c] = orig - opts.step;
      const double fm = eval_at(f, probe);
      probe[k].values[c] = orig;
      const double central = (fp - fm) / (2.0 * opts.step);
      const double err = std::abs(analytic[c] - central) / std::max(1e-8, std::abs(analytic[c]) + std::abs(central));
      ++report.coords_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = k;
        report.worst_coord = c;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Var(Graph&, Var)>& f, const Tensor& x, double h) {
  GradCheckOptions opts;
  opts.step = h;
  return grad_check([&f](Graph& g, std::span<const Var> v) { return f(g, v[0]); }, {x}, opts).max_rel_error;
}

}  // namespace otrlab
