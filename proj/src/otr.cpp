// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/otr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace otrlab {

std::string to_string(Objective o) {
  switch (o) {
    case Objective::sft: return "sft";
    case Objective::dft: return "dft";
    case Objective::otr: return "otr";
  }
  return "?";
}

Objective objective_from_string(const std::string& s) {
  if (s == "sft") return Objective::sft;
  if (s == "dft") return Objective::dft;
  if (s == "otr") return Objective::otr;
  throw std::invalid_argument("unknown objective '" + s + "' (expected sft, dft or otr)");
}

void LossSpec::validate() const {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kappa must be positive");
  if (k_samples < 1) throw std::invalid_argument("k_samples must be at least 1");
  if (!std::isfinite(beta)) throw std::invalid_argument("beta must be finite");
}

RolloutRow RolloutRow::from_samples(std::vector<TokenId> samples, TokenId gt) {
  RolloutRow r;
  r.gt = gt;
  for (auto a : samples) {
    if (a == gt) {
      ++r.n_gt;
    } else {
      ++r.unique_wrong[a];
    }
  }
  r.sampled_ids = std::move(samples);
  return r;
}

std::vector<double> sampling_policy(std::span<const double> logits, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("sampling_policy: kappa must be positive");
  if (logits.empty()) throw std::invalid_argument("sampling_policy: empty logits");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp((logits[i] - mx) / kappa));
  for (auto& x : p) x /= s;
  return p;
}

std::vector<TokenId> sample_candidates(std::span<const double> probs, std::size_t k, const CounterRng& rng) {
  if (k < 1) throw std::invalid_argument("sample_candidates: K must be at least 1");
  if (probs.empty()) throw std::invalid_argument("sample_candidates: empty distribution");
  std::vector<double> cdf(probs.size());
  double s = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] >= 0.0)) throw std::invalid_argument("sample_candidates: negative or NaN probability");
    if (probs[i] > 0.0) last_positive = i;
    cdf[i] = (s += probs[i]);
  }
  if (std::abs(s - 1.0) > 1e-9) {
    throw std::invalid_argument("sample_candidates: probabilities sum to " + std::to_string(s) + ", not 1");
  }
  std::vector<TokenId> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double u = rng.uniform(j);
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const std::size_t idx = it == cdf.end() ? last_positive : static_cast<std::size_t>(it - cdf.begin());
    out[j] = static_cast<TokenId>(idx);
  }
  return out;
}

RolloutOutcome rollout_rows(std::span<const double> logits, std::size_t vocab, std::span<const TokenId> targets,
                            double kappa, std::size_t k, const RolloutKey& key) {
  if (logits.size() != vocab * targets.size()) throw ShapeError("rollout_rows: logits do not match targets");
  RolloutOutcome out;
  out.rows.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    const auto row = logits.subspan(t * vocab, vocab);
    if (!std::all_of(row.begin(), row.end(), [](double x) { return std::isfinite(x); })) {
      throw NumericError("rollout_rows: non-finite logit at response position " + std::to_string(t));
    }
    auto probs = sampling_policy(row, kappa);
    auto samples = sample_candidates(probs, k, key.at(static_cast<std::uint32_t>(t)));
    out.rows.push_back(RolloutRow::from_samples(std::move(samples), targets[t]));
  }
  return out;
}

namespace {

void check_row(const RolloutRow& r, std::size_t expected_k) {
  if (r.k() != expected_k) {
    throw std::invalid_argument("rollout has K=" + std::to_string(r.k()) + " samples, loss spec expects " +
                                std::to_string(expected_k));
  }
  std::size_t total = r.n_gt;
  for (const auto& [id, m] : r.unique_wrong) {
    if (id == r.gt) throw std::invalid_argument("rollout lists the reference token among wrong samples");
    total += m;
  }
  if (total != r.k()) throw std::invalid_argument("rollout counts do not add up to K");
}

// Cells and weights of -(scale/K)[n_gt lp(gt) + beta sum m_j lp(j)] on one row.
void append_otr_cells(const RolloutRow& r, std::size_t row, double beta, double scale, std::vector<Cell>& cells,
                      std::vector<double>& weights) {
  const double inv_k = scale / static_cast<double>(r.k());
  if (r.n_gt > 0) {
    cells.push_back({row, r.gt});
    weights.push_back(static_cast<double>(r.n_gt) * inv_k);
  }
  for (const auto& [id, m] : r.unique_wrong) {
    cells.push_back({row, id});
    weights.push_back(beta * static_cast<double>(m) * inv_k);
  }
}

std::span<const double> row_of(Var m, std::size_t row) {
  const std::size_t v = m.shape().back();
  return m.values().subspan(row * v, v);
}

void require_response(const Example& ex) {
  if (ex.response_ids.empty()) throw std::invalid_argument("loss: example has an empty response");
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Var otr_token_loss(Var log_probs, std::size_t row, const RolloutRow& outcome, double beta, std::size_t expected_k) {
  check_row(outcome, expected_k);
  std::vector<Cell> cells;
  std::vector<double> weights;
  append_otr_cells(outcome, row, beta, 1.0, cells, weights);
  return nll_gather(log_probs, cells, weights);
}

Var otr_token_loss(Var log_probs, const RolloutRow& outcome, double beta, std::size_t expected_k) {
  return otr_token_loss(log_probs, 0, outcome, beta, expected_k);
}

double otr_token_value(std::span<const double> lp, const RolloutRow& r, double beta) {
  double wrong = 0.0;
  for (const auto& [id, m] : r.unique_wrong) wrong += static_cast<double>(m) * lp[id];
  return -(static_cast<double>(r.n_gt) * lp[r.gt] + beta * wrong) / static_cast<double>(r.k());
}

Var response_logits(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex) {
  require_response(ex);
  if (input_length(ex) > model.config().context_len) {
    throw std::invalid_argument("loss: example length " + std::to_string(input_length(ex)) +
                                " exceeds context_len " + std::to_string(model.config().context_len));
  }
  const auto input = model_input(ex);
  Var z = model.logits(g, b, input);
  const std::size_t p = ex.prompt_ids.size();
  std::vector<TokenId> rows(ex.response_ids.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<TokenId>(p + i);
  return gather_rows(z, rows);
}

LossBreakdown otr_sequence_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex,
                                const LossSpec& spec, const RolloutKey& key, const RolloutOutcome* frozen) {
  spec.validate();
  Var z = response_logits(g, model, b, ex);
  Var lp = log_softmax(z);
  const std::size_t T = ex.response_ids.size();
  const std::size_t V = z.shape()[1];

  LossBreakdown out;
  out.logits = z;
  out.rollout = frozen ? *frozen : rollout_rows(z.values(), V, ex.response_ids, spec.kappa, spec.k_samples, key);
  if (out.rollout.rows.size() != T) throw std::invalid_argument("rollout does not cover every response position");

  std::vector<Cell> cells;
  std::vector<double> weights;
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const auto& r = out.rollout.rows[t];
    if (r.gt != ex.response_ids[t]) throw std::invalid_argument("rollout reference token differs from the example");
    check_row(r, spec.k_samples);
    append_otr_cells(r, t, spec.beta, inv_t, cells, weights);

    auto lrow = row_of(lp, t);
    const double k = static_cast<double>(r.k());
    double wrong = 0.0;
    for (const auto& [id, m] : r.unique_wrong) wrong += static_cast<double>(m) * lrow[id];
    const double gt_c = -static_cast<double>(r.n_gt) * lrow[r.gt] / k;
    const double pen_c = -spec.beta * wrong / k;
    out.gt_per_token.push_back(gt_c);
    out.penalty_per_token.push_back(pen_c);
    out.per_token.push_back(gt_c + pen_c);
  }
  out.total = nll_gather(lp, cells, weights);
  out.total_value = out.total.value();
  out.gt_term = mean_of(out.gt_per_token);
  out.penalty_term = mean_of(out.penalty_per_token);
  return out;
}

namespace {

// Shared body of SFT and DFT: -(1/T) sum_t w_t log pi(x_t), with w_t constant.
template <typename WeightFn>
LossBreakdown weighted_nll(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex, WeightFn weight) {
  Var z = response_logits(g, model, b, ex);
  Var lp = log_softmax(z);
  const std::size_t T = ex.response_ids.size();
  const double inv_t = 1.0 / static_cast<double>(T);
  LossBreakdown out;
  out.logits = z;
  std::vector<Cell> cells(T);
  std::vector<double> weights(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double l = row_of(lp, t)[ex.response_ids[t]];
    const double w = weight(t, l);
    cells[t] = {t, ex.response_ids[t]};
    weights[t] = w * inv_t;
    out.per_token.push_back(-w * l);
  }
  out.gt_per_token = out.per_token;
  out.penalty_per_token.assign(T, 0.0);
  out.total = nll_gather(lp, cells, weights);
  out.total_value = out.total.value();
  out.gt_term = mean_of(out.per_token);
  return out;
}

}  // namespace

LossBreakdown sft_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex) {
  return weighted_nll(g, model, b, ex, [](std::size_t, double) { return 1.0; });
}

LossBreakdown dft_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex,
                       std::span<const double> frozen_weights) {
  if (!frozen_weights.empty() && frozen_weights.size() != ex.response_ids.size()) {
    throw std::invalid_argument("dft_loss: one frozen weight per response position expected");
  }
  // the weight pi(x_t) is a stop-gradient constant
  return weighted_nll(g, model, b, ex, [&](std::size_t t, double logp) {
    return frozen_weights.empty() ? std::exp(logp) : frozen_weights[t];
  });
}

LossBreakdown sequence_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex,
                            const LossSpec& spec, const RolloutKey& key) {
  switch (spec.objective) {
    case Objective::sft: return sft_loss(g, model, b, ex);
    case Objective::dft: return dft_loss(g, model, b, ex);
    case Objective::otr: return otr_sequence_loss(g, model, b, ex, spec, key);
  }
  throw std::logic_error("unhandled objective");
}

double exact_otr_expectation(std::span<const double> log_probs, TokenId gt, double kappa, double beta) {
  if (gt >= log_probs.size()) throw std::invalid_argument("exact_otr_expectation: reference token outside vocab");
  const auto tempered = sampling_policy(log_probs, kappa);
  double s = 0.0;
  for (std::size_t a = 0; a < log_probs.size(); ++a) s -= tempered[a] * reward(static_cast<TokenId>(a), gt, beta) * log_probs[a];
  return s;
}

Var exact_otr_expectation(Var log_probs, TokenId gt, double kappa, double beta) {
  if (log_probs.shape().size() != 1) throw ShapeError("exact_otr_expectation: expected a [V] vector");
  const std::size_t V = log_probs.size();
  if (gt >= V) throw std::invalid_argument("exact_otr_expectation: reference token outside vocab");
  const auto tempered = sampling_policy(log_probs.values(), kappa);
  std::vector<Cell> cells(V);
  std::vector<double> weights(V);
  for (std::size_t a = 0; a < V; ++a) {
    cells[a] = {0, a};
    weights[a] = tempered[a] * reward(static_cast<TokenId>(a), gt, beta);
  }
  return nll_gather(log_probs, cells, weights);
}

GtCountMetrics gt_count_metrics(std::span<const RolloutRow> rows) {
  if (rows.empty()) throw std::invalid_argument("gt_count_metrics: no rollout rows");
  double n_gt = 0.0, k = 0.0;
  for (const auto& r : rows) {
    n_gt += static_cast<double>(r.n_gt);
    k += static_cast<double>(r.k());
  }
  return {n_gt / k, n_gt / static_cast<double>(rows.size())};
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

}  // namespace otrlab
