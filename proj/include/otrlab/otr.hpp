// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fine-tuning objectives: SFT, DFT and one-token rollout (OTR).
//
// OTR treats each response position as a one-step episode: K candidate tokens
// are drawn from the temperature-scaled policy softmax(logits / kappa), each
// earns reward 1 if it equals the reference token and beta otherwise, and the
// per-position loss is the reward-weighted negative log-likelihood of the
// candidates under the untempered policy:
//
//   loss_t = -(1/K) [ N_gt * log pi(x_t) + beta * sum_{wrong j} log pi(a_j) ]
//
// Sampling and rewards are constants; gradient flows only through log pi.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "otrlab/autodiff.hpp"
#include "otrlab/data.hpp"
#include "otrlab/models.hpp"
#include "otrlab/rng.hpp"

namespace otrlab {

enum class Objective { sft, dft, otr };

std::string to_string(Objective o);
Objective objective_from_string(const std::string& s);

struct LossSpec {
  Objective objective = Objective::otr;
  double kappa = 1.3;
  std::size_t k_samples = 256;
  double beta = -0.1;

  void validate() const;
};

/// Rollout at one response position.
struct RolloutRow {
  TokenId gt = 0;
  std::vector<TokenId> sampled_ids;
  std::size_t n_gt = 0;
  std::map<TokenId, std::size_t> unique_wrong;

  std::size_t k() const { return sampled_ids.size(); }
  static RolloutRow from_samples(std::vector<TokenId> samples, TokenId gt);
};

struct RolloutOutcome {
  std::vector<RolloutRow> rows;  // one per response position
};

/// Identifies the rollout stream of one sequence in one step; position t and
/// draw index j complete the counter.
struct RolloutKey {
  std::uint64_t seed = 0;
  std::uint32_t step = 0;
  std::uint32_t sequence = 0;
  Stream stream = Stream::rollout;

  CounterRng at(std::uint32_t position) const { return CounterRng(seed, stream, step, sequence, position); }
};

struct LossBreakdown {
  Var total;   // scalar graph node
  Var logits;  // [T x V] response-position logits the loss was built from
  double total_value = 0.0;
  double gt_term = 0.0;
  double penalty_term = 0.0;
  std::vector<double> per_token;
  std::vector<double> gt_per_token;
  std::vector<double> penalty_per_token;
  RolloutOutcome rollout;  // empty unless the objective samples
};

/// softmax(logits / kappa), max-shifted.
std::vector<double> sampling_policy(std::span<const double> logits, double kappa);

/// K i.i.d. inverse-CDF draws; draw j uses uniform j of `rng`.
std::vector<TokenId> sample_candidates(std::span<const double> probs, std::size_t k, const CounterRng& rng);

inline double reward(TokenId sampled, TokenId gt, double beta) { return sampled == gt ? 1.0 : beta; }

/// Rollout for every row of a [T x V] logits block against the reference ids.
RolloutOutcome rollout_rows(std::span<const double> logits, std::size_t vocab, std::span<const TokenId> targets,
                            double kappa, std::size_t k, const RolloutKey& key);

/// Grouped per-position OTR loss on row `row` of log_probs ([V] or [T x V]).
Var otr_token_loss(Var log_probs, std::size_t row, const RolloutRow& outcome, double beta, std::size_t expected_k);
Var otr_token_loss(Var log_probs, const RolloutRow& outcome, double beta, std::size_t expected_k);

/// Numerical value of the grouped per-position loss from one row of log-probabilities.
double otr_token_value(std::span<const double> log_probs_row, const RolloutRow& outcome, double beta);

/// One forward pass, rollout at every response position, mean over positions.
/// If `frozen` is given its rows are used instead of sampling.
LossBreakdown otr_sequence_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex,
                                const LossSpec& spec, const RolloutKey& key, const RolloutOutcome* frozen = nullptr);
LossBreakdown sft_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex);
/// With frozen_weights the per-position weights are taken from it instead of pi(x_t).
LossBreakdown dft_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex,
                       std::span<const double> frozen_weights = {});

/// Dispatches on spec.objective.
LossBreakdown sequence_loss(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex,
                            const LossSpec& spec, const RolloutKey& key);

/// [T x V] logits of the response positions of ex (a graph node).
Var response_logits(Graph& g, const TokenPolicy& model, const Binding& b, const Example& ex);

/// -sum_a pi'(a) R(a, gt) log pi(a), summed over the whole vocabulary.
double exact_otr_expectation(std::span<const double> log_probs, TokenId gt, double kappa, double beta);
/// Same, as a graph node differentiable through log pi only.
Var exact_otr_expectation(Var log_probs, TokenId gt, double kappa, double beta);

struct GtCountMetrics {
  double gt_fraction = 0.0;
  double mean_n_gt = 0.0;
};

GtCountMetrics gt_count_metrics(std::span<const RolloutRow> rows);

double entropy(std::span<const double> probs);

}  // namespace otrlab
