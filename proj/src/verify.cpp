// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "otrlab/otr.hpp"

namespace otrlab {

namespace {

CheckResult below(std::string name, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), measured, threshold, measured < threshold, std::move(detail)};
}

std::vector<double> log_softmax_values(std::span<const double> logits) {
  Graph g;
  Var x = g.constant(Tensor({logits.size()}, std::vector<double>(logits.begin(), logits.end())));
  auto v = log_softmax(x).values();
  return {v.begin(), v.end()};
}

Example random_example(const CounterRng& rng, std::size_t vocab) {
  std::uint64_t i = 0;
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return lo + rng.bits(i++) % (hi - lo); };
  Example ex;
  const std::size_t p = pick(3, 9), r = pick(2, 6);
  for (std::size_t j = 0; j < p; ++j) ex.prompt_ids.push_back(static_cast<TokenId>(pick(3, vocab)));
  for (std::size_t j = 0; j < r; ++j) ex.response_ids.push_back(static_cast<TokenId>(pick(3, vocab)));
  ex.response_ids.push_back(Vocab::kEos);
  return ex;
}

}  // namespace

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"gradcheck", "estimator", "equivalence"};
  return names;
}

std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed) {
  if (suite == "gradcheck") return gradcheck_suite(seed);
  if (suite == "estimator") return estimator_suite(seed);
  if (suite == "equivalence") return equivalence_suite(seed);
  throw std::invalid_argument("unknown suite '" + suite + "' (expected gradcheck, estimator or equivalence)");
}

std::vector<CheckResult> gradcheck_suite(std::uint64_t seed, std::size_t points) {
  constexpr double kTol = 1e-4;
  const Objective objectives[] = {Objective::sft, Objective::dft, Objective::otr};
  double worst[3] = {0.0, 0.0, 0.0};
  std::size_t coords[3] = {0, 0, 0};

  for (std::size_t p = 0; p < points; ++p) {
    ModelConfig mc;
    mc.vocab_size = 16;
    mc.context_len = 32;
    mc.d_model = 32;
    mc.n_layers = 2;
    mc.init_seed = seed * 1000 + p;
    auto model = init_params(mc);
    // move away from the near-linear initial regime
    const CounterRng jitter(seed, Stream::test, static_cast<std::uint32_t>(p), 1);
    std::uint64_t n = 0;
    for (auto& [name, t] : model->params()) {
      for (auto& w : t.values) w += 0.2 * jitter.normal(n++);
    }
    const Example ex = random_example(CounterRng(seed, Stream::test, static_cast<std::uint32_t>(p), 2), mc.vocab_size);

    std::vector<Tensor> inputs;
    for (const auto& nt : model->params()) inputs.push_back(nt.value);

    LossSpec spec;
    spec.objective = Objective::otr;
    spec.k_samples = 16;
    const RolloutKey key{seed, static_cast<std::uint32_t>(p), 0, Stream::test};
    // stop-gradient quantities are held at their values at this point
    RolloutOutcome frozen;
    std::vector<double> dft_weights;
    {
      Graph g;
      const Binding b = bind(g, model->params(), false);
      frozen = otr_sequence_loss(g, *model, b, ex, spec, key).rollout;
      const auto lp = log_softmax(response_logits(g, *model, b, ex));
      const std::size_t V = lp.shape()[1];
      for (std::size_t t = 0; t < ex.response_ids.size(); ++t) {
        dft_weights.push_back(std::exp(lp.values()[t * V + ex.response_ids[t]]));
      }
    }

    for (std::size_t o = 0; o < 3; ++o) {
      const Objective obj = objectives[o];
      ScalarFn f = [&](Graph& g, std::span<const Var> vars) {
        const Binding b{std::vector<Var>(vars.begin(), vars.end())};
        switch (obj) {
          case Objective::sft: return sft_loss(g, *model, b, ex).total;
          case Objective::dft: return dft_loss(g, *model, b, ex, dft_weights).total;
          case Objective::otr: return otr_sequence_loss(g, *model, b, ex, spec, key, &frozen).total;
        }
        throw std::logic_error("unhandled objective");
      };
      GradCheckOptions opts;
      opts.step = 1e-4;
      opts.coords_per_input = 2;
      opts.seed = seed * 7919 + p * 3 + o;
      const auto rep = grad_check(f, inputs, opts);
      worst[o] = std::max(worst[o], rep.max_rel_error);
      coords[o] += rep.coords_checked;
    }
  }
  std::vector<CheckResult> out;
  for (std::size_t o = 0; o < 3; ++o) {
    out.push_back(below("gradcheck." + to_string(objectives[o]), worst[o], kTol,
                        std::to_string(points) + " points, " + std::to_string(coords[o]) + " coordinates"));
  }
  return out;
}

std::vector<CheckResult> estimator_suite(std::uint64_t seed, std::size_t draws) {
  constexpr std::size_t V = 8, K = 16;
  constexpr double kappa = 1.3, beta = -0.1;
  ModelConfig mc;
  mc.kind = ModelKind::bigram;
  mc.vocab_size = V;
  mc.context_len = 4;
  mc.init_seed = seed;
  auto model = init_params(mc);
  const CounterRng table_rng(seed, Stream::test, 0, 3);
  auto& tbl = model->params()[0].value;
  for (std::size_t i = 0; i < tbl.size(); ++i) tbl.values[i] = table_rng.normal(i);

  const TokenId context = Vocab::kBos;
  const Tensor lg = model->logits_values(std::vector<TokenId>{context});
  const auto lp = log_softmax_values(lg.values);
  const TokenId gt = static_cast<TokenId>(table_rng.bits(1u << 20) % V);
  const double exact = exact_otr_expectation(lp, gt, kappa, beta);
  const auto tempered = sampling_policy(lp, kappa);

  auto draw = [&](std::uint32_t replicate, std::uint32_t i) {
    const auto s = sample_candidates(tempered, K, CounterRng(seed, Stream::rollout, replicate, i));
    return otr_token_value(lp, RolloutRow::from_samples(s, gt), beta);
  };

  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double x = draw(0, static_cast<std::uint32_t>(i));
    sum += x;
    sq += x * x;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double se = std::sqrt(std::max(0.0, (sq - n * mean * mean) / (n - 1.0)) / n);
  const double z = se > 0.0 ? std::abs(mean - exact) / se : (mean == exact ? 0.0 : INFINITY);

  // RMSE of the sample mean over independent replicates at each N.
  const std::size_t sizes[] = {100, 1000, 10000};
  constexpr std::uint32_t kReplicates = 40;
  double rmse[3];
  for (std::size_t s = 0; s < 3; ++s) {
    double acc = 0.0;
    for (std::uint32_t r = 0; r < kReplicates; ++r) {
      double m = 0.0;
      for (std::size_t i = 0; i < sizes[s]; ++i) m += draw(1 + r + kReplicates * static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(i));
      m /= static_cast<double>(sizes[s]);
      acc += (m - exact) * (m - exact);
    }
    rmse[s] = std::sqrt(acc / kReplicates);
  }
  const bool decreasing = rmse[0] > rmse[1] && rmse[1] > rmse[2];
  double lo = INFINITY, hi = 0.0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double scaled = rmse[s] * std::sqrt(static_cast<double>(sizes[s]));
    lo = std::min(lo, scaled);
    hi = std::max(hi, scaled);
  }
  const double ratio = hi / lo;
  std::vector<CheckResult> out;
  out.push_back(below("estimator.unbiased_z", z, 4.0,
                      "mean " + std::to_string(mean) + " exact " + std::to_string(exact) + " se " + std::to_string(se)));
  CheckResult trend = below("estimator.sqrt_n_ratio", ratio, 3.0,
                            "rmse " + std::to_string(rmse[0]) + " " + std::to_string(rmse[1]) + " " +
                                std::to_string(rmse[2]));
  trend.passed = trend.passed && decreasing;
  if (!decreasing) trend.detail += " (not decreasing)";
  out.push_back(trend);
  return out;
}

std::vector<CheckResult> equivalence_suite(std::uint64_t seed) {
  double value_err = 0.0, grad_err = 0.0;
  for (std::uint32_t trial = 0; trial < 100; ++trial) {
    const CounterRng rng(seed, Stream::test, trial, 4);
    ModelConfig mc;
    mc.kind = ModelKind::bigram;
    mc.vocab_size = 3 + rng.bits(0) % 30;
    mc.context_len = 2;
    auto model = init_params(mc);
    auto& tbl = model->params()[0].value;
    const std::size_t V = mc.vocab_size;
    for (std::size_t a = 0; a < V; ++a) tbl.at(Vocab::kBos, a) = 2.0 * rng.normal(a + 1);

    // response [EOS] is scored by the row of BOS
    const Example ex{{}, {Vocab::kEos}};
    Graph g1;
    const Binding b = bind(g1, model->params(), true);
    const LossBreakdown dft = dft_loss(g1, *model, b, ex);
    g1.backward(dft.total);
    const auto dft_grad = b.params[0].grad().subspan(Vocab::kBos * V, V);

    Graph g2;
    std::vector<double> row(V);
    for (std::size_t a = 0; a < V; ++a) row[a] = tbl.at(Vocab::kBos, a);
    Var x = g2.leaf(Tensor({V}, row), true);
    Var ex_loss = exact_otr_expectation(log_softmax(x), Vocab::kEos, 1.0, 0.0);
    g2.backward(ex_loss);

    value_err = std::max(value_err, std::abs(ex_loss.value() - dft.per_token[0]));
    for (std::size_t a = 0; a < V; ++a) grad_err = std::max(grad_err, std::abs(x.grad()[a] - dft_grad[a]));
  }

  double grouped_err = 0.0;
  for (std::uint32_t trial = 0; trial < 1000; ++trial) {
    const CounterRng rng(seed, Stream::test, trial, 5);
    std::uint64_t i = 0;
    const std::size_t V = 2 + rng.bits(i++) % 11;
    const std::size_t K = 1 + rng.bits(i++) % 32;
    const std::size_t pool = 1 + rng.bits(i++) % V;  // small pools force duplicates
    const double beta = 2.0 * rng.uniform(i++) - 1.0;
    std::vector<double> logits(V);
    for (auto& l : logits) l = 3.0 * rng.normal(i++);
    const auto lp = log_softmax_values(logits);
    const TokenId gt = static_cast<TokenId>(rng.bits(i++) % V);
    std::vector<TokenId> samples(K);
    for (auto& s : samples) s = static_cast<TokenId>(rng.bits(i++) % pool);

    double ungrouped = 0.0;
    for (TokenId a : samples) ungrouped -= reward(a, gt, beta) * lp[a];
    ungrouped /= static_cast<double>(K);

    const RolloutRow r = RolloutRow::from_samples(samples, gt);
    Graph g;
    Var x = g.constant(Tensor({V}, lp));
    const double grouped = otr_token_loss(x, r, beta, K).value();
    const double diff = std::abs(grouped - ungrouped);
    const double rel = diff == 0.0 ? 0.0 : diff / std::max(std::abs(ungrouped), 1e-300);
    grouped_err = std::max(grouped_err, rel);
  }

  return {below("equivalence.dft_value", value_err, 1e-12, "100 distributions, max abs diff"),
          below("equivalence.dft_grad", grad_err, 1e-10, "100 distributions, max abs diff"),
          below("equivalence.grouped", grouped_err, 1e-12, "1000 outcomes, max rel diff")};
}

}  // namespace otrlab
