// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace otrlab {

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (clip_norm && !(*clip_norm > 0.0 && std::isfinite(*clip_norm))) {
    throw std::invalid_argument("clip_norm must be a positive finite number");
  }
  if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0)) throw std::invalid_argument("adamw.beta1 must be in [0, 1)");
  if (!(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) throw std::invalid_argument("adamw.beta2 must be in [0, 1)");
  if (!(adamw.eps > 0.0)) throw std::invalid_argument("adamw.eps must be positive");
  if (!(adamw.weight_decay >= 0.0 && std::isfinite(adamw.weight_decay))) {
    throw std::invalid_argument("adamw.weight_decay must be non-negative");
  }
  if (!(gt_probe_kappa > 0.0 && std::isfinite(gt_probe_kappa))) {
    throw std::invalid_argument("gt_probe_kappa must be positive");
  }
  if (gt_probe_k < 1) throw std::invalid_argument("gt_probe_k must be at least 1");
  if (eval_max_new < 1) throw std::invalid_argument("eval_max_new must be at least 1");
  if (!(eval_mode.temperature > 0.0)) throw std::invalid_argument("eval temperature must be positive");
  if (!(eval_mode.top_p > 0.0 && eval_mode.top_p <= 1.0)) throw std::invalid_argument("eval top_p must be in (0, 1]");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  ScheduleConfig s = schedule;
  s.total_steps = std::max<std::size_t>(s.total_steps, 1);
  s.validate();
}

namespace {

std::string opt_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

// Everything that shapes the step sequence; resume refuses a mismatch.
std::string run_fingerprint(const TrainConfig& c, std::size_t corpus_size, std::uint64_t corpus_sum) {
  std::ostringstream os;
  os << to_string(c.model.kind) << ' ' << c.model.vocab_size << ' ' << c.model.context_len << ' ' << c.model.d_model
     << ' ' << c.model.n_heads << ' ' << c.model.n_layers << ' ' << c.model.d_ff << ' ' << c.model.init_seed << ' '
     << to_string(c.loss.objective) << ' ' << format_double(c.loss.kappa) << ' ' << c.loss.k_samples << ' '
     << format_double(c.loss.beta) << ' ' << format_double(c.schedule.peak_lr) << ' '
     << format_double(c.schedule.min_lr) << ' ' << format_double(c.schedule.warmup_ratio) << ' '
     << format_double(c.adamw.beta1) << ' ' << format_double(c.adamw.beta2) << ' ' << format_double(c.adamw.eps)
     << ' ' << format_double(c.adamw.weight_decay) << ' ' << c.batch_size << ' ' << c.epochs << ' ' << c.seed << ' '
     << (c.clip_norm ? format_double(*c.clip_norm) : "none") << ' ' << c.gt_probe << ' '
     << format_double(c.gt_probe_kappa) << ' ' << c.gt_probe_k << ' ' << corpus_size << ' ' << corpus_sum;
  const std::string s = os.str();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct SequenceResult {
  double loss = 0.0;
  std::vector<RolloutRow> rows;
  Gradients grads;
};

SequenceResult run_sequence(const TrainConfig& c, const TokenPolicy& model, const Example& ex, std::size_t step,
                            std::size_t example_index) {
  Graph g;
  const Binding b = bind(g, model.params(), true);
  const RolloutKey key{c.seed, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(example_index)};
  LossBreakdown br = sequence_loss(g, model, b, ex, c.loss, key);
  SequenceResult out;
  out.loss = br.total_value;
  if (c.loss.objective == Objective::otr) {
    out.rows = std::move(br.rollout.rows);
  } else if (c.gt_probe) {
    const RolloutKey probe{c.seed, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(example_index),
                           Stream::gt_probe};
    out.rows = rollout_rows(br.logits.values(), model.config().vocab_size, ex.response_ids, c.gt_probe_kappa,
                            c.gt_probe_k, probe)
                   .rows;
  }
  if (!std::isfinite(out.loss)) return out;
  g.backward(br.total);
  out.grads.reserve(b.params.size());
  for (const Var& p : b.params) {
    auto gr = p.grad();
    out.grads.emplace_back(gr.begin(), gr.end());
  }
  return out;
}

}  // namespace

std::string metrics_csv_row(const MetricsRow& r) {
  std::string s;
  s += std::to_string(r.step) + ',' + std::to_string(r.epoch) + ',' + format_double(r.lr) + ',' +
       format_double(r.train_loss) + ',' + opt_cell(r.gt_fraction) + ',' + opt_cell(r.mean_n_gt) + ',' +
       opt_cell(r.eval_in_acc) + ',' + opt_cell(r.eval_ood_acc) + ',' + std::to_string(r.tokens_seen) + ',' +
       opt_cell(r.wall_ms);
  return s;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string s = std::string(kMetricsHeader) + '\n';
  for (const auto& r : rows) s += metrics_csv_row(r) + '\n';
  return s;
}

TrainAbort::TrainAbort(std::size_t step, std::vector<std::size_t> batch, const std::string& why)
    : NumericError([&] {
        std::string m = "training aborted at step " + std::to_string(step) + ": " + why + " (batch indices:";
        for (auto i : batch) m += ' ' + std::to_string(i);
        return m + ")";
      }()),
      step_(step),
      batch_(std::move(batch)) {}

std::optional<double> converged_gt_fraction(std::span<const MetricsRow> rows) {
  std::vector<double> g;
  for (const auto& r : rows) {
    if (r.gt_fraction) g.push_back(*r.gt_fraction);
  }
  if (g.empty()) return std::nullopt;
  const std::size_t tail = std::max<std::size_t>(1, g.size() / 10);
  double s = 0.0;
  for (std::size_t i = g.size() - tail; i < g.size(); ++i) s += g[i];
  return s / static_cast<double>(tail);
}

std::size_t steps_per_epoch(const TrainConfig& c, std::size_t corpus_size) {
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  return corpus_size / c.batch_size;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const CounterRng rng(seed, Stream::shuffle, static_cast<std::uint32_t>(epoch));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.bits(n - i) % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

TrainResult train(const TrainConfig& config, const Corpus& corpus, const TrainOptions& options) {
  config.validate();
  if (corpus.train.empty()) throw std::invalid_argument("training corpus is empty");
  const auto& mc = config.model;
  for (const auto* split : {&corpus.train, &corpus.eval_in, &corpus.eval_ood}) {
    for (const auto& ex : *split) validate_example(ex, mc.context_len, mc.vocab_size);
  }
  const std::size_t per_epoch = steps_per_epoch(config, corpus.train.size());
  if (per_epoch == 0) {
    throw std::invalid_argument("batch_size " + std::to_string(config.batch_size) + " exceeds the training corpus (" +
                                std::to_string(corpus.train.size()) + " examples)");
  }
  ScheduleConfig sched = config.schedule;
  sched.total_steps = per_epoch * config.epochs;
  sched.validate();
  if (options.init != nullptr) {
    const ModelConfig& ic = options.init->config();
    if (ic.kind != mc.kind || ic.vocab_size != mc.vocab_size || ic.context_len != mc.context_len ||
        ic.d_model != mc.d_model || ic.n_heads != mc.n_heads || ic.n_layers != mc.n_layers || ic.d_ff != mc.d_ff) {
      throw std::invalid_argument("initial model does not match the model configuration");
    }
  }
  const std::uint64_t init_sum = options.init ? options.init->params().checksum() : 0;
  const std::string fingerprint =
      run_fingerprint(config, corpus.train.size(), examples_checksum(corpus.train) ^ splitmix64(init_sum));

  TrainResult res;
  std::size_t start_step = 1;
  std::size_t tokens_seen = 0;
  if (options.resume != nullptr) {
    const Checkpoint& ck = *options.resume;
    if (!ck.model || !ck.optimizer) throw std::invalid_argument("resume checkpoint lacks model or optimizer state");
    auto it = ck.meta.find("run");
    if (it == ck.meta.end() || it->second != fingerprint) {
      throw std::invalid_argument("resume checkpoint was written by a different configuration or corpus");
    }
    res.model = ck.model->clone();
    res.optimizer = *ck.optimizer;
    start_step = std::stoull(ck.meta.at("step")) + 1;
    tokens_seen = std::stoull(ck.meta.at("tokens_seen"));
  } else if (options.init != nullptr) {
    res.model = options.init->clone();
    res.optimizer = AdamWState::for_params(res.model->params(), config.adamw);
  } else {
    res.model = init_params(mc);
    res.optimizer = AdamWState::for_params(res.model->params(), config.adamw);
  }
  TokenPolicy& model = *res.model;

  auto clock = options.clock_ms;
  if (!clock) {
    const auto t0 = std::chrono::steady_clock::now();
    clock = [t0] { return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count(); };
  }

  auto save = [&](const std::filesystem::path& dir, std::size_t step) {
    checkpoint_save(dir, model, &res.optimizer,
                    {{"step", std::to_string(step)}, {"tokens_seen", std::to_string(tokens_seen)}, {"run", fingerprint}});
  };

  const std::size_t total = sched.total_steps;
  std::vector<std::size_t> order;
  std::size_t order_epoch = 0;
  res.last_step = start_step - 1;
  for (std::size_t step = start_step; step <= total; ++step) {
    const std::size_t epoch = (step - 1) / per_epoch + 1;
    if (order.empty() || order_epoch != epoch) {
      order = epoch_order(config.seed, epoch, corpus.train.size());
      order_epoch = epoch;
    }
    const std::size_t off = ((step - 1) % per_epoch) * config.batch_size;
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(off),
                                   order.begin() + static_cast<std::ptrdiff_t>(off + config.batch_size));

    std::vector<SequenceResult> results(batch.size());
    auto work = [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) results[i] = run_sequence(config, model, corpus.train[batch[i]], step, batch[i]);
    };
    const std::size_t nt = std::min(config.threads, batch.size());
    try {
      if (nt <= 1) {
        work(0, batch.size());
      } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(nt);
        for (std::size_t t = 0; t < nt; ++t) {
          const std::size_t lo = batch.size() * t / nt, hi = batch.size() * (t + 1) / nt;
          pool.emplace_back([&, t, lo, hi] {
            try {
              work(lo, hi);
            } catch (...) {
              errors[t] = std::current_exception();
            }
          });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors) {
          if (e) std::rethrow_exception(e);
        }
      }
    } catch (const NumericError& e) {
      throw TrainAbort(step, batch, e.what());
    }

    double loss_sum = 0.0;
    Gradients grads;
    std::vector<RolloutRow> rows;
    for (std::size_t i = 0; i < results.size(); ++i) {
      auto& r = results[i];
      if (!std::isfinite(r.loss)) throw TrainAbort(step, batch, "non-finite loss " + format_double(r.loss));
      loss_sum += r.loss;
      if (grads.empty()) {
        grads = std::move(r.grads);
      } else {
        for (std::size_t p = 0; p < grads.size(); ++p) {
          for (std::size_t k = 0; k < grads[p].size(); ++k) grads[p][k] += r.grads[p][k];
        }
      }
      for (auto& row : r.rows) rows.push_back(std::move(row));
      tokens_seen += input_length(corpus.train[batch[i]]);
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    for (auto& gp : grads) {
      for (auto& x : gp) x *= inv_b;
    }
    const double loss = loss_sum * inv_b;
    if (!std::isfinite(loss)) throw TrainAbort(step, batch, "non-finite batch loss");

    StepTrace trace;
    trace.step = step;
    trace.grad_norm_before_clip = config.clip_norm ? clip_global_norm(grads, *config.clip_norm) : global_norm(grads);
    const double lr = lr_at(sched, step);
    try {
      adamw_step(model.params(), grads, res.optimizer, lr);
    } catch (const NumericError& e) {
      throw TrainAbort(step, batch, e.what());
    }

    MetricsRow row;
    row.step = step;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss;
    if (!rows.empty()) {
      const GtCountMetrics m = gt_count_metrics(rows);
      row.gt_fraction = m.gt_fraction;
      row.mean_n_gt = m.mean_n_gt;
    }
    const bool eval_now = step == total || (config.eval_every > 0 && step % config.eval_every == 0);
    if (eval_now) {
      const std::uint64_t eval_seed = splitmix64(config.seed ^ (static_cast<std::uint64_t>(step) << 20));
      if (!corpus.eval_in.empty()) {
        row.eval_in_acc = evaluate(model, corpus.eval_in, config.eval_mode, config.eval_max_new, eval_seed);
      }
      if (!corpus.eval_ood.empty()) {
        row.eval_ood_acc = evaluate(model, corpus.eval_ood, config.eval_mode, config.eval_max_new, eval_seed + 1);
      }
    }
    row.tokens_seen = tokens_seen;
    if (config.record_wall_time) row.wall_ms = clock();
    res.metrics.push_back(row);
    res.last_step = step;
    if (options.on_row) options.on_row(row);
    if (options.on_step) {
      trace.grad_norm_after_clip = global_norm(grads);
      trace.rollout = std::move(rows);
      options.on_step(trace);
    }

    const bool interrupted = options.stop_after && step == *options.stop_after;
    if (!config.out_dir.empty() &&
        (interrupted || (config.checkpoint_every > 0 && step % config.checkpoint_every == 0))) {
      save(config.out_dir / ("checkpoint-" + std::to_string(step)), step);
    }
    if (interrupted) return res;
  }
  if (!config.out_dir.empty()) save(config.out_dir / "final", res.last_step);
  res.completed = true;
  return res;
}

TokenId nucleus_sample(std::span<const double> logits, double temperature, double top_p, double u) {
  if (!(temperature > 0.0)) throw std::invalid_argument("nucleus_sample: temperature must be positive");
  if (!(top_p > 0.0)) throw std::invalid_argument("nucleus_sample: top_p must be positive");
  std::vector<double> p = sampling_policy(logits, temperature);
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::size_t keep = p.size();
  if (top_p < 1.0) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    double mass = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      mass += p[idx[i]];
      if (mass >= top_p) {
        keep = i + 1;
        break;
      }
    }
  }
  double z = 0.0;
  for (std::size_t i = 0; i < keep; ++i) z += p[idx[i]];
  const double target = u * z;
  double c = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    c += p[idx[i]];
    if (target < c) return static_cast<TokenId>(idx[i]);
  }
  for (std::size_t i = keep; i-- > 0;) {
    if (p[idx[i]] > 0.0) return static_cast<TokenId>(idx[i]);
  }
  return static_cast<TokenId>(idx[0]);
}

std::vector<TokenId> decode(const TokenPolicy& model, std::span<const TokenId> prompt_ids, const DecodeMode& mode,
                            std::size_t max_new, const CounterRng& rng) {
  if (max_new < 1) throw std::invalid_argument("decode: max_new must be at least 1");
  const auto& mc = model.config();
  std::vector<TokenId> seq;
  seq.reserve(1 + prompt_ids.size() + max_new);
  seq.push_back(Vocab::kBos);
  seq.insert(seq.end(), prompt_ids.begin(), prompt_ids.end());
  if (seq.size() > mc.context_len) {
    throw std::invalid_argument("decode: prompt of " + std::to_string(prompt_ids.size()) +
                                " tokens does not fit the context");
  }
  std::vector<TokenId> out;
  while (out.size() < max_new && seq.size() <= mc.context_len) {
    const Tensor lg = model.logits_values(seq);
    std::span<const double> last(lg.values.data() + (seq.size() - 1) * mc.vocab_size, mc.vocab_size);
    TokenId next;
    if (mode.kind == DecodeMode::Kind::greedy) {
      next = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
    } else {
      next = nucleus_sample(last, mode.temperature, mode.top_p, rng.uniform(out.size()));
    }
    if (next == Vocab::kEos) break;
    out.push_back(next);
    seq.push_back(next);
  }
  return out;
}

double evaluate(const TokenPolicy& model, std::span<const Example> examples, const DecodeMode& mode,
                std::size_t max_new, std::uint64_t seed) {
  if (max_new < 1) throw std::invalid_argument("evaluate: max_new must be at least 1");
  if (examples.empty()) throw std::invalid_argument("evaluate: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    const CounterRng rng(seed, Stream::decode, static_cast<std::uint32_t>(i));
    const auto got = decode(model, ex.prompt_ids, mode, max_new, rng);
    std::span<const TokenId> ref(ex.response_ids);
    if (!ref.empty() && ref.back() == Vocab::kEos) ref = ref.first(ref.size() - 1);
    if (std::equal(got.begin(), got.end(), ref.begin(), ref.end())) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

}  // namespace otrlab
