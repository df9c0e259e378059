// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "otrlab/checkpoint.hpp"
#include "otrlab/data.hpp"
#include "otrlab/models.hpp"
#include "otrlab/optim.hpp"
#include "otrlab/otr.hpp"

namespace otrlab {

struct DecodeMode {
  enum class Kind { greedy, stochastic };
  Kind kind = Kind::greedy;
  double temperature = 0.7;
  double top_p = 0.8;
};

struct TrainConfig {
  ModelConfig model;
  LossSpec loss;
  ScheduleConfig schedule;  // total_steps is derived from corpus size, batch size and epochs
  AdamWConfig adamw;
  std::size_t batch_size = 64;
  std::size_t epochs = 2;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0: evaluate on the final step only
  std::optional<double> clip_norm;
  std::filesystem::path out_dir;

  // GT-count probe for objectives that do not sample (SFT, DFT).
  bool gt_probe = true;
  double gt_probe_kappa = 1.0;
  std::size_t gt_probe_k = 256;

  bool record_wall_time = false;
  DecodeMode eval_mode;
  std::size_t eval_max_new = 8;
  std::size_t checkpoint_every = 0;
  std::size_t threads = 1;

  void validate() const;
};

struct Corpus {
  std::vector<Example> train;
  std::vector<Example> eval_in;
  std::vector<Example> eval_ood;
};

struct MetricsRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> gt_fraction;
  std::optional<double> mean_n_gt;
  std::optional<double> eval_in_acc;
  std::optional<double> eval_ood_acc;
  std::size_t tokens_seen = 0;
  std::optional<double> wall_ms;
};

inline constexpr const char* kMetricsHeader =
    "step,epoch,lr,train_loss,gt_fraction,mean_n_gt,eval_in_acc,eval_ood_acc,tokens_seen,wall_ms";

std::string metrics_csv_row(const MetricsRow& r);
std::string metrics_csv(std::span<const MetricsRow> rows);

/// Thrown when a step produces a non-finite loss.
class TrainAbort : public NumericError {
 public:
  TrainAbort(std::size_t step, std::vector<std::size_t> batch, const std::string& why);
  std::size_t step() const { return step_; }
  const std::vector<std::size_t>& batch() const { return batch_; }

 private:
  std::size_t step_;
  std::vector<std::size_t> batch_;
};

struct StepTrace {
  std::size_t step = 0;
  std::vector<RolloutRow> rollout;  // every response position of the batch, in batch order
  double grad_norm_before_clip = 0.0;
  double grad_norm_after_clip = 0.0;
};

struct TrainOptions {
  const Checkpoint* resume = nullptr;
  const TokenPolicy* init = nullptr;  // starting weights (fresh optimizer); ignored when resuming
  std::optional<std::size_t> stop_after;  // simulated interruption: checkpoint and stop here
  std::function<void(const MetricsRow&)> on_row;
  std::function<void(const StepTrace&)> on_step;
  std::function<double()> clock_ms;  // for wall_ms; steady clock if unset
};

struct TrainResult {
  std::unique_ptr<TokenPolicy> model;
  AdamWState optimizer;
  std::vector<MetricsRow> metrics;
  std::size_t last_step = 0;
  bool completed = false;
};

/// Mean gt_fraction over the final tenth of the rows that carry one (at least one row).
std::optional<double> converged_gt_fraction(std::span<const MetricsRow> rows);

std::size_t steps_per_epoch(const TrainConfig& c, std::size_t corpus_size);

/// Shuffled example order of one epoch; a pure function of (seed, epoch).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n);

TrainResult train(const TrainConfig& config, const Corpus& corpus, const TrainOptions& options = {});

/// Decoded continuation for one prompt (without EOS).
std::vector<TokenId> decode(const TokenPolicy& model, std::span<const TokenId> prompt_ids, const DecodeMode& mode,
                            std::size_t max_new, const CounterRng& rng);

/// Exact-match accuracy of decoded responses against the references.
double evaluate(const TokenPolicy& model, std::span<const Example> examples, const DecodeMode& mode,
                std::size_t max_new, std::uint64_t seed = 0);

/// Nucleus draw: the smallest probability-sorted prefix with mass >= top_p,
/// renormalized, sampled with uniform u. top_p >= 1 samples the full distribution.
TokenId nucleus_sample(std::span<const double> logits, double temperature, double top_p, double u);

}  // namespace otrlab
