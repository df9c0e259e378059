// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "otrlab/models.hpp"

namespace otrlab {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamWState {
  AdamWConfig hp;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamWState for_params(const ParameterSet& params, AdamWConfig hp = {});
};

using Gradients = std::vector<std::vector<double>>;

/// Decoupled decay (w -= lr*wd*w) followed by the bias-corrected Adam delta.
/// Rejects the whole step, before touching anything, on a non-finite gradient.
void adamw_step(ParameterSet& params, const Gradients& grads, AdamWState& state, double lr);

/// Scales grads in place so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);
double global_norm(const Gradients& grads);

struct ScheduleConfig {
  double peak_lr = 5e-6;
  double min_lr = 1e-6;
  double warmup_ratio = 0.03;
  std::size_t total_steps = 1;

  void validate() const;
};

std::size_t warmup_steps(const ScheduleConfig& s);

/// Linear warmup from 0 to peak, then cosine decay to min_lr at total_steps.
double lr_at(const ScheduleConfig& s, std::size_t step);

}  // namespace otrlab
