// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace otrlab {

AdamWState AdamWState::for_params(const ParameterSet& params, AdamWConfig hp) {
  AdamWState s;
  s.hp = hp;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.size(), 0.0);
    s.v.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adamw_step(ParameterSet& params, const Gradients& grads, AdamWState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adamw_step: gradient/state count does not match parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].value.size() || state.m[i].size() != grads[i].size() ||
        state.v[i].size() != grads[i].size()) {
      throw std::invalid_argument("adamw_step: shape mismatch for parameter " + params[i].name);
    }
    for (std::size_t j = 0; j < grads[i].size(); ++j) {
      if (!std::isfinite(grads[i][j])) {
        throw NumericError("adamw_step: non-finite gradient in parameter " + params[i].name + " at index " +
                           std::to_string(j));
      }
    }
  }

  state.step += 1;
  const auto& hp = state.hp;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hp.beta1, t);
  const double bc2 = 1.0 - std::pow(hp.beta2, t);
  const double decay = 1.0 - lr * hp.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i].value.values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = hp.beta1 * m[j] + (1.0 - hp.beta1) * g[j];
      v[j] = hp.beta2 * v[j] + (1.0 - hp.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] *= decay;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
  }
}

double global_norm(const Gradients& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double x : g) s += x * x;
  return std::sqrt(s);
}

double clip_global_norm(Gradients& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads)
      for (double& x : g) x *= f;
  }
  return norm;
}

void ScheduleConfig::validate() const {
  if (!(peak_lr > 0.0)) throw std::invalid_argument("peak_lr must be positive");
  if (!(min_lr >= 0.0)) throw std::invalid_argument("min_lr must be non-negative");
  if (min_lr > peak_lr) throw std::invalid_argument("min_lr must not exceed peak_lr");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw std::invalid_argument("warmup_ratio must lie in [0, 1)");
  if (total_steps == 0) throw std::invalid_argument("total_steps must be positive");
}

std::size_t warmup_steps(const ScheduleConfig& s) {
  return static_cast<std::size_t>(std::llround(s.warmup_ratio * static_cast<double>(s.total_steps)));
}

double lr_at(const ScheduleConfig& s, std::size_t step) {
  if (step > s.total_steps) {
    throw std::out_of_range("lr_at: step " + std::to_string(step) + " beyond total_steps " +
                            std::to_string(s.total_steps));
  }
  const std::size_t w = warmup_steps(s);
  if (step < w) return s.peak_lr * static_cast<double>(step) / static_cast<double>(w);
  const std::size_t span = s.total_steps - w;
  const double progress = span == 0 ? 1.0 : static_cast<double>(step - w) / static_cast<double>(span);
  return s.min_lr + 0.5 * (s.peak_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace otrlab
