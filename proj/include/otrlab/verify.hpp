// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Self-checks runnable from the command line.

#include <cstdint>
#include <string>
#include <vector>

namespace otrlab {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

const std::vector<std::string>& suite_names();

/// Throws std::invalid_argument on an unknown suite name.
std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed = 0);

/// Finite-difference check of SFT, DFT and OTR sequence losses on a small
/// transformer at `points` random parameter points.
std::vector<CheckResult> gradcheck_suite(std::uint64_t seed, std::size_t points = 20);

/// Monte Carlo OTR token loss against the exact expectation on a bigram table.
std::vector<CheckResult> estimator_suite(std::uint64_t seed, std::size_t draws = 10000);

/// Exact expectation at beta=0, kappa=1 against DFT, and grouped against
/// per-sample evaluation of the token loss.
std::vector<CheckResult> equivalence_suite(std::uint64_t seed);

}  // namespace otrlab
