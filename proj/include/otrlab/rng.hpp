// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Counter-based random numbers (Philox4x32-10). Every draw is a pure function
// of (key, counter), so any sample in a run can be regenerated without
// replaying the ones before it.

#include <array>
#include <cstdint>

namespace otrlab {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key);

/// Stream tags keep independent uses of one global seed apart.
enum class Stream : std::uint32_t {
  init = 1,
  shuffle = 2,
  rollout = 3,
  gt_probe = 4,
  decode = 5,
  task = 6,
  test = 7,
};

/// A key plus three fixed counter words; the fourth word indexes draws.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, Stream stream, std::uint32_t a = 0, std::uint32_t b = 0, std::uint32_t c = 0);

  /// Two independent uniforms in [0, 1) for draw-pair `index`.
  std::array<double, 2> uniform_pair(std::uint32_t index) const;
  /// The i-th uniform in [0, 1) of this stream.
  double uniform(std::uint64_t i) const;
  /// The i-th standard normal (Box-Muller over uniform pair i).
  double normal(std::uint64_t i) const;
  /// The i-th raw 64-bit word.
  std::uint64_t bits(std::uint64_t i) const;

 private:
  PhiloxKey key_;
  std::uint32_t a_, b_, c_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace otrlab
