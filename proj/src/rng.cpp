// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/rng.hpp"

#include <cmath>
#include <numbers>

namespace otrlab {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53U;
constexpr std::uint32_t kMul1 = 0xCD9E8D57U;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9U;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85U;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t x = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, Stream stream, std::uint32_t a, std::uint32_t b, std::uint32_t c)
    : a_(a), b_(b), c_(c) {
  const std::uint64_t k = splitmix64(seed ^ (static_cast<std::uint64_t>(stream) << 56));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

std::array<double, 2> CounterRng::uniform_pair(std::uint32_t index) const {
  auto r = philox4x32({index, a_, b_, c_}, key_);
  return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
}

double CounterRng::uniform(std::uint64_t i) const {
  return uniform_pair(static_cast<std::uint32_t>(i >> 1))[i & 1];
}

std::uint64_t CounterRng::bits(std::uint64_t i) const {
  auto r = philox4x32({static_cast<std::uint32_t>(i >> 1), a_, b_, c_}, key_);
  return (i & 1) ? (static_cast<std::uint64_t>(r[2]) << 32 | r[3]) : (static_cast<std::uint64_t>(r[0]) << 32 | r[1]);
}

double CounterRng::normal(std::uint64_t i) const {
  auto [u1, u2] = uniform_pair(static_cast<std::uint32_t>(i));
  // 1 - u1 lies in (0, 1], so the log is finite
  return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace otrlab
