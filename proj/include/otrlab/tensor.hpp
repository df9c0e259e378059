// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace otrlab {

using Shape = std::vector<std::size_t>;
using TokenId = std::uint32_t;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array of 64-bit reals. Plain value type; the autodiff
/// tape copies these into its nodes.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> v);

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  double& at(std::size_t r, std::size_t c) { return values[r * shape[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * shape[1] + c]; }
};

/// FNV-1a over the IEEE-754 bit patterns; bit-exact parameter fingerprint.
std::uint64_t checksum(std::span<const double> values, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace otrlab
