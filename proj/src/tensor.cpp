// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/tensor.hpp"

#include <bit>

namespace otrlab {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s) : shape(std::move(s)), values(numel(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != numel(shape)) {
    throw ShapeError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
}

std::uint64_t checksum(std::span<const double> values, std::uint64_t h) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace otrlab
