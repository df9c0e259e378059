// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// On-disk layout of a checkpoint directory:
//
//   manifest.txt  text header (format version, model config, optimizer
//                 scalars, trainer metadata) followed by one line per tensor:
//                 `name shape dtype byte_offset`
//   tensors.bin   little-endian IEEE-754 f64 values, row-major, manifest order
//
// Model parameters come first, then the Adam first and second moments
// (named `adamw.m/<param>` and `adamw.v/<param>`).

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "otrlab/models.hpp"
#include "otrlab/optim.hpp"

namespace otrlab {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::unique_ptr<TokenPolicy> model;
  std::optional<AdamWState> optimizer;
  std::map<std::string, std::string> meta;
};

void checkpoint_save(const std::filesystem::path& dir, const TokenPolicy& model, const AdamWState* optimizer,
                     const std::map<std::string, std::string>& meta);
Checkpoint checkpoint_load(const std::filesystem::path& dir);

std::string format_double(double v);

}  // namespace otrlab
