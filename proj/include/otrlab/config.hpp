// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// JSON run configuration: a TrainConfig plus where the examples come from.
//
//   {
//     "vocab": "0123456789+=|abcde",
//     "task": { "kind": "add_mod", ... }          or
//     "corpus": { "train": "a.jsonl", "eval_in": "b.jsonl", "eval_ood": "c.jsonl" },
//     "model": {...}, "loss": {...}, "schedule": {...}, "adamw": {...},
//     "trainer": {...},
//     "init_from": "base/final"                     optional checkpoint to fine-tune
//   }
//
// Every key is optional except that at most one of "task" and "corpus" may
// appear (neither means the default add_mod task). Unknown keys are errors.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "otrlab/data.hpp"
#include "otrlab/train.hpp"

namespace otrlab {

/// A configuration problem; what() starts with the offending field path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& path, const std::string& why) : std::invalid_argument(path + ": " + why) {}
};

struct CorpusFiles {
  std::filesystem::path train;
  std::optional<std::filesystem::path> eval_in;
  std::optional<std::filesystem::path> eval_ood;
};

struct RunConfig {
  std::string vocab_symbols{Vocab::kDefaultSymbols};
  std::optional<TaskSpec> task;  // set unless corpus is
  std::optional<CorpusFiles> corpus;
  std::optional<std::filesystem::path> init_from;
  TrainConfig train;

  Vocab vocab() const { return Vocab(vocab_symbols); }
};

/// Parses and fully validates a configuration document. Relative corpus
/// paths resolve against base_dir.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Every field with its value, defaults included; parses back to the same config.
std::string resolved_config_json(const RunConfig& c);

/// Generates or loads the examples the configuration names.
Corpus load_corpus(const RunConfig& c);

}  // namespace otrlab
