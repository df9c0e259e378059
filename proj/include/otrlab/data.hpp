// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otrlab/tensor.hpp"

namespace otrlab {

class EncodeError : public std::invalid_argument {
 public:
  EncodeError(char symbol, std::size_t index);
  char symbol() const { return symbol_; }
  std::size_t index() const { return index_; }

 private:
  char symbol_;
  std::size_t index_;
};

/// Character-level vocabulary. Ids 0, 1, 2 are PAD, BOS, EOS, displayed as
/// '_', '^' and '#'; the task symbols follow densely from id 3.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr char kPadSymbol = '_';
  static constexpr char kBosSymbol = '^';
  static constexpr char kEosSymbol = '#';
  static constexpr std::string_view kDefaultSymbols = "0123456789+=|abcde";

  /// `symbols` lists the non-reserved characters in id order.
  explicit Vocab(std::string_view symbols = kDefaultSymbols);

  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return symbols_.size(); }
  std::string_view symbols() const { return std::string_view(symbols_).substr(3); }
  bool contains(char c) const;
  TokenId id(char c) const;
  char symbol(TokenId id) const;

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::string symbols_;
  std::array<int, 256> index_{};
};

/// A prompt/response pair; the response ends with EOS. BOS is implicit.
struct Example {
  std::vector<TokenId> prompt_ids;
  std::vector<TokenId> response_ids;

  bool operator==(const Example&) const = default;
};

/// Number of model input positions: |prompt| + |response| (BOS in, last token out).
inline std::size_t input_length(const Example& ex) { return ex.prompt_ids.size() + ex.response_ids.size(); }

/// [BOS] + prompt + response minus its final token. Row `prompt.size() + i`
/// of the model output scores response token i.
std::vector<TokenId> model_input(const Example& ex);

/// Throws std::invalid_argument if the Example invariants fail.
void validate_example(const Example& ex, std::size_t context_len, std::size_t vocab_size);

enum class TaskKind { add_mod, copy, reverse };

std::string to_string(TaskKind t);
TaskKind task_kind_from_string(const std::string& s);

struct TaskSpec {
  TaskKind task = TaskKind::add_mod;
  // add_mod: in-domain operands in [0, operand_max); OOD operands in [ood_operand_min, ood_operand_max).
  std::uint64_t operand_max = 50;
  std::uint64_t modulus = 50;
  std::uint64_t ood_operand_min = 100;
  std::uint64_t ood_operand_max = 1000;
  // copy / reverse: string lengths, in domain and OOD, over `alphabet`.
  std::size_t min_len = 1;
  std::size_t max_len = 5;
  std::size_t ood_min_len = 6;
  std::size_t ood_max_len = 8;
  std::string alphabet = "abcde";

  std::size_t train_size = 2000;
  std::size_t eval_size = 200;
  std::size_t ood_size = 200;
  std::uint64_t split_seed = 0;

  void validate() const;
  /// Distinct in-domain and OOD instances the ranges admit (saturating).
  std::uint64_t in_domain_count() const;
  std::uint64_t ood_count() const;
};

struct TaskSplits {
  std::vector<Example> train;
  std::vector<Example> eval_in;
  std::vector<Example> eval_ood;
};

/// Deterministic in split_seed. train and eval_in are disjoint draws from one
/// distribution; eval_ood uses longer operands or strings.
TaskSplits gen_task(const TaskSpec& spec, const Vocab& vocab);

/// Prompt and response text of instance `index` (response without EOS).
std::pair<std::string, std::string> task_instance(const TaskSpec& spec, bool ood, std::uint64_t index);

struct JsonlCorpus {
  std::vector<Example> examples;
  std::size_t skipped_overlength = 0;
  std::vector<std::string> warnings;
};

/// One JSON object per line with string fields "prompt" and "response";
/// EOS is appended to each response. Over-length lines are skipped and counted.
JsonlCorpus load_jsonl(const std::filesystem::path& path, const Vocab& vocab, std::size_t context_len);

/// Order-sensitive fingerprint of a list of examples.
std::uint64_t examples_checksum(std::span<const Example> examples);

}  // namespace otrlab
