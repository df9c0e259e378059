// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <nlohmann/json.hpp>
#include <unordered_set>

#include "otrlab/rng.hpp"

namespace otrlab {

EncodeError::EncodeError(char symbol, std::size_t index)
    : std::invalid_argument("unknown symbol '" + std::string(1, symbol) + "' at index " + std::to_string(index)),
      symbol_(symbol),
      index_(index) {}

// --- Vocab ----------------------------------------------------------------

Vocab::Vocab(std::string_view symbols) {
  index_.fill(-1);
  symbols_ = {kPadSymbol, kBosSymbol, kEosSymbol};
  symbols_.append(symbols);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto c = static_cast<unsigned char>(symbols_[i]);
    if (c < 0x21 || c > 0x7e) throw std::invalid_argument("vocab symbols must be printable ASCII");
    if (index_[c] >= 0) {
      throw std::invalid_argument("vocab symbol '" + std::string(1, symbols_[i]) + "' is duplicated or reserved");
    }
    index_[c] = static_cast<int>(i);
  }
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open vocab file " + path.string());
  std::string symbols, line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() != 1) {
      throw std::invalid_argument("vocab file " + path.string() + " line " + std::to_string(lineno) +
                                  ": expected exactly one symbol");
    }
    symbols += line;
  }
  return Vocab(symbols);
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  for (char c : symbols()) out << c << '\n';
}

bool Vocab::contains(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }

TokenId Vocab::id(char c) const {
  const int i = index_[static_cast<unsigned char>(c)];
  if (i < 0) throw EncodeError(c, 0);
  return static_cast<TokenId>(i);
}

char Vocab::symbol(TokenId id) const {
  if (id >= symbols_.size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocab");
  return symbols_[id];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const int id = index_[static_cast<unsigned char>(text[i])];
    if (id < 0) throw EncodeError(text[i], i);
    ids.push_back(static_cast<TokenId>(id));
  }
  return ids;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string s;
  s.reserve(ids.size());
  for (auto id : ids) s.push_back(symbol(id));
  return s;
}

// --- Example --------------------------------------------------------------

std::vector<TokenId> model_input(const Example& ex) {
  std::vector<TokenId> in;
  in.reserve(input_length(ex));
  in.push_back(Vocab::kBos);
  in.insert(in.end(), ex.prompt_ids.begin(), ex.prompt_ids.end());
  in.insert(in.end(), ex.response_ids.begin(), ex.response_ids.end() - 1);
  return in;
}

void validate_example(const Example& ex, std::size_t context_len, std::size_t vocab_size) {
  if (ex.response_ids.empty()) throw std::invalid_argument("example has an empty response");
  if (ex.response_ids.back() != Vocab::kEos) throw std::invalid_argument("example response does not end with EOS");
  if (std::find(ex.response_ids.begin(), ex.response_ids.end() - 1, Vocab::kEos) != ex.response_ids.end() - 1) {
    throw std::invalid_argument("example response has EOS before its end");
  }
  if (input_length(ex) > context_len) {
    throw std::invalid_argument("example length " + std::to_string(input_length(ex)) + " exceeds context_len " +
                                std::to_string(context_len));
  }
  for (auto id : ex.prompt_ids)
    if (id >= vocab_size) throw std::invalid_argument("example prompt token outside vocab");
  for (auto id : ex.response_ids)
    if (id >= vocab_size) throw std::invalid_argument("example response token outside vocab");
}

std::uint64_t examples_checksum(std::span<const Example> examples) {
  std::vector<double> buf;
  for (const auto& ex : examples) {
    buf.push_back(static_cast<double>(ex.prompt_ids.size()));
    for (auto id : ex.prompt_ids) buf.push_back(id);
    buf.push_back(static_cast<double>(ex.response_ids.size()));
    for (auto id : ex.response_ids) buf.push_back(id);
  }
  return checksum(buf);
}

// --- synthetic tasks ------------------------------------------------------

std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::add_mod: return "add_mod";
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
  }
  return "?";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "add_mod") return TaskKind::add_mod;
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  throw std::invalid_argument("unknown task '" + s + "' (expected add_mod, copy or reverse)");
}

namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > kSaturated / a) return kSaturated;
  return a * b;
}

std::uint64_t sat_add(std::uint64_t a, std::uint64_t b) { return a > kSaturated - b ? kSaturated : a + b; }

std::uint64_t pow_sat(std::uint64_t base, std::size_t e) {
  std::uint64_t r = 1;
  for (std::size_t i = 0; i < e; ++i) r = sat_mul(r, base);
  return r;
}

std::uint64_t strings_count(std::size_t alphabet, std::size_t lo, std::size_t hi) {
  std::uint64_t n = 0;
  for (std::size_t len = lo; len <= hi; ++len) n = sat_add(n, pow_sat(alphabet, len));
  return n;
}

std::string string_at(const std::string& alphabet, std::size_t lo, std::size_t hi, std::uint64_t index) {
  const std::uint64_t a = alphabet.size();
  for (std::size_t len = lo; len <= hi; ++len) {
    const std::uint64_t block = pow_sat(a, len);
    if (index < block) {
      std::string s(len, ' ');
      for (std::size_t i = len; i-- > 0;) {
        s[i] = alphabet[index % a];
        index /= a;
      }
      return s;
    }
    index -= block;
  }
  throw std::out_of_range("string index outside task range");
}

// Distinct uniform indices from [0, count), drawn in a fixed order.
std::vector<std::uint64_t> distinct_indices(std::uint64_t count, std::size_t n, const CounterRng& rng) {
  std::vector<std::uint64_t> out;
  out.reserve(n);
  if (count <= (1ULL << 21)) {
    std::vector<std::uint64_t> pool(count);
    for (std::uint64_t i = 0; i < count; ++i) pool[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t j = i + rng.bits(i) % (count - i);
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
    return out;
  }
  std::unordered_set<std::uint64_t> seen;
  for (std::uint64_t draw = 0; out.size() < n; ++draw) {
    const std::uint64_t idx = rng.bits(draw) % count;
    if (seen.insert(idx).second) out.push_back(idx);
  }
  return out;
}

Example make_example(const Vocab& vocab, const std::string& prompt, const std::string& response) {
  Example ex;
  ex.prompt_ids = vocab.encode(prompt);
  ex.response_ids = vocab.encode(response);
  ex.response_ids.push_back(Vocab::kEos);
  return ex;
}

}  // namespace

void TaskSpec::validate() const {
  if (train_size == 0) throw std::invalid_argument("task.train_size must be positive");
  if (task == TaskKind::add_mod) {
    if (operand_max == 0) throw std::invalid_argument("task.operand_max must be positive");
    if (modulus == 0) throw std::invalid_argument("task.modulus must be positive");
    if (ood_operand_min < operand_max) throw std::invalid_argument("task.ood_operand_min must be >= operand_max");
    if (ood_operand_max <= ood_operand_min) throw std::invalid_argument("task.ood_operand_max must exceed ood_operand_min");
  } else {
    if (alphabet.empty()) throw std::invalid_argument("task.alphabet must be non-empty");
    if (min_len == 0 || max_len < min_len) throw std::invalid_argument("task.min_len/max_len invalid");
    if (ood_min_len <= max_len || ood_max_len < ood_min_len) {
      throw std::invalid_argument("task.ood_min_len must exceed max_len and not exceed ood_max_len");
    }
  }
  if (in_domain_count() < train_size + eval_size) {
    throw std::invalid_argument("task admits only " + std::to_string(in_domain_count()) +
                                " distinct in-domain instances, need " + std::to_string(train_size + eval_size));
  }
  if (ood_count() < ood_size) {
    throw std::invalid_argument("task admits only " + std::to_string(ood_count()) + " distinct OOD instances, need " +
                                std::to_string(ood_size));
  }
}

std::uint64_t TaskSpec::in_domain_count() const {
  if (task == TaskKind::add_mod) return sat_mul(operand_max, operand_max);
  return strings_count(alphabet.size(), min_len, max_len);
}

std::uint64_t TaskSpec::ood_count() const {
  if (task == TaskKind::add_mod) return sat_mul(ood_operand_max - ood_operand_min, ood_operand_max - ood_operand_min);
  return strings_count(alphabet.size(), ood_min_len, ood_max_len);
}

std::pair<std::string, std::string> task_instance(const TaskSpec& spec, bool ood, std::uint64_t index) {
  if (spec.task == TaskKind::add_mod) {
    const std::uint64_t lo = ood ? spec.ood_operand_min : 0;
    const std::uint64_t range = ood ? spec.ood_operand_max - spec.ood_operand_min : spec.operand_max;
    const std::uint64_t a = lo + index / range;
    const std::uint64_t b = lo + index % range;
    return {std::to_string(a) + "+" + std::to_string(b) + "=", std::to_string((a + b) % spec.modulus)};
  }
  const std::string s = ood ? string_at(spec.alphabet, spec.ood_min_len, spec.ood_max_len, index)
                            : string_at(spec.alphabet, spec.min_len, spec.max_len, index);
  std::string r = s;
  if (spec.task == TaskKind::reverse) std::reverse(r.begin(), r.end());
  return {s + "|", r};
}

TaskSplits gen_task(const TaskSpec& spec, const Vocab& vocab) {
  spec.validate();
  TaskSplits out;
  const CounterRng in_rng(spec.split_seed, Stream::task, 0);
  const CounterRng ood_rng(spec.split_seed, Stream::task, 1);
  const auto in_idx = distinct_indices(spec.in_domain_count(), spec.train_size + spec.eval_size, in_rng);
  for (std::size_t i = 0; i < in_idx.size(); ++i) {
    auto [p, r] = task_instance(spec, false, in_idx[i]);
    (i < spec.train_size ? out.train : out.eval_in).push_back(make_example(vocab, p, r));
  }
  for (auto idx : distinct_indices(spec.ood_count(), spec.ood_size, ood_rng)) {
    auto [p, r] = task_instance(spec, true, idx);
    out.eval_ood.push_back(make_example(vocab, p, r));
  }
  return out;
}

// --- JSONL ----------------------------------------------------------------

JsonlCorpus load_jsonl(const std::filesystem::path& path, const Vocab& vocab, std::size_t context_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open corpus " + path.string());
  JsonlCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail("expected a JSON object");
    for (const char* field : {"prompt", "response"}) {
      if (!j.contains(field)) fail(std::string("missing field \"") + field + "\"");
      if (!j[field].is_string()) fail(std::string("field \"") + field + "\" must be a string");
    }
    const auto prompt = j["prompt"].get<std::string>();
    const auto response = j["response"].get<std::string>();
    if (response.find(Vocab::kEosSymbol) != std::string::npos) fail("response must not contain the EOS symbol");
    Example ex;
    try {
      ex = make_example(vocab, prompt, response);
    } catch (const EncodeError& e) {
      fail(e.what());
    }
    if (input_length(ex) > context_len) {
      ++corpus.skipped_overlength;
      continue;
    }
    corpus.examples.push_back(std::move(ex));
  }
  if (corpus.skipped_overlength > 0) {
    corpus.warnings.push_back(path.string() + ": skipped " + std::to_string(corpus.skipped_overlength) +
                              " over-length line(s)");
  }
  if (corpus.examples.empty()) corpus.warnings.push_back(path.string() + ": corpus is empty");
  for (const auto& w : corpus.warnings) std::cerr << "warning: " << w << "\n";
  return corpus;
}

}  // namespace otrlab
