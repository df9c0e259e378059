// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/config.hpp"

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace otrlab {

namespace {

using nlohmann::json;

// Reads the fields of one JSON object, remembering which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string field(const std::string& key) const { return path_ + "." + key; }
  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void read(const std::string& key, double& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number()) throw ConfigError(field(key), "expected a number");
      out = v->get<double>();
    }
  }
  template <typename U>
    requires std::is_unsigned_v<U>
  void read(const std::string& key, U& out) {
    if (const json* v = raw(key)) {
      if (!v->is_number_unsigned()) throw ConfigError(field(key), "expected a non-negative integer");
      out = v->get<U>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = raw(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = raw(key)) {
      if (!v->is_string()) throw ConfigError(field(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  std::optional<Section> child(const std::string& key) {
    if (const json* v = raw(key)) return Section(*v, field(key));
    return std::nullopt;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void guarded(const std::string& path, Fn fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

void read_model(Section s, ModelConfig& m) {
  std::string kind = to_string(m.kind);
  s.read("kind", kind);
  guarded(s.field("kind"), [&] { m.kind = model_kind_from_string(kind); });
  s.read("vocab_size", m.vocab_size);
  s.read("context_len", m.context_len);
  s.read("d_model", m.d_model);
  s.read("n_heads", m.n_heads);
  s.read("n_layers", m.n_layers);
  s.read("d_ff", m.d_ff);
  s.read("init_seed", m.init_seed);
  s.finish();
}

void read_loss(Section s, LossSpec& l) {
  std::string obj = to_string(l.objective);
  s.read("objective", obj);
  guarded(s.field("objective"), [&] { l.objective = objective_from_string(obj); });
  s.read("kappa", l.kappa);
  s.read("k_samples", l.k_samples);
  s.read("beta", l.beta);
  s.finish();
}

void read_task(Section s, TaskSpec& t) {
  std::string kind = to_string(t.task);
  s.read("kind", kind);
  guarded(s.field("kind"), [&] { t.task = task_kind_from_string(kind); });
  s.read("operand_max", t.operand_max);
  s.read("modulus", t.modulus);
  s.read("ood_operand_min", t.ood_operand_min);
  s.read("ood_operand_max", t.ood_operand_max);
  s.read("min_len", t.min_len);
  s.read("max_len", t.max_len);
  s.read("ood_min_len", t.ood_min_len);
  s.read("ood_max_len", t.ood_max_len);
  s.read("alphabet", t.alphabet);
  s.read("train_size", t.train_size);
  s.read("eval_size", t.eval_size);
  s.read("ood_size", t.ood_size);
  s.read("split_seed", t.split_seed);
  s.finish();
}

void read_trainer(Section s, TrainConfig& c) {
  s.read("batch_size", c.batch_size);
  s.read("epochs", c.epochs);
  s.read("seed", c.seed);
  s.read("eval_every", c.eval_every);
  if (const json* v = s.raw("clip_norm")) {
    if (v->is_null()) {
      c.clip_norm.reset();
    } else if (v->is_number()) {
      c.clip_norm = v->get<double>();
    } else {
      throw ConfigError(s.field("clip_norm"), "expected a number or null");
    }
  }
  s.read("gt_probe", c.gt_probe);
  s.read("gt_probe_kappa", c.gt_probe_kappa);
  s.read("gt_probe_k", c.gt_probe_k);
  s.read("record_wall_time", c.record_wall_time);
  s.read("checkpoint_every", c.checkpoint_every);
  s.read("threads", c.threads);
  if (auto e = s.child("eval")) {
    std::string mode = c.eval_mode.kind == DecodeMode::Kind::greedy ? "greedy" : "stochastic";
    e->read("mode", mode);
    if (mode == "greedy") {
      c.eval_mode.kind = DecodeMode::Kind::greedy;
    } else if (mode == "stochastic") {
      c.eval_mode.kind = DecodeMode::Kind::stochastic;
    } else {
      throw ConfigError(e->field("mode"), "expected greedy or stochastic, got '" + mode + "'");
    }
    e->read("temperature", c.eval_mode.temperature);
    e->read("top_p", c.eval_mode.top_p);
    e->read("max_new", c.eval_max_new);
    e->finish();
  }
  s.finish();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON: ") + e.what());
  }
  RunConfig rc;
  bool vocab_size_given = false;
  Section top(doc, "config");
  top.read("vocab", rc.vocab_symbols);
  guarded("config.vocab", [&] { (void)rc.vocab(); });
  if (top.has("task") && top.has("corpus")) throw ConfigError("config", "give either task or corpus, not both");
  if (auto s = top.child("task")) {
    TaskSpec t;
    read_task(*s, t);
    rc.task = t;
  }
  if (auto s = top.child("corpus")) {
    CorpusFiles f;
    std::string train, in, ood;
    s->read("train", train);
    if (train.empty()) throw ConfigError(s->field("train"), "required");
    f.train = resolve(base_dir, train);
    if (s->has("eval_in")) {
      s->read("eval_in", in);
      f.eval_in = resolve(base_dir, in);
    }
    if (s->has("eval_ood")) {
      s->read("eval_ood", ood);
      f.eval_ood = resolve(base_dir, ood);
    }
    s->finish();
    rc.corpus = f;
  }
  if (!rc.corpus && !rc.task) rc.task = TaskSpec{};

  if (top.has("init_from")) {
    std::string p;
    top.read("init_from", p);
    if (p.empty()) throw ConfigError("config.init_from", "must name a checkpoint directory");
    rc.init_from = resolve(base_dir, p);
  }

  TrainConfig& c = rc.train;
  if (auto s = top.child("model")) {
    vocab_size_given = s->has("vocab_size");
    read_model(*s, c.model);
  }
  if (!vocab_size_given) c.model.vocab_size = rc.vocab().size();
  if (auto s = top.child("loss")) read_loss(*s, c.loss);
  if (auto s = top.child("schedule")) {
    s->read("peak_lr", c.schedule.peak_lr);
    s->read("min_lr", c.schedule.min_lr);
    s->read("warmup_ratio", c.schedule.warmup_ratio);
    s->finish();
  }
  if (auto s = top.child("adamw")) {
    s->read("beta1", c.adamw.beta1);
    s->read("beta2", c.adamw.beta2);
    s->read("eps", c.adamw.eps);
    s->read("weight_decay", c.adamw.weight_decay);
    s->finish();
  }
  if (auto s = top.child("trainer")) read_trainer(*s, c);
  top.finish();

  guarded("config.model", [&] { c.model.validate(); });
  if (c.model.vocab_size < rc.vocab().size()) {
    throw ConfigError("config.model.vocab_size", "smaller than the vocabulary (" +
                                                     std::to_string(rc.vocab().size()) + " symbols)");
  }
  guarded("config.loss", [&] { c.loss.validate(); });
  if (rc.task) guarded("config.task", [&] { rc.task->validate(); });
  guarded("config.trainer", [&] { c.validate(); });
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string resolved_config_json(const RunConfig& rc) {
  const TrainConfig& c = rc.train;
  json j;
  j["vocab"] = rc.vocab_symbols;
  if (rc.task) {
    const TaskSpec& t = *rc.task;
    j["task"] = {{"kind", to_string(t.task)},
                 {"operand_max", t.operand_max},
                 {"modulus", t.modulus},
                 {"ood_operand_min", t.ood_operand_min},
                 {"ood_operand_max", t.ood_operand_max},
                 {"min_len", t.min_len},
                 {"max_len", t.max_len},
                 {"ood_min_len", t.ood_min_len},
                 {"ood_max_len", t.ood_max_len},
                 {"alphabet", t.alphabet},
                 {"train_size", t.train_size},
                 {"eval_size", t.eval_size},
                 {"ood_size", t.ood_size},
                 {"split_seed", t.split_seed}};
  } else {
    json f = {{"train", std::filesystem::absolute(rc.corpus->train).string()}};
    if (rc.corpus->eval_in) f["eval_in"] = std::filesystem::absolute(*rc.corpus->eval_in).string();
    if (rc.corpus->eval_ood) f["eval_ood"] = std::filesystem::absolute(*rc.corpus->eval_ood).string();
    j["corpus"] = f;
  }
  if (rc.init_from) j["init_from"] = std::filesystem::absolute(*rc.init_from).string();
  j["model"] = {{"kind", to_string(c.model.kind)},     {"vocab_size", c.model.vocab_size},
                {"context_len", c.model.context_len}, {"d_model", c.model.d_model},
                {"n_heads", c.model.n_heads},         {"n_layers", c.model.n_layers},
                {"d_ff", c.model.d_ff},               {"init_seed", c.model.init_seed}};
  j["loss"] = {{"objective", to_string(c.loss.objective)},
               {"kappa", c.loss.kappa},
               {"k_samples", c.loss.k_samples},
               {"beta", c.loss.beta}};
  j["schedule"] = {
      {"peak_lr", c.schedule.peak_lr}, {"min_lr", c.schedule.min_lr}, {"warmup_ratio", c.schedule.warmup_ratio}};
  j["adamw"] = {{"beta1", c.adamw.beta1},
                {"beta2", c.adamw.beta2},
                {"eps", c.adamw.eps},
                {"weight_decay", c.adamw.weight_decay}};
  j["trainer"] = {
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"seed", c.seed},
      {"eval_every", c.eval_every},
      {"clip_norm", c.clip_norm ? json(*c.clip_norm) : json(nullptr)},
      {"gt_probe", c.gt_probe},
      {"gt_probe_kappa", c.gt_probe_kappa},
      {"gt_probe_k", c.gt_probe_k},
      {"record_wall_time", c.record_wall_time},
      {"checkpoint_every", c.checkpoint_every},
      {"threads", c.threads},
      {"eval",
       {{"mode", c.eval_mode.kind == DecodeMode::Kind::greedy ? "greedy" : "stochastic"},
        {"temperature", c.eval_mode.temperature},
        {"top_p", c.eval_mode.top_p},
        {"max_new", c.eval_max_new}}},
  };
  return j.dump(2) + "\n";
}

Corpus load_corpus(const RunConfig& rc) {
  const Vocab vocab = rc.vocab();
  Corpus out;
  if (rc.task) {
    TaskSplits s = gen_task(*rc.task, vocab);
    out.train = std::move(s.train);
    out.eval_in = std::move(s.eval_in);
    out.eval_ood = std::move(s.eval_ood);
  } else {
    const std::size_t ctx = rc.train.model.context_len;
    auto load = [&](const std::filesystem::path& p) {
      JsonlCorpus j = load_jsonl(p, vocab, ctx);
      return std::move(j.examples);
    };
    out.train = load(rc.corpus->train);
    if (rc.corpus->eval_in) out.eval_in = load(*rc.corpus->eval_in);
    if (rc.corpus->eval_ood) out.eval_ood = load(*rc.corpus->eval_ood);
  }
  for (const auto* split : {&out.train, &out.eval_in, &out.eval_ood}) {
    for (const auto& ex : *split) validate_example(ex, rc.train.model.context_len, rc.train.model.vocab_size);
  }
  if (out.train.empty()) throw ConfigError("config", "training corpus is empty");
  return out;
}

}  // namespace otrlab
