// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace otrlab {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

namespace {

struct TensorRef {
  std::string name;
  const Tensor* value;
};

std::string shape_field(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape(const std::string& f) {
  if (f == "scalar") return {};
  Shape s;
  std::stringstream ss(f);
  std::string part;
  while (std::getline(ss, part, 'x')) s.push_back(std::stoull(part));
  return s;
}

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw CheckpointError("checkpoint: bad number for " + what);
  return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw CheckpointError("checkpoint: bad integer for " + what);
  return v;
}

}  // namespace

void checkpoint_save(const fs::path& dir, const TokenPolicy& model, const AdamWState* optimizer,
                     const std::map<std::string, std::string>& meta) {
  fs::create_directories(dir);
  const auto& c = model.config();
  std::vector<TensorRef> tensors;
  for (const auto& p : model.params()) tensors.push_back({p.name, &p.value});
  std::vector<Tensor> moments;
  if (optimizer) {
    moments.reserve(2 * model.params().size());
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      moments.emplace_back(model.params()[i].value.shape, optimizer->m[i]);
      moments.emplace_back(model.params()[i].value.shape, optimizer->v[i]);
    }
    for (std::size_t i = 0; i < model.params().size(); ++i) {
      tensors.push_back({"adamw.m/" + model.params()[i].name, &moments[2 * i]});
      tensors.push_back({"adamw.v/" + model.params()[i].name, &moments[2 * i + 1]});
    }
  }

  std::ostringstream man;
  man << "otrlab-checkpoint " << kCheckpointVersion << "\n";
  man << "model.kind " << to_string(c.kind) << "\n";
  man << "model.vocab_size " << c.vocab_size << "\n";
  man << "model.context_len " << c.context_len << "\n";
  man << "model.d_model " << c.d_model << "\n";
  man << "model.n_heads " << c.n_heads << "\n";
  man << "model.n_layers " << c.n_layers << "\n";
  man << "model.d_ff " << c.d_ff << "\n";
  man << "model.init_seed " << c.init_seed << "\n";
  if (optimizer) {
    man << "adamw.step " << optimizer->step << "\n";
    man << "adamw.beta1 " << format_double(optimizer->hp.beta1) << "\n";
    man << "adamw.beta2 " << format_double(optimizer->hp.beta2) << "\n";
    man << "adamw.eps " << format_double(optimizer->hp.eps) << "\n";
    man << "adamw.weight_decay " << format_double(optimizer->hp.weight_decay) << "\n";
  }
  for (const auto& [k, v] : meta) {
    if (k.find_first_of(" \n") != std::string::npos || v.find_first_of(" \n") != std::string::npos || v.empty()) {
      throw CheckpointError("checkpoint: metadata key/value must be single tokens: " + k);
    }
    man << "meta." << k << " " << v << "\n";
  }
  man << "tensors " << tensors.size() << "\n";
  std::string blob;
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    man << t.name << " " << shape_field(t.value->shape) << " f64 " << offset << "\n";
    for (double v : t.value->values) put_le(blob, v);
    offset += 8 * t.value->size();
  }

  std::ofstream mf(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  mf << man.str();
  std::ofstream bf(dir / "tensors.bin", std::ios::binary | std::ios::trunc);
  bf.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!mf || !bf) throw CheckpointError("checkpoint: failed writing " + dir.string());
}

Checkpoint checkpoint_load(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.txt", std::ios::binary);
  if (!mf) throw CheckpointError("checkpoint: cannot open " + (dir / "manifest.txt").string());
  std::ifstream bf(dir / "tensors.bin", std::ios::binary);
  if (!bf) throw CheckpointError("checkpoint: cannot open " + (dir / "tensors.bin").string());
  std::string blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  std::string line;
  if (!std::getline(mf, line)) throw CheckpointError("checkpoint: empty manifest");
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0;
    hs >> magic >> version;
    if (magic != "otrlab-checkpoint") throw CheckpointError("checkpoint: not an otrlab manifest");
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint: version " + std::to_string(version) + " unsupported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    }
  }

  std::map<std::string, std::string> header;
  std::size_t n_tensors = 0;
  while (std::getline(mf, line)) {
    std::istringstream ls(line);
    std::string key, value;
    ls >> key >> value;
    if (key == "tensors") {
      n_tensors = parse_uint(value, "tensors");
      break;
    }
    header[key] = value;
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = header.find(k);
    if (it == header.end()) throw CheckpointError("checkpoint: manifest lacks " + k);
    return it->second;
  };

  ModelConfig cfg;
  cfg.kind = model_kind_from_string(need("model.kind"));
  cfg.vocab_size = parse_uint(need("model.vocab_size"), "model.vocab_size");
  cfg.context_len = parse_uint(need("model.context_len"), "model.context_len");
  cfg.d_model = parse_uint(need("model.d_model"), "model.d_model");
  cfg.n_heads = parse_uint(need("model.n_heads"), "model.n_heads");
  cfg.n_layers = parse_uint(need("model.n_layers"), "model.n_layers");
  cfg.d_ff = parse_uint(need("model.d_ff"), "model.d_ff");
  cfg.init_seed = parse_uint(need("model.init_seed"), "model.init_seed");

  Checkpoint ck;
  ck.model = init_params(cfg);
  auto& params = ck.model->params();
  const bool has_opt = header.count("adamw.step") > 0;
  if (has_opt) {
    AdamWConfig hp;
    hp.beta1 = parse_double(need("adamw.beta1"), "adamw.beta1");
    hp.beta2 = parse_double(need("adamw.beta2"), "adamw.beta2");
    hp.eps = parse_double(need("adamw.eps"), "adamw.eps");
    hp.weight_decay = parse_double(need("adamw.weight_decay"), "adamw.weight_decay");
    ck.optimizer = AdamWState::for_params(params, hp);
    ck.optimizer->step = parse_uint(need("adamw.step"), "adamw.step");
  }
  for (const auto& [k, v] : header)
    if (k.rfind("meta.", 0) == 0) ck.meta[k.substr(5)] = v;

  const std::size_t expected = params.size() * (has_opt ? 3 : 1);
  if (n_tensors != expected) {
    throw CheckpointError("checkpoint: manifest lists " + std::to_string(n_tensors) + " tensors, model needs " +
                          std::to_string(expected));
  }

  std::size_t running = 0;
  for (std::size_t i = 0; i < n_tensors; ++i) {
    if (!std::getline(mf, line)) throw CheckpointError("checkpoint: manifest truncated at tensor " + std::to_string(i));
    std::istringstream ls(line);
    std::string name, shape_s, dtype, off_s;
    ls >> name >> shape_s >> dtype >> off_s;
    if (dtype != "f64") throw CheckpointError("checkpoint: tensor " + name + " has unsupported dtype " + dtype);
    const Shape shape = parse_shape(shape_s);
    const std::size_t offset = parse_uint(off_s, name);
    if (offset != running) throw CheckpointError("checkpoint: tensor " + name + " has unexpected byte offset");
    const std::size_t bytes = 8 * numel(shape);
    if (offset + bytes > blob.size()) {
      throw CheckpointError("checkpoint: tensor data blob too short for tensor " + name + " (needs bytes " +
                            std::to_string(offset) + ".." + std::to_string(offset + bytes) + ", blob has " +
                            std::to_string(blob.size()) + ")");
    }

    std::vector<double>* dest = nullptr;
    const std::size_t pi = i < params.size() ? i : (i - params.size()) / 2;
    std::string expect_name = params[pi].name;
    if (i < params.size()) {
      dest = &params[pi].value.values;
    } else if ((i - params.size()) % 2 == 0) {
      expect_name = "adamw.m/" + expect_name;
      dest = &ck.optimizer->m[pi];
    } else {
      expect_name = "adamw.v/" + expect_name;
      dest = &ck.optimizer->v[pi];
    }
    if (name != expect_name || shape != params[pi].value.shape) {
      throw CheckpointError("checkpoint: tensor " + name + " " + shape_s + " does not match expected " + expect_name +
                            " " + shape_str(params[pi].value.shape));
    }
    for (std::size_t j = 0; j < dest->size(); ++j) (*dest)[j] = get_le(&blob[offset + 8 * j]);
    running += bytes;
  }
  if (running != blob.size()) {
    throw CheckpointError("checkpoint: blob has " + std::to_string(blob.size() - running) + " trailing bytes");
  }
  return ck;
}

}  // namespace otrlab
