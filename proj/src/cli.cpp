// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include "otrlab/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "otrlab/checkpoint.hpp"
#include "otrlab/config.hpp"
#include "otrlab/train.hpp"
#include "otrlab/verify.hpp"

namespace otrlab {

namespace {

namespace fs = std::filesystem;

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

// Metrics rows of an earlier run up to and including `last_step`, header excluded.
std::vector<std::string> kept_rows(const fs::path& csv, std::size_t last_step) {
  std::vector<std::string> out;
  std::ifstream in(csv);
  if (!in) return out;
  std::string line;
  std::getline(in, line);
  if (line != kMetricsHeader) throw std::invalid_argument(csv.string() + ": unexpected metrics header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t step = std::stoull(line.substr(0, line.find(',')));
    if (step <= last_step) out.push_back(line);
  }
  return out;
}

// One training run writing resolved_config.json, metrics.csv and checkpoints under dir.
TrainResult run_train(const RunConfig& rc, const Corpus& corpus, const TokenPolicy* init, const fs::path& dir,
                      const Checkpoint* resume, std::optional<std::size_t> stop_after) {
  fs::create_directories(dir);
  write_file(dir / "resolved_config.json", resolved_config_json(rc));
  const fs::path csv = dir / "metrics.csv";
  std::vector<std::string> head;
  if (resume) head = kept_rows(csv, std::stoull(resume->meta.at("step")));
  std::ofstream f(csv, std::ios::binary | std::ios::trunc);
  f << kMetricsHeader << '\n';
  for (const auto& l : head) f << l << '\n';
  f.flush();

  TrainConfig tc = rc.train;
  tc.out_dir = dir;
  TrainOptions opts;
  opts.resume = resume;
  opts.init = init;
  opts.stop_after = stop_after;
  opts.on_row = [&](const MetricsRow& r) {
    f << metrics_csv_row(r) << '\n';
    f.flush();
  };
  TrainResult res = train(tc, corpus, opts);
  if (!f) throw std::runtime_error("cannot write " + csv.string());
  return res;
}

std::unique_ptr<TokenPolicy> load_base(const RunConfig& rc) {
  if (!rc.init_from) return nullptr;
  return checkpoint_load(*rc.init_from).model;
}

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

int classify(const std::exception_ptr& ep, std::ostream& err) {
  try {
    std::rethrow_exception(ep);
  } catch (const TrainAbort& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

// Comma-separated items with surrounding blanks removed; empty items are dropped.
std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

struct GridCell {
  Objective objective;
  std::optional<double> beta;
  std::string name;
};

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"One-token rollout fine-tuning lab"};
  app.require_subcommand(1);

  std::string config_path, objective, out_dir, resume_dir, suite;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stop_after;
  std::uint64_t verify_seed = 0;
  std::string betas_arg = "-1,-0.1,0,0.01";
  std::string objectives_arg = "sft,otr";
  std::size_t jobs = 1;

  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--config", config_path, "JSON run configuration")->required();
  train_cmd->add_option("--objective", objective, "Override loss.objective (sft, dft, otr)");
  train_cmd->add_option("--seed", seed, "Override trainer.seed");
  train_cmd->add_option("--out", out_dir, "Output directory")->required();
  train_cmd->add_option("--resume", resume_dir, "Checkpoint directory to resume from");
  train_cmd->add_option("--stop-after", stop_after, "Checkpoint and stop after this step");

  auto* verify_cmd = app.add_subcommand("verify", "Run a self-check suite");
  verify_cmd->add_option("--suite", suite, "gradcheck, estimator or equivalence")->required();
  verify_cmd->add_option("--seed", verify_seed, "Seed for the random points");

  auto* compare_cmd = app.add_subcommand("compare", "Run an objective/beta grid");
  compare_cmd->add_option("--config", config_path, "Base JSON run configuration")->required();
  compare_cmd->add_option("--betas", betas_arg, "Comma-separated beta values for OTR cells");
  compare_cmd->add_option("--objectives", objectives_arg, "Comma-separated objectives");
  compare_cmd->add_option("--out", out_dir, "Output directory")->required();
  compare_cmd->add_option("--jobs", jobs, "Cells run in parallel")->check(CLI::PositiveNumber);

  std::vector<std::string> argv_store{"otrlab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (verify_cmd->parsed()) {
      const auto results = run_suite(suite, verify_seed);
      bool ok = true;
      for (const auto& r : results) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << " measured=" << format_double(r.measured)
            << " threshold=" << format_double(r.threshold);
        if (!r.detail.empty()) out << "  " << r.detail;
        out << '\n';
        ok = ok && r.passed;
      }
      return ok ? kExitOk : kExitFailure;
    }

    RunConfig rc = load_run_config(config_path);

    if (train_cmd->parsed()) {
      if (!objective.empty()) {
        try {
          rc.train.loss.objective = objective_from_string(objective);
        } catch (const std::invalid_argument& e) {
          throw ConfigError("--objective", e.what());
        }
      }
      if (seed) rc.train.seed = *seed;
      if (rc.train.loss.objective == Objective::otr && rc.train.loss.beta > 0.0) {
        err << "warning: beta " << format_double(rc.train.loss.beta)
            << " > 0 rewards wrong samples; training may be unstable\n";
      }
      const Corpus corpus = load_corpus(rc);
      const auto base = load_base(rc);
      std::optional<Checkpoint> ck;
      if (!resume_dir.empty()) ck = checkpoint_load(resume_dir);
      const TrainResult res = run_train(rc, corpus, base.get(), out_dir, ck ? &*ck : nullptr, stop_after);
      if (!res.metrics.empty()) {
        const auto& last = res.metrics.back();
        out << "step " << last.step << " loss " << format_double(last.train_loss);
        if (last.gt_fraction) out << " gt_fraction " << format_double(*last.gt_fraction);
        if (last.eval_in_acc) out << " eval_in_acc " << format_double(*last.eval_in_acc);
        if (last.eval_ood_acc) out << " eval_ood_acc " << format_double(*last.eval_ood_acc);
        out << '\n';
      }
      out << (res.completed ? "completed" : "stopped") << " at step " << res.last_step << ", outputs in " << out_dir
          << '\n';
      return kExitOk;
    }

    // compare
    std::vector<double> betas;
    for (const auto& b : split_list(betas_arg)) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(b, &used);
      } catch (const std::exception&) {
      }
      if (used != b.size() || !std::isfinite(v)) throw ConfigError("--betas", "'" + b + "' is not a number");
      betas.push_back(v);
    }
    std::vector<GridCell> cells;
    for (const auto& name : split_list(objectives_arg)) {
      Objective o;
      try {
        o = objective_from_string(name);
      } catch (const std::invalid_argument& e) {
        throw ConfigError("--objectives", e.what());
      }
      if (o == Objective::otr) {
        for (double b : betas) cells.push_back({o, b, "otr_beta" + format_double(b)});
      } else {
        cells.push_back({o, std::nullopt, to_string(o)});
      }
    }
    if (cells.empty()) throw ConfigError("--objectives/--betas", "the grid has no cells");
    for (const auto& c : cells) {
      if (c.beta && *c.beta > 0.0) {
        err << "warning: beta " << format_double(*c.beta) << " > 0 rewards wrong samples; training may be unstable\n";
      }
    }
    const Corpus corpus = load_corpus(rc);
    const auto base = load_base(rc);
    fs::create_directories(out_dir);
    std::vector<std::string> summary(cells.size());
    std::vector<std::exception_ptr> errors(cells.size());
    std::mutex io;
    auto run_cell = [&](std::size_t i) {
      try {
        RunConfig cell_rc = rc;
        cell_rc.train.loss.objective = cells[i].objective;
        if (cells[i].beta) cell_rc.train.loss.beta = *cells[i].beta;
        const TrainResult res = run_train(cell_rc, corpus, base.get(), fs::path(out_dir) / cells[i].name, nullptr, std::nullopt);
        const auto& last = res.metrics.back();
        summary[i] = to_string(cells[i].objective) + ',' + (cells[i].beta ? format_double(*cells[i].beta) : "") + ',' +
                     format_double(last.train_loss) + ',' + opt_str(last.eval_in_acc) + ',' + opt_str(last.eval_ood_acc) +
                     ',' + opt_str(converged_gt_fraction(res.metrics));
        std::lock_guard<std::mutex> lock(io);
        out << "cell " << cells[i].name << ": " << summary[i] << '\n';
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    std::size_t next = 0;
    std::mutex q;
    std::vector<std::thread> pool;
    const std::size_t workers = std::min(jobs, cells.size());
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(q);
            if (next >= cells.size()) return;
            i = next++;
          }
          run_cell(i);
        }
      });
    }
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (errors[i]) {
        err << "cell " << cells[i].name << " failed\n";
        return classify(errors[i], err);
      }
    }
    std::string csv = std::string(kSummaryHeader) + '\n';
    for (const auto& s : summary) csv += s + '\n';
    write_file(fs::path(out_dir) / "summary.csv", csv);
    out << "summary written to " << (fs::path(out_dir) / "summary.csv").string() << '\n';
    return kExitOk;
  } catch (...) {
    return classify(std::current_exception(), err);
  }
}

}  // namespace otrlab
