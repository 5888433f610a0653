#pragma once

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "siss/checkpoint.hpp"
#include "siss/config.hpp"
#include "siss/csv.hpp"
#include "siss/dataset_io.hpp"
#include "siss/engine.hpp"
#include "siss/evaluation.hpp"
#include "siss/verify.hpp"

namespace siss {

struct CliOptions {
  std::string config_path;
  std::string checkpoint_path;
  std::string out_dir;  // output root; empty falls back to $SISS_OUT_DIR or ./out
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
  std::string report_path;  // verify only
  bool inject_bad_coefficient = false;
  std::int64_t verify_trials = 0;  // 0 keeps the defaults
};

namespace cli_detail {

inline std::string out_root(const CliOptions& opt) {
  if (!opt.out_dir.empty()) return opt.out_dir;
  if (const char* env = std::getenv("SISS_OUT_DIR")) return env;
  return "out";
}

inline std::string run_id(const RunConfig& cfg, const std::string& fallback) {
  std::string base = !cfg.run_name.empty() ? cfg.run_name
                     : cfg.method          ? method_name(*cfg.method)
                                           : fallback;
  if (cfg.method && *cfg.method == Method::SISS && cfg.lambda)
    base += "-l" + format_double(*cfg.lambda);
  return base + "-s" + std::to_string(cfg.seed.value_or(0)) + "-" + config_hash(cfg).substr(0, 8);
}

inline void write_manifest(const std::string& dir, const RunConfig& cfg, const std::string& id) {
  nlohmann::json j;
  j["run_id"] = id;
  j["config_hash"] = config_hash(cfg);
  j["output_dir"] = dir;
  nlohmann::json cfgj;
  std::istringstream canon(canonical_config_string(cfg));
  std::string line;
  while (std::getline(canon, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) cfgj[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = cfgj;
  write_file(dir + "/manifest.json", j.dump(2) + "\n");
}

// Parses the config and applies CLI overrides; on failure prints diagnostics
// and returns nullopt (callers exit 2).
inline std::optional<RunConfig> load_config(
    const CliOptions& opt, std::vector<std::string> (*validator)(const RunConfig&)) {
  if (opt.config_path.empty()) {
    std::cerr << "error: --config is required\n";
    return std::nullopt;
  }
  RunConfig cfg;
  try {
    cfg = parse_config_file(opt.config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << opt.config_path << ": " << e.what() << "\n";
    return std::nullopt;
  }
  if (opt.seed_override) cfg.seed = *opt.seed_override;
  const auto bad = validator(cfg);
  if (!bad.empty()) {
    for (const auto& msg : bad) std::cerr << "error: " << opt.config_path << ": " << msg << "\n";
    return std::nullopt;
  }
  return cfg;
}

inline std::vector<std::string> eval_csv_header() {
  return {"step",          "p_hat",         "ci_low",     "ci_high",
          "nll_unlearn_bits", "nll_keep_bits", "quality_mmd"};
}

inline std::vector<std::string> eval_csv_row(std::int64_t step, const EvalResult& ev) {
  return {std::to_string(step),          format_double(ev.rate.p_hat),
          format_double(ev.rate.ci_low), format_double(ev.rate.ci_high),
          format_double(ev.nll_unlearn_bits), format_double(ev.nll_keep_bits),
          format_double(ev.quality_mmd)};
}

struct UnlearnRunResult {
  RunState state;
  EvalResult final_eval;
  std::string dir;
};

// Shared by cmd_unlearn and the sweep: one deletion fine-tuning run with
// periodic evaluation rows and a final checkpoint.
inline UnlearnRunResult run_unlearn(const RunConfig& cfg, const Checkpoint& start,
                                    const std::string& dir) {
  ensure_dir(dir);
  const NoiseSchedule schedule = build_schedule(cfg.schedule_T, cfg.beta_start, cfg.beta_end);
  Rng data_rng(cfg.data_seed);
  const UnlearnDataset ds = generate_dataset(cfg.data, data_rng);

  RunState state;
  state.model = start.model;
  state.step = start.step_count;

  CsvWriter eval_csv(dir + "/eval.csv", eval_csv_header());
  EvalResult last_eval;
  auto do_eval = [&](const DenoiserModel& model, std::int64_t step) {
    Rng eval_rng = Rng(cfg.seed.value() ^ 0xEA15EA15ULL).split(static_cast<std::uint64_t>(step));
    last_eval = evaluate_model(model, schedule, ds, cfg, cfg.eval_samples, eval_rng);
    eval_csv.append_row(eval_csv_row(step, last_eval));
  };
  do_eval(state.model, 0);

  EngineHooks hooks;
  std::int64_t local_step = 0;
  hooks.on_eval = [&](RunState& s, const RunConfig& c) {
    local_step = s.metric_history.empty() ? local_step : s.metric_history.back().step;
    do_eval(s.model, local_step);
    (void)c;
  };
  Rng rng(cfg.seed.value());
  state = unlearn(cfg, std::move(state), ds, rng, hooks, dir + "/metrics.csv");

  Checkpoint ck;
  ck.model = state.model;
  ck.schedule_T = cfg.schedule_T;
  ck.beta_start = cfg.beta_start;
  ck.beta_end = cfg.beta_end;
  ck.rng_seed = cfg.seed.value();
  ck.step_count = state.step;
  save_checkpoint(dir + "/checkpoint.bin", ck);

  UnlearnRunResult res;
  res.state = std::move(state);
  res.final_eval = last_eval;
  res.dir = dir;
  return res;
}

}  // namespace cli_detail

inline int cmd_pretrain(const CliOptions& opt) {
  const auto cfg = cli_detail::load_config(opt, validate_for_pretrain);
  if (!cfg) return 2;
  try {
    const std::string id = cli_detail::run_id(*cfg, "pretrain");
    const std::string dir = cli_detail::out_root(opt) + "/" + id;
    ensure_dir(dir);
    cli_detail::write_manifest(dir, *cfg, id);

    Rng data_rng(cfg->data_seed);
    const UnlearnDataset ds = generate_dataset(cfg->data, data_rng);
    write_dataset_csv(dir + "/dataset.csv", ds);
    write_dataset_sidecar(dir + "/dataset.json", cfg->data);

    std::vector<Vec> all_points = ds.keep_points;
    all_points.insert(all_points.end(), ds.unlearn_points.begin(), ds.unlearn_points.end());

    auto save = [&](const RunState& s) {
      Checkpoint ck;
      ck.model = s.model;
      ck.schedule_T = cfg->schedule_T;
      ck.beta_start = cfg->beta_start;
      ck.beta_end = cfg->beta_end;
      ck.rng_seed = cfg->seed.value();
      ck.step_count = s.step;
      save_checkpoint(dir + "/checkpoint.bin", ck);
    };
    EngineHooks hooks;
    hooks.on_eval = [&](RunState& s, const RunConfig&) { save(s); };
    Rng rng(cfg->seed.value());
    const RunState state = pretrain(*cfg, all_points, rng, hooks, dir + "/metrics.csv");
    save(state);
    std::cout << "pretrain complete: " << dir << " (" << state.step << " steps)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_unlearn(const CliOptions& opt) {
  const auto cfg = cli_detail::load_config(opt, validate_for_unlearn);
  if (!cfg) return 2;
  if (opt.checkpoint_path.empty()) {
    std::cerr << "error: --checkpoint is required\n";
    return 2;
  }
  try {
    const Checkpoint start = load_checkpoint(opt.checkpoint_path);
    if (start.schedule_T != cfg->schedule_T || start.beta_start != cfg->beta_start ||
        start.beta_end != cfg->beta_end) {
      std::cerr << "error: checkpoint schedule differs from config\n";
      return 2;
    }
    const std::string id = cli_detail::run_id(*cfg, "unlearn");
    const std::string dir = cli_detail::out_root(opt) + "/" + id;
    ensure_dir(dir);
    cli_detail::write_manifest(dir, *cfg, id);
    const auto res = cli_detail::run_unlearn(*cfg, start, dir);
    std::cout << "unlearn complete: " << dir << " (p_hat " << format_double(res.final_eval.rate.p_hat)
              << ", nll_unlearn " << format_double(res.final_eval.nll_unlearn_bits) << ")\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_eval(const CliOptions& opt) {
  const auto cfg = cli_detail::load_config(opt, validate_for_pretrain);
  if (!cfg) return 2;
  if (opt.checkpoint_path.empty()) {
    std::cerr << "error: --checkpoint is required\n";
    return 2;
  }
  try {
    const Checkpoint ck = load_checkpoint(opt.checkpoint_path);
    const NoiseSchedule schedule = build_schedule(cfg->schedule_T, cfg->beta_start, cfg->beta_end);
    Rng data_rng(cfg->data_seed);
    const UnlearnDataset ds = generate_dataset(cfg->data, data_rng);
    Rng eval_rng(cfg->seed.value() ^ 0xEA15EA15ULL);
    const EvalResult ev = evaluate_model(ck.model, schedule, ds, *cfg, cfg->eval_samples, eval_rng);

    const std::string id = cli_detail::run_id(*cfg, "eval");
    const std::string dir = cli_detail::out_root(opt) + "/" + id;
    ensure_dir(dir);
    cli_detail::write_manifest(dir, *cfg, id);
    CsvWriter csv(dir + "/eval.csv", cli_detail::eval_csv_header());
    csv.append_row(cli_detail::eval_csv_row(ck.step_count, ev));
    nlohmann::json j;
    j["config_hash"] = config_hash(*cfg);
    j["checkpoint"] = opt.checkpoint_path;
    j["step_count"] = ck.step_count;
    j["p_hat"] = ev.rate.p_hat;
    j["ci_low"] = ev.rate.ci_low;
    j["ci_high"] = ev.rate.ci_high;
    j["num_samples"] = ev.rate.num_samples;
    j["nll_unlearn_bits"] = ev.nll_unlearn_bits;
    j["nll_keep_bits"] = ev.nll_keep_bits;
    j["quality_mmd"] = ev.quality_mmd;
    write_file(dir + "/eval.json", j.dump(2) + "\n");
    std::cout << "eval complete: " << dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_sweep(const CliOptions& opt) {
  const auto cfg = cli_detail::load_config(opt, validate_for_sweep);
  if (!cfg) return 2;
  if (opt.checkpoint_path.empty()) {
    std::cerr << "error: --checkpoint is required (sweeps fine-tune a pretrained model)\n";
    return 2;
  }
  try {
    std::vector<MethodEntry> entries;
    for (const auto& name : cfg->sweep_methods) {
      MethodEntry e = parse_method_entry(name);
      if (e.method == Method::SISS && !e.lambda && !cfg->lambda) {
        std::cerr << "error: sweep entry '" << name << "' needs an inline lambda (siss@0.5)\n";
        return 2;
      }
      entries.push_back(e);
    }
    const Checkpoint start = load_checkpoint(opt.checkpoint_path);
    const std::string sweep_id = "sweep-" + config_hash(*cfg).substr(0, 8);
    const std::string sweep_dir = cli_detail::out_root(opt) + "/" + sweep_id;
    ensure_dir(sweep_dir);
    cli_detail::write_manifest(sweep_dir, *cfg, sweep_id);

    struct PlannedRun {
      RunConfig cfg;
      std::string dir;
      EvalResult result;
    };
    std::vector<PlannedRun> runs;
    for (const auto& entry : entries) {
      for (const auto seed : cfg->sweep_seeds) {
        RunConfig rc = *cfg;
        rc.sweep_methods.clear();
        rc.sweep_seeds.clear();
        rc.method = entry.method;
        rc.lambda = entry.method == Method::SISS
                        ? (entry.lambda ? entry.lambda : rc.lambda)
                        : std::nullopt;
        rc.seed = seed;
        rc.run_name.clear();
        runs.push_back({rc, sweep_dir + "/" + cli_detail::run_id(rc, "run"), {}});
      }
    }

    // Runs are independent; spread them across worker threads in fixed
    // stripes so outputs land identically regardless of thread count.
    const int threads = std::max(1, opt.threads);
    auto worker = [&](int w) {
      for (std::size_t i = static_cast<std::size_t>(w); i < runs.size();
           i += static_cast<std::size_t>(threads))
        runs[i].result = cli_detail::run_unlearn(runs[i].cfg, start, runs[i].dir).final_eval;
    };
    if (threads == 1) {
      worker(0);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
      for (auto& th : pool) th.join();
    }

    CsvWriter pareto(sweep_dir + "/pareto.csv",
                     {"method", "lambda", "seed", "steps", "p_hat", "ci_low", "ci_high",
                      "nll_unlearn_bits", "nll_keep_bits", "quality_mmd"});
    for (const auto& run : runs) {
      pareto.append_row({method_name(*run.cfg.method),
                         run.cfg.lambda ? format_double(*run.cfg.lambda) : "",
                         std::to_string(run.cfg.seed.value()), std::to_string(*run.cfg.steps),
                         format_double(run.result.rate.p_hat), format_double(run.result.rate.ci_low),
                         format_double(run.result.rate.ci_high),
                         format_double(run.result.nll_unlearn_bits),
                         format_double(run.result.nll_keep_bits),
                         format_double(run.result.quality_mmd)});
    }
    std::cout << "sweep complete: " << sweep_dir << " (" << runs.size() << " runs)\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_verify(const CliOptions& opt) {
  try {
    VerifySuiteOptions vopt;
    RunConfig cfg;  // defaults; hashed into the report for traceability
    if (!opt.config_path.empty()) {
      try {
        cfg = parse_config_file(opt.config_path);
      } catch (const std::exception& e) {
        std::cerr << "error: " << opt.config_path << ": " << e.what() << "\n";
        return 2;
      }
    }
    vopt.seed = opt.seed_override ? *opt.seed_override : cfg.seed.value_or(1);
    if (opt.verify_trials > 0) {
      vopt.lemma_trials = opt.verify_trials;
      vopt.rewrite_trials = opt.verify_trials;
    }
    vopt.inject_bad_coefficient = opt.inject_bad_coefficient;

    const VerifySuiteResult res = run_verify_suite(vopt);
    const nlohmann::json report = verify_report_json(res, config_hash(cfg), vopt.seed);
    const std::string path = !opt.report_path.empty()
                                 ? opt.report_path
                                 : cli_detail::out_root(opt) + "/verify_report.json";
    write_file(path, report.dump(2) + "\n");
    for (const auto& c : res.checks)
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name
                << (c.expected_pass ? "" : " (negative control, expected FAIL)") << "\n";
    std::cout << (res.all_ok ? "verify: all checks consistent\n"
                             : "verify: INCONSISTENT RESULTS\n");
    std::cout << "report: " << path << "\n";
    return res.all_ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace siss
