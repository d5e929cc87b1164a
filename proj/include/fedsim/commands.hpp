#pragma once

// The three CLI operations as library functions, so tests drive them
// in-process. Each returns a process exit code:
//   0  success
//   1  validation problem (config, contract, or input format)
//   2  runtime failure (divergence, degenerate models, infeasible partition)
// Output files are written atomically and only after their content is fully
// computed, so a failed run does not leave partial outputs behind.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/diagnostics.hpp"
#include "fedsim/experiment.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

struct CliOptions {
  std::optional<std::string> output_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
  bool quiet = false;
};

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

namespace detail {

inline void apply_overrides(ParsedConfig& parsed, const CliOptions& opts) {
  if (opts.output_dir) parsed.experiment.output_dir = *opts.output_dir;
  if (opts.seeds) {
    if (opts.seeds->empty())
      throw ConfigError("--seeds override must list at least one seed");
    parsed.experiment.seeds = *opts.seeds;
  }
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) ||
      dynamic_cast<const ContractViolation*>(&e) ||
      dynamic_cast<const FormatError*>(&e))
    return kExitValidation;
  return kExitRuntime;
}

template <typename Fn>
int guarded(const char* cmd, bool quiet, Fn&& fn) {
  try {
    fn();
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << cmd << ": error: " << e.what() << "\n";
    (void)quiet;  // errors are never silenced
    return exit_code_for(e);
  }
}

inline std::string seed_file_tag(std::uint64_t seed) {
  return "seed" + std::to_string(seed);
}

// Single-shot commands use the dataset block seed literally, without the
// master-seed mixing run_experiment applies.
inline LabeledDataset build_dataset_for_partition(const DatasetConfig& d) {
  if (d.kind == DatasetConfig::Kind::synthetic)
    return make_synthetic_clusters(d.n_clusters, d.input_dim,
                                   d.samples_per_cluster, d.separation,
                                   d.noise_sigma, d.seed);
  return build_dataset(d, 0);
}

inline json attention_round_json(const RoundAttention& ra) {
  json j;
  j["round"] = ra.round;
  if (std::isfinite(ra.delta)) j["delta"] = ra.delta;
  j["participants"] = ra.participants;
  json rows = json::array();
  for (int i = 0; i < ra.weights.n; ++i) {
    json row = json::array();
    for (int c = 0; c < ra.weights.n; ++c) row.push_back(ra.weights.at(i, c));
    rows.push_back(std::move(row));
  }
  j["weights"] = std::move(rows);
  return j;
}

inline std::string trace_csv(const StationarityTrace& trace) {
  std::string out = "round,f_lambda,grad_norm_sq,running_min_grad_norm_sq\n";
  for (const auto& p : trace.points) {
    out += std::to_string(p.round);
    out += ',';
    out += fmt_double(p.objective);
    out += ',';
    out += fmt_double(p.grad_norm_sq);
    out += ',';
    out += fmt_double(p.running_min);
    out += '\n';
  }
  return out;
}

inline json probe_json(const AssumptionProbe& probe) {
  json j;
  j["max_f_grad_norm"] = probe.max_f_grad_norm;
  j["max_r_grad_norm"] = probe.max_r_grad_norm;
  j["lambda"] = probe.lambda;
  j["r_grad_within_f_bound_over_lambda"] = probe.r_grad_within_bound();
  j["max_f_lipschitz"] = probe.max_f_lipschitz();
  j["max_r_lipschitz"] = probe.max_r_lipschitz();
  j["n_secants"] = static_cast<int>(probe.f_lipschitz.size());
  return j;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// run: full experiment, metrics CSV per seed + summary JSON.
// ---------------------------------------------------------------------------

inline int cmd_run(const ParsedConfig& parsed_in, const CliOptions& opts) {
  return detail::guarded("run", opts.quiet, [&] {
    ParsedConfig parsed = parsed_in;
    detail::apply_overrides(parsed, opts);
    const ExperimentConfig& cfg = parsed.experiment;
    cfg.validate();

    // All computation happens before any directory is touched.
    const ExperimentResult result = run_experiment(cfg);

    const std::filesystem::path out_dir(cfg.output_dir);
    std::filesystem::create_directories(out_dir);
    atomic_write_file(out_dir / "resolved_config.json",
                      to_json(parsed).dump(2) + "\n");

    json summary;
    summary["name"] = cfg.name;
    summary["algorithm"] = to_string(cfg.algo.algorithm);
    summary["rounds_K"] = cfg.algo.rounds_K;
    summary["seeds"] = cfg.seeds;
    json per_seed = json::array();
    for (const auto& sr : result.per_seed) {
      json s;
      s["seed"] = sr.seed;
      s["final_accuracy"] = sr.series.final_accuracy;
      s["metrics_file"] = "metrics_" + detail::seed_file_tag(sr.seed) + ".csv";
      per_seed.push_back(std::move(s));
    }
    summary["per_seed"] = std::move(per_seed);
    summary["final_accuracy"] = {{"mean", result.metrics.final_accuracy_mean},
                                 {"std", result.metrics.final_accuracy_std}};

    for (const auto& sr : result.per_seed) {
      const std::string tag = detail::seed_file_tag(sr.seed);
      atomic_write_file(out_dir / ("metrics_" + tag + ".csv"),
                        metrics_csv(sr.series));
      if (cfg.diagnostics) {
        atomic_write_file(out_dir / ("trace_" + tag + ".csv"),
                          detail::trace_csv(sr.trace));
        if (!sr.attention.empty()) {
          std::string lines;
          for (const auto& ra : sr.attention)
            lines += detail::attention_round_json(ra).dump() + "\n";
          atomic_write_file(out_dir / ("attention_" + tag + ".jsonl"), lines);
        }
      }
      if (!opts.quiet)
        std::cerr << "[run] seed " << sr.seed
                  << " final_accuracy=" << sr.series.final_accuracy << "\n";
    }
    atomic_write_file(out_dir / "summary.json", summary.dump(2) + "\n");
    if (!opts.quiet)
      std::cerr << "[run] " << cfg.name << ": mean final accuracy "
                << result.metrics.final_accuracy_mean << " over "
                << cfg.seeds.size() << " seed(s) -> " << out_dir.string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// partition: shard the dataset once and write the per-client manifest.
// ---------------------------------------------------------------------------

inline int cmd_partition(const ParsedConfig& parsed_in, const CliOptions& opts) {
  return detail::guarded("partition", opts.quiet, [&] {
    ParsedConfig parsed = parsed_in;
    detail::apply_overrides(parsed, opts);
    const ExperimentConfig& cfg = parsed.experiment;
    cfg.validate();

    // Single-shot command: block seeds are used directly, no master mixing.
    const LabeledDataset ds = detail::build_dataset_for_partition(cfg.dataset);
    const auto shards = partition_dataset(ds, cfg.partition);

    std::string csv = "client_id,train_size,test_size";
    for (int c = 0; c < ds.num_classes; ++c)
      csv += ",class_" + std::to_string(c);
    csv += '\n';
    for (const auto& shard : shards) {
      std::vector<int> counts(ds.num_classes, 0);
      for (int y : shard.train.labels) counts[y] += 1;
      for (int y : shard.test.labels) counts[y] += 1;
      csv += std::to_string(shard.client_id);
      csv += ',';
      csv += std::to_string(shard.train.size());
      csv += ',';
      csv += std::to_string(shard.test.size());
      for (int c : counts) csv += ',' + std::to_string(c);
      csv += '\n';
    }

    const std::filesystem::path out_dir(cfg.output_dir);
    std::filesystem::create_directories(out_dir);
    atomic_write_file(out_dir / "partition_manifest.csv", csv);
    atomic_write_file(out_dir / "resolved_config.json",
                      to_json(parsed).dump(2) + "\n");
    if (!opts.quiet)
      std::cerr << "[partition] " << shards.size() << " clients -> "
                << (out_dir / "partition_manifest.csv").string() << "\n";
  });
}

// ---------------------------------------------------------------------------
// diagnose: stationarity traces on the quadratic testbed (or the configured
// dataset), rate fit over checkpoints, optional diminishing-schedule run, and
// an assumption probe. Everything lands in diagnose_report.json.
// ---------------------------------------------------------------------------

inline int cmd_diagnose(const ParsedConfig& parsed_in, const CliOptions& opts) {
  return detail::guarded("diagnose", opts.quiet, [&] {
    ParsedConfig parsed = parsed_in;
    detail::apply_overrides(parsed, opts);
    if (!parsed.has_diagnose)
      throw ConfigError("diagnose: config has no 'diagnose' block");
    const ExperimentConfig& cfg = parsed.experiment;
    const DiagnoseConfig& dg = parsed.diagnose;
    const std::uint64_t seed = cfg.seeds.front();

    json report;
    report["name"] = cfg.name;
    report["problem"] = dg.problem;
    std::map<std::string, std::string> trace_files;

    if (dg.problem == "quadratic") {
      const auto tb = make_quadratic_testbed(dg.n_clients, dg.dim, dg.n_clusters,
                                             dg.radius, dg.jitter, seed);
      report["testbed"] = {{"n_clients", dg.n_clients},
                           {"dim", dg.dim},
                           {"n_clusters", dg.n_clusters},
                           {"radius", dg.radius},
                           {"jitter", dg.jitter},
                           {"seed", seed}};

      // Horizon-dependent constant schedule: one trajectory per K, compare
      // the final running minimum across horizons.
      if (!dg.k_values.empty()) {
        std::vector<std::pair<double, double>> fit_points;
        json runs = json::array();
        for (int K : dg.k_values) {
          AlgoConfig algo = cfg.algo;
          algo.seed = mix_seed({seed, cfg.algo.seed});
          algo.rounds_K = K;
          algo.alpha_schedule = {ScheduleKind::constant_theorem, 0.0, 0.0};
          algo.beta_schedule = {ScheduleKind::constant_theorem, 0.0, 0.0};
          const auto trace = run_stationarity_trace(tb.problems, tb.init, algo);
          const double v = trace.points.back().running_min;
          fit_points.emplace_back(static_cast<double>(K), v);
          runs.push_back({{"rounds_K", K}, {"final_running_min", v}});
          trace_files["trace_constant_K" + std::to_string(K) + ".csv"] =
              detail::trace_csv(trace);
        }
        json ct;
        ct["runs"] = std::move(runs);
        if (fit_points.size() >= 2) {
          const RateFit fit = fit_loglog(fit_points);
          ct["fit"] = {{"slope", fit.slope},
                       {"intercept", fit.intercept},
                       {"residual", fit.residual},
                       {"n_points", fit.n_points}};
        }
        report["constant_theorem"] = std::move(ct);
      }

      // Diminishing schedule: one long run, compare the minimum squared
      // gradient norm over the first and last decile of rounds.
      if (dg.liminf_rounds > 0) {
        AlgoConfig algo = cfg.algo;
        algo.seed = mix_seed({seed, cfg.algo.seed});
        algo.rounds_K = dg.liminf_rounds;
        algo.alpha_schedule = {ScheduleKind::diminishing, dg.liminf_a, dg.liminf_b};
        algo.beta_schedule = {ScheduleKind::diminishing, dg.liminf_a, dg.liminf_b};
        const auto trace = run_stationarity_trace(tb.problems, tb.init, algo);
        const int K = dg.liminf_rounds;
        const int decile = std::max(1, K / 10);
        double first_min = std::numeric_limits<double>::infinity();
        double last_min = std::numeric_limits<double>::infinity();
        for (const auto& pt : trace.points) {
          if (pt.round >= 1 && pt.round <= decile)
            first_min = std::min(first_min, pt.grad_norm_sq);
          if (pt.round > K - decile)
            last_min = std::min(last_min, pt.grad_norm_sq);
        }
        report["diminishing"] = {{"rounds_K", K},
                                 {"a", dg.liminf_a},
                                 {"b", dg.liminf_b},
                                 {"first_decile_min", first_min},
                                 {"last_decile_min", last_min}};
        trace_files["trace_diminishing.csv"] = detail::trace_csv(trace);

        // Probe the assumptions along a thinned version of this trajectory.
        AlgoConfig probe_algo = algo;
        probe_algo.rounds_K = std::min(K, 50);
        const auto steps = resolve_schedules(probe_algo.alpha_schedule,
                                             probe_algo.beta_schedule,
                                             probe_algo.rounds_K, probe_algo.lambda);
        auto state = make_initial_state(static_cast<int>(tb.problems.size()), tb.init);
        std::vector<std::vector<ParamVector>> snapshots{state.models};
        for (int k = 1; k <= probe_algo.rounds_K; ++k) {
          state = run_round(state, probe_algo, tb.problems, steps[k - 1].beta).state;
          snapshots.push_back(state.models);
        }
        report["assumption_probe"] =
            detail::probe_json(assumption_probe(snapshots, tb.problems, cfg.algo.lambda));
      }
    } else {
      // Dataset problem: a single diagnostics-on run of the configured
      // experiment; checkpoints are read off its trace.
      ExperimentConfig run_cfg = cfg;
      run_cfg.diagnostics = true;
      run_cfg.seeds = {seed};
      const auto result = run_experiment(run_cfg);
      const auto& trace = result.per_seed.front().trace;
      trace_files["trace_dataset.csv"] = detail::trace_csv(trace);
      std::vector<int> ks;
      for (int k : dg.k_values)
        if (k <= cfg.algo.rounds_K) ks.push_back(k);
      if (ks.size() >= 2) {
        const RateFit fit = rate_fit(trace, ks);
        report["fit"] = {{"slope", fit.slope},
                         {"intercept", fit.intercept},
                         {"residual", fit.residual},
                         {"n_points", fit.n_points}};
      }
      report["final_objective"] = trace.points.back().objective;
      report["final_grad_norm_sq"] = trace.points.back().grad_norm_sq;
    }

    const std::filesystem::path out_dir(cfg.output_dir);
    std::filesystem::create_directories(out_dir);
    for (const auto& [name, content] : trace_files)
      atomic_write_file(out_dir / name, content);
    atomic_write_file(out_dir / "diagnose_report.json", report.dump(2) + "\n");
    if (!opts.quiet)
      std::cerr << "[diagnose] report -> "
                << (out_dir / "diagnose_report.json").string() << "\n";
  });
}

}  // namespace fedsim
