#pragma once

// JSON experiment configs. Parsing is strict: unknown keys anywhere are
// ConfigError, so a typo like "lamda" fails loudly instead of silently
// running with the default. parse_config also round-trips: to_json emits the
// fully resolved config (all defaults filled in) for the run record.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/experiment.hpp"

namespace fedsim {

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed,
                       const std::string& block) {
  if (!j.is_object())
    throw ConfigError("config block '" + block + "' must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown key '" + key + "' in config block '" + block + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_required(const json& j, const std::string& key, const std::string& block) {
  if (!j.contains(key))
    throw ConfigError("missing required key '" + key + "' in config block '" +
                      block + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' in block '" + block +
                      "' has the wrong type");
  }
}

inline ScheduleSpec parse_schedule(const json& j, const std::string& block) {
  check_keys(j, {"kind", "a", "b", "value"}, block);
  ScheduleSpec s;
  s.kind = schedule_kind_from_string(get_required<std::string>(j, "kind", block));
  switch (s.kind) {
    case ScheduleKind::constant_theorem:
      if (j.contains("a") || j.contains("b") || j.contains("value"))
        throw ConfigError("schedule block '" + block +
                          "': constant_theorem takes no parameters");
      break;
    case ScheduleKind::diminishing:
      s.a = get_or<double>(j, "a", 1.0);
      s.b = get_or<double>(j, "b", 1.0);
      if (j.contains("value"))
        throw ConfigError("schedule block '" + block +
                          "': diminishing takes a and b, not value");
      break;
    case ScheduleKind::fixed:
      s.a = get_required<double>(j, "value", block);
      s.b = s.a;
      if (j.contains("a") || j.contains("b"))
        throw ConfigError("schedule block '" + block +
                          "': fixed takes value, not a/b");
      break;
  }
  return s;
}

inline json schedule_to_json(const ScheduleSpec& s) {
  json j;
  j["kind"] = to_string(s.kind);
  if (s.kind == ScheduleKind::diminishing) {
    j["a"] = s.a;
    j["b"] = s.b;
  } else if (s.kind == ScheduleKind::fixed) {
    j["value"] = s.a;
  }
  return j;
}

}  // namespace detail

// Diagnose protocol settings (cmd_diagnose only).
struct DiagnoseConfig {
  std::string problem = "quadratic";  // "quadratic" or "dataset"
  int n_clients = 10;
  int dim = 20;
  int n_clusters = 2;
  double radius = 5.0;
  double jitter = 0.0;
  std::vector<int> k_values{100, 400, 1600};
  int liminf_rounds = 0;  // 0 skips the diminishing-schedule run
  double liminf_a = 1.0;
  double liminf_b = 1.0;

  void validate() const {
    require(problem == "quadratic" || problem == "dataset",
            "DiagnoseConfig: problem must be 'quadratic' or 'dataset'");
    if (problem == "quadratic") {
      require(n_clients > 0, "DiagnoseConfig: n_clients must be positive");
      require(dim > 0, "DiagnoseConfig: dim must be positive");
      require(n_clusters > 0 && n_clusters <= n_clients,
              "DiagnoseConfig: n_clusters must be in [1, n_clients]");
      require(radius > 0.0, "DiagnoseConfig: radius must be positive");
      require(jitter >= 0.0, "DiagnoseConfig: jitter must be >= 0");
    }
    for (int k : k_values)
      require(k > 0, "DiagnoseConfig: k_values must be positive");
    require(liminf_rounds >= 0, "DiagnoseConfig: liminf_rounds must be >= 0");
    if (liminf_rounds > 0) {
      require(liminf_a > 0.0, "DiagnoseConfig: liminf_a must be positive");
      require(liminf_b >= 0.0, "DiagnoseConfig: liminf_b must be >= 0");
    }
  }
};

struct ParsedConfig {
  ExperimentConfig experiment;
  DiagnoseConfig diagnose;
  bool has_diagnose = false;
};

inline ParsedConfig parse_config_json(const json& root) {
  detail::check_keys(root,
                     {"name", "dataset", "partition", "model", "algo",
                      "diagnostics", "diagnose", "seeds", "output_dir"},
                     "top level");
  ParsedConfig parsed;
  ExperimentConfig& cfg = parsed.experiment;
  cfg.name = detail::get_or<std::string>(root, "name", "experiment");

  // dataset
  {
    if (!root.contains("dataset"))
      throw ConfigError("missing required config block 'dataset'");
    const json& d = root.at("dataset");
    const auto kind = detail::get_required<std::string>(d, "kind", "dataset");
    if (kind == "synthetic") {
      detail::check_keys(d,
                         {"kind", "n_clusters", "input_dim", "samples_per_cluster",
                          "separation", "noise_sigma", "seed"},
                         "dataset");
      cfg.dataset.kind = DatasetConfig::Kind::synthetic;
      cfg.dataset.n_clusters = detail::get_required<int>(d, "n_clusters", "dataset");
      cfg.dataset.input_dim = detail::get_required<int>(d, "input_dim", "dataset");
      cfg.dataset.samples_per_cluster =
          detail::get_required<int>(d, "samples_per_cluster", "dataset");
      cfg.dataset.separation = detail::get_or<double>(d, "separation", 5.0);
      cfg.dataset.noise_sigma = detail::get_or<double>(d, "noise_sigma", 1.0);
      cfg.dataset.seed = detail::get_or<std::uint64_t>(d, "seed", 0);
    } else if (kind == "idx") {
      detail::check_keys(d, {"kind", "images", "labels"}, "dataset");
      cfg.dataset.kind = DatasetConfig::Kind::idx;
      cfg.dataset.images_path = detail::get_required<std::string>(d, "images", "dataset");
      cfg.dataset.labels_path = detail::get_required<std::string>(d, "labels", "dataset");
    } else if (kind == "csv") {
      detail::check_keys(d, {"kind", "path", "has_header"}, "dataset");
      cfg.dataset.kind = DatasetConfig::Kind::csv;
      cfg.dataset.csv_path = detail::get_required<std::string>(d, "path", "dataset");
      cfg.dataset.has_header = detail::get_or<bool>(d, "has_header", false);
    } else {
      throw ConfigError("dataset.kind must be synthetic, idx, or csv (got '" +
                        kind + "')");
    }
  }

  // partition
  {
    if (!root.contains("partition"))
      throw ConfigError("missing required config block 'partition'");
    const json& p = root.at("partition");
    detail::check_keys(p,
                       {"scheme", "n_clients", "dirichlet_alpha",
                        "classes_per_client", "samples_per_client",
                        "test_fraction", "seed"},
                       "partition");
    const auto scheme = detail::get_required<std::string>(p, "scheme", "partition");
    if (scheme == "dirichlet")
      cfg.partition.scheme = PartitionScheme::dirichlet;
    else if (scheme == "pathological")
      cfg.partition.scheme = PartitionScheme::pathological;
    else
      throw ConfigError("partition.scheme must be dirichlet or pathological (got '" +
                        scheme + "')");
    cfg.partition.n_clients = detail::get_required<int>(p, "n_clients", "partition");
    cfg.partition.dirichlet_alpha = detail::get_or<double>(p, "dirichlet_alpha", 0.5);
    cfg.partition.classes_per_client = detail::get_or<int>(p, "classes_per_client", 2);
    cfg.partition.samples_per_client = detail::get_or<int>(p, "samples_per_client", 0);
    cfg.partition.test_fraction = detail::get_or<double>(p, "test_fraction", 0.2);
    cfg.partition.seed = detail::get_or<std::uint64_t>(p, "seed", 0);
  }

  // model
  {
    if (!root.contains("model"))
      throw ConfigError("missing required config block 'model'");
    const json& m = root.at("model");
    detail::check_keys(
        m, {"kind", "input_dim", "num_classes", "hidden_dim", "activation"},
        "model");
    const auto kind = detail::get_or<std::string>(m, "kind", "linear");
    if (kind == "linear")
      cfg.model.kind = ModelKind::linear;
    else if (kind == "mlp")
      cfg.model.kind = ModelKind::mlp;
    else
      throw ConfigError("model.kind must be linear or mlp (got '" + kind + "')");
    cfg.model.input_dim = detail::get_or<int>(m, "input_dim", 0);
    cfg.model.num_classes = detail::get_or<int>(m, "num_classes", 0);
    cfg.model.hidden_dim = detail::get_or<int>(m, "hidden_dim", 0);
    const auto act = detail::get_or<std::string>(m, "activation", "relu");
    if (act == "relu")
      cfg.model.activation = Activation::relu;
    else if (act == "tanh")
      cfg.model.activation = Activation::tanh;
    else
      throw ConfigError("model.activation must be relu or tanh (got '" + act + "')");
  }

  // algo
  {
    if (!root.contains("algo"))
      throw ConfigError("missing required config block 'algo'");
    const json& a = root.at("algo");
    detail::check_keys(a,
                       {"algorithm", "lambda", "pick_ratio_p", "rounds_K",
                        "local_steps", "batch_size", "participation_fraction",
                        "alpha_schedule", "beta_schedule", "seed"},
                       "algo");
    cfg.algo.algorithm =
        algorithm_from_string(detail::get_or<std::string>(a, "algorithm", "fedacs"));
    cfg.algo.lambda = detail::get_or<double>(a, "lambda", 1.0);
    cfg.algo.pick_ratio_p = detail::get_or<double>(a, "pick_ratio_p", 0.5);
    cfg.algo.rounds_K = detail::get_required<int>(a, "rounds_K", "algo");
    cfg.algo.local_steps = detail::get_or<int>(a, "local_steps", 1);
    cfg.algo.batch_size = detail::get_or<int>(a, "batch_size", 0);
    cfg.algo.participation_fraction =
        detail::get_or<double>(a, "participation_fraction", 1.0);
    if (a.contains("alpha_schedule"))
      cfg.algo.alpha_schedule = detail::parse_schedule(a.at("alpha_schedule"),
                                                       "algo.alpha_schedule");
    if (a.contains("beta_schedule"))
      cfg.algo.beta_schedule = detail::parse_schedule(a.at("beta_schedule"),
                                                      "algo.beta_schedule");
    cfg.algo.seed = detail::get_or<std::uint64_t>(a, "seed", 0);
  }

  cfg.diagnostics = detail::get_or<bool>(root, "diagnostics", false);
  if (root.contains("seeds")) {
    try {
      cfg.seeds = root.at("seeds").get<std::vector<std::uint64_t>>();
    } catch (const json::exception&) {
      throw ConfigError("config key 'seeds' must be an array of non-negative integers");
    }
  }
  cfg.output_dir = detail::get_or<std::string>(root, "output_dir", "out");

  if (root.contains("diagnose")) {
    const json& g = root.at("diagnose");
    detail::check_keys(g,
                       {"problem", "n_clients", "dim", "n_clusters", "radius",
                        "jitter", "k_values", "liminf_rounds", "liminf_a",
                        "liminf_b"},
                       "diagnose");
    parsed.diagnose.problem = detail::get_or<std::string>(g, "problem", "quadratic");
    parsed.diagnose.n_clients = detail::get_or<int>(g, "n_clients", 10);
    parsed.diagnose.dim = detail::get_or<int>(g, "dim", 20);
    parsed.diagnose.n_clusters = detail::get_or<int>(g, "n_clusters", 2);
    parsed.diagnose.radius = detail::get_or<double>(g, "radius", 5.0);
    parsed.diagnose.jitter = detail::get_or<double>(g, "jitter", 0.0);
    parsed.diagnose.k_values =
        detail::get_or<std::vector<int>>(g, "k_values", {100, 400, 1600});
    parsed.diagnose.liminf_rounds = detail::get_or<int>(g, "liminf_rounds", 0);
    parsed.diagnose.liminf_a = detail::get_or<double>(g, "liminf_a", 1.0);
    parsed.diagnose.liminf_b = detail::get_or<double>(g, "liminf_b", 1.0);
    parsed.diagnose.validate();
    parsed.has_diagnose = true;
  }

  cfg.validate();
  return parsed;
}

inline ParsedConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + path.string() + ": " + e.what());
  }
  return parse_config_json(root);
}

// Fully resolved config, written next to the run outputs.
inline json to_json(const ParsedConfig& parsed) {
  const ExperimentConfig& cfg = parsed.experiment;
  json root;
  root["name"] = cfg.name;
  json d;
  switch (cfg.dataset.kind) {
    case DatasetConfig::Kind::synthetic:
      d["kind"] = "synthetic";
      d["n_clusters"] = cfg.dataset.n_clusters;
      d["input_dim"] = cfg.dataset.input_dim;
      d["samples_per_cluster"] = cfg.dataset.samples_per_cluster;
      d["separation"] = cfg.dataset.separation;
      d["noise_sigma"] = cfg.dataset.noise_sigma;
      d["seed"] = cfg.dataset.seed;
      break;
    case DatasetConfig::Kind::idx:
      d["kind"] = "idx";
      d["images"] = cfg.dataset.images_path;
      d["labels"] = cfg.dataset.labels_path;
      break;
    case DatasetConfig::Kind::csv:
      d["kind"] = "csv";
      d["path"] = cfg.dataset.csv_path;
      d["has_header"] = cfg.dataset.has_header;
      break;
  }
  root["dataset"] = d;
  json p;
  p["scheme"] = cfg.partition.scheme == PartitionScheme::dirichlet ? "dirichlet"
                                                                   : "pathological";
  p["n_clients"] = cfg.partition.n_clients;
  if (cfg.partition.scheme == PartitionScheme::dirichlet)
    p["dirichlet_alpha"] = cfg.partition.dirichlet_alpha;
  else
    p["classes_per_client"] = cfg.partition.classes_per_client;
  p["samples_per_client"] = cfg.partition.samples_per_client;
  p["test_fraction"] = cfg.partition.test_fraction;
  p["seed"] = cfg.partition.seed;
  root["partition"] = p;
  json m;
  m["kind"] = cfg.model.kind == ModelKind::linear ? "linear" : "mlp";
  m["input_dim"] = cfg.model.input_dim;
  m["num_classes"] = cfg.model.num_classes;
  if (cfg.model.kind == ModelKind::mlp) {
    m["hidden_dim"] = cfg.model.hidden_dim;
    m["activation"] = cfg.model.activation == Activation::relu ? "relu" : "tanh";
  }
  root["model"] = m;
  json a;
  a["algorithm"] = to_string(cfg.algo.algorithm);
  a["lambda"] = cfg.algo.lambda;
  a["pick_ratio_p"] = cfg.algo.pick_ratio_p;
  a["rounds_K"] = cfg.algo.rounds_K;
  a["local_steps"] = cfg.algo.local_steps;
  a["batch_size"] = cfg.algo.batch_size;
  a["participation_fraction"] = cfg.algo.participation_fraction;
  a["alpha_schedule"] = detail::schedule_to_json(cfg.algo.alpha_schedule);
  a["beta_schedule"] = detail::schedule_to_json(cfg.algo.beta_schedule);
  a["seed"] = cfg.algo.seed;
  root["algo"] = a;
  root["diagnostics"] = cfg.diagnostics;
  root["seeds"] = cfg.seeds;
  root["output_dir"] = cfg.output_dir;
  if (parsed.has_diagnose) {
    const DiagnoseConfig& g = parsed.diagnose;
    json dg;
    dg["problem"] = g.problem;
    if (g.problem == "quadratic") {
      dg["n_clients"] = g.n_clients;
      dg["dim"] = g.dim;
      dg["n_clusters"] = g.n_clusters;
      dg["radius"] = g.radius;
      dg["jitter"] = g.jitter;
    }
    dg["k_values"] = g.k_values;
    dg["liminf_rounds"] = g.liminf_rounds;
    if (g.liminf_rounds > 0) {
      dg["liminf_a"] = g.liminf_a;
      dg["liminf_b"] = g.liminf_b;
    }
    root["diagnose"] = dg;
  }
  return root;
}

}  // namespace fedsim
