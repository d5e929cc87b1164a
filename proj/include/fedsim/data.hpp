#pragma once

// Dataset generation and client partitioning. Heterogeneity across clients is
// produced two ways: Dirichlet-distributed per-class shares (smoothly skewed)
// and pathological class claims (each client sees only a few classes). Both
// partitioners conserve samples exactly and split each client's shard into
// train/test before optional scarcity subsampling of the train side.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fedsim/core.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct LabeledDataset {
  std::vector<double> features;  // row-major size() x input_dim
  std::vector<int> labels;
  int input_dim = 0;
  int num_classes = 0;

  int size() const { return static_cast<int>(labels.size()); }

  const double* row(int r) const {
    return features.data() + static_cast<std::size_t>(r) * input_dim;
  }

  void validate() const {
    require(input_dim > 0, "LabeledDataset: input_dim must be positive");
    require(num_classes >= 2, "LabeledDataset: num_classes must be at least 2");
    require(features.size() == labels.size() * static_cast<std::size_t>(input_dim),
            "LabeledDataset: features size does not match labels * input_dim");
    for (std::size_t i = 0; i < labels.size(); ++i)
      require(labels[i] >= 0 && labels[i] < num_classes,
              "LabeledDataset: label out of range at row " + std::to_string(i));
  }
};

struct ClientShard {
  int client_id = 0;
  Batch train;
  Batch test;
};

enum class PartitionScheme { dirichlet, pathological };

struct PartitionConfig {
  PartitionScheme scheme = PartitionScheme::dirichlet;
  int n_clients = 0;
  double dirichlet_alpha = 0.5;  // dirichlet only
  int classes_per_client = 2;    // pathological only
  int samples_per_client = 0;    // train rows kept per client; 0 keeps all
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    require(n_clients > 0, "PartitionConfig: n_clients must be positive");
    require(test_fraction > 0.0 && test_fraction < 1.0,
            "PartitionConfig: test_fraction must be in (0, 1)");
    require(samples_per_client >= 0,
            "PartitionConfig: samples_per_client must be non-negative");
    if (scheme == PartitionScheme::dirichlet)
      require(dirichlet_alpha > 0.0,
              "PartitionConfig: dirichlet_alpha must be positive");
    else
      require(classes_per_client > 0,
              "PartitionConfig: classes_per_client must be positive");
  }
};

// ---------------------------------------------------------------------------
// Synthetic clustered data: Gaussian blobs, label = cluster id.
// ---------------------------------------------------------------------------

namespace detail {

// Cluster directions: orthonormalized Gaussian draws when they fit in the
// ambient dimension (then inter-center distance is separation * sqrt(2)),
// otherwise unit vectors redrawn until no pair is nearly parallel.
inline std::vector<ParamVector> cluster_directions(int n_clusters, int dim,
                                                   std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ParamVector> dirs;
  dirs.reserve(n_clusters);
  const bool orthogonalize = n_clusters <= dim;
  for (int k = 0; k < n_clusters; ++k) {
    for (int attempt = 0; attempt < 256; ++attempt) {
      ParamVector v(dim);
      for (double& x : v) x = g(rng);
      if (orthogonalize)
        for (const auto& u : dirs) axpy(-dot(v, u), u, v);
      const double nv = norm(v);
      if (nv < 1e-8) continue;
      for (double& x : v) x /= nv;
      bool ok = true;
      if (!orthogonalize)
        for (const auto& u : dirs)
          if (std::abs(dot(v, u)) > 0.9) { ok = false; break; }
      if (!ok) continue;
      dirs.push_back(std::move(v));
      break;
    }
    require(static_cast<int>(dirs.size()) == k + 1,
            "make_synthetic_clusters: could not place distinct cluster centers");
  }
  return dirs;
}

}  // namespace detail

// samples_per_cluster points per cluster at separation * direction_k plus
// isotropic noise_sigma noise. Rows are cluster-major and deterministic in
// the seed; partitioners do their own shuffling.
inline LabeledDataset make_synthetic_clusters(int n_clusters, int input_dim,
                                              int samples_per_cluster,
                                              double separation,
                                              double noise_sigma,
                                              std::uint64_t seed) {
  require(n_clusters >= 2, "make_synthetic_clusters: need at least 2 clusters");
  require(input_dim > 0, "make_synthetic_clusters: input_dim must be positive");
  require(samples_per_cluster > 0,
          "make_synthetic_clusters: samples_per_cluster must be positive");
  require(separation > 0.0, "make_synthetic_clusters: separation must be positive");
  require(noise_sigma >= 0.0, "make_synthetic_clusters: noise_sigma must be >= 0");

  auto rng = make_rng({seed, static_cast<std::uint64_t>(Stream::data)});
  const auto dirs = detail::cluster_directions(n_clusters, input_dim, rng);

  LabeledDataset ds;
  ds.input_dim = input_dim;
  ds.num_classes = n_clusters;
  const int total = n_clusters * samples_per_cluster;
  ds.features.resize(static_cast<std::size_t>(total) * input_dim);
  ds.labels.resize(total);
  std::normal_distribution<double> g(0.0, 1.0);
  int row = 0;
  for (int k = 0; k < n_clusters; ++k) {
    for (int s = 0; s < samples_per_cluster; ++s, ++row) {
      double* x = ds.features.data() + static_cast<std::size_t>(row) * input_dim;
      for (int j = 0; j < input_dim; ++j)
        x[j] = separation * dirs[k][j] + noise_sigma * g(rng);
      ds.labels[row] = k;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Partitioning. The index-level functions return per-client row indices so
// conservation can be checked exactly; shard assembly copies feature rows.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::vector<int>> class_indices(const LabeledDataset& ds) {
  std::vector<std::vector<int>> by_class(ds.num_classes);
  for (int r = 0; r < ds.size(); ++r) by_class[ds.labels[r]].push_back(r);
  return by_class;
}

// Largest-remainder rounding of proportions * total; counts sum to total.
inline std::vector<int> apportion(const std::vector<double>& props, int total) {
  const int n = static_cast<int>(props.size());
  std::vector<int> counts(n);
  std::vector<std::pair<double, int>> rema(n);
  int assigned = 0;
  for (int i = 0; i < n; ++i) {
    const double exact = props[i] * total;
    counts[i] = static_cast<int>(std::floor(exact));
    rema[i] = {exact - counts[i], i};
    assigned += counts[i];
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;  // deterministic tie-break
  });
  for (int k = 0; k < total - assigned; ++k) counts[rema[k].second] += 1;
  return counts;
}

// Minimum shard size that leaves enough train rows after the test split.
inline int test_size_for(int shard_size, double test_fraction) {
  int t = static_cast<int>(std::llround(test_fraction * shard_size));
  return std::max(1, std::min(t, shard_size - 1));
}

inline bool shard_sizes_feasible(const std::vector<std::vector<int>>& assignment,
                                 const PartitionConfig& cfg) {
  for (const auto& rows : assignment) {
    const int n = static_cast<int>(rows.size());
    if (n < 2) return false;  // need at least one train and one test row
    const int train = n - test_size_for(n, cfg.test_fraction);
    const int need = cfg.samples_per_client > 0 ? cfg.samples_per_client : 1;
    if (train < need) return false;
  }
  return true;
}

}  // namespace detail

// Per-class Dirichlet(alpha) shares decide how each class's rows spread over
// clients. Draws that leave some client without a viable shard (fewer than 2
// rows, or not enough train rows to satisfy samples_per_client after the test
// split) are redrawn up to 100 times before giving up.
inline std::vector<std::vector<int>> dirichlet_partition_indices(
    const LabeledDataset& ds, const PartitionConfig& cfg) {
  ds.validate();
  cfg.validate();
  require(cfg.scheme == PartitionScheme::dirichlet,
          "dirichlet_partition_indices: config scheme mismatch");
  const auto by_class = detail::class_indices(ds);
  auto rng = make_rng({cfg.seed, static_cast<std::uint64_t>(Stream::partition)});
  std::gamma_distribution<double> gamma(cfg.dirichlet_alpha, 1.0);

  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<int>> assignment(cfg.n_clients);
    for (int c = 0; c < ds.num_classes; ++c) {
      std::vector<double> props(cfg.n_clients);
      double sum = 0.0;
      for (double& p : props) {
        p = gamma(rng);
        sum += p;
      }
      // A run of all-zero gamma draws (possible for tiny alpha) has no
      // direction; fall back to uniform for this class.
      if (sum <= 0.0) {
        std::fill(props.begin(), props.end(), 1.0 / cfg.n_clients);
      } else {
        for (double& p : props) p /= sum;
      }
      auto rows = by_class[c];
      std::shuffle(rows.begin(), rows.end(), rng);
      const auto counts = detail::apportion(props, static_cast<int>(rows.size()));
      int offset = 0;
      for (int i = 0; i < cfg.n_clients; ++i) {
        assignment[i].insert(assignment[i].end(), rows.begin() + offset,
                             rows.begin() + offset + counts[i]);
        offset += counts[i];
      }
    }
    if (detail::shard_sizes_feasible(assignment, cfg)) return assignment;
  }
  throw PartitionError(
      "dirichlet partition: no feasible assignment after " +
      std::to_string(kMaxAttempts) +
      " draws (every client needs >= 2 rows and enough train rows; lower "
      "n_clients, samples_per_client, or raise dataset size / alpha)");
}

// Client i claims classes {(i * classes_per_client + t) mod C}; each class's
// rows are split evenly among its claimants. Infeasible setups fail
// immediately since redrawing cannot change the share sizes.
inline std::vector<std::vector<int>> pathological_partition_indices(
    const LabeledDataset& ds, const PartitionConfig& cfg) {
  ds.validate();
  cfg.validate();
  require(cfg.scheme == PartitionScheme::pathological,
          "pathological_partition_indices: config scheme mismatch");
  const int C = ds.num_classes;
  require(cfg.classes_per_client <= C,
          "pathological partition: classes_per_client exceeds num_classes");
  const auto by_class = detail::class_indices(ds);
  auto rng = make_rng({cfg.seed, static_cast<std::uint64_t>(Stream::partition)});

  std::vector<std::vector<int>> claimants(C);
  for (int i = 0; i < cfg.n_clients; ++i)
    for (int t = 0; t < cfg.classes_per_client; ++t)
      claimants[(static_cast<long long>(i) * cfg.classes_per_client + t) % C]
          .push_back(i);

  std::vector<std::vector<int>> assignment(cfg.n_clients);
  for (int c = 0; c < C; ++c) {
    if (claimants[c].empty()) continue;
    auto rows = by_class[c];
    std::shuffle(rows.begin(), rows.end(), rng);
    const int m = static_cast<int>(claimants[c].size());
    const int base = static_cast<int>(rows.size()) / m;
    const int extra = static_cast<int>(rows.size()) % m;
    int offset = 0;
    for (int t = 0; t < m; ++t) {
      const int take = base + (t < extra ? 1 : 0);
      auto& dst = assignment[claimants[c][t]];
      dst.insert(dst.end(), rows.begin() + offset, rows.begin() + offset + take);
      offset += take;
    }
  }
  if (!detail::shard_sizes_feasible(assignment, cfg))
    throw PartitionError(
        "pathological partition: some client ends up without a viable shard "
        "(needs >= 2 rows and enough train rows after the test split)");
  return assignment;
}

namespace detail {

inline Batch gather_batch(const LabeledDataset& ds, const std::vector<int>& rows) {
  Batch b;
  b.input_dim = ds.input_dim;
  b.labels.reserve(rows.size());
  b.features.reserve(rows.size() * static_cast<std::size_t>(ds.input_dim));
  for (int r : rows) {
    const double* x = ds.row(r);
    b.features.insert(b.features.end(), x, x + ds.input_dim);
    b.labels.push_back(ds.labels[r]);
  }
  return b;
}

}  // namespace detail

// Keep exactly m train rows, chosen without replacement. Distinct seeds give
// independent subsets, which is what drives the scarcity experiments.
inline Batch subsample_batch(const Batch& b, int m, std::uint64_t seed) {
  require(m > 0, "subsample_batch: m must be positive");
  require(m <= b.size(), "subsample_batch: m exceeds batch size");
  std::vector<int> rows(b.size());
  std::iota(rows.begin(), rows.end(), 0);
  auto rng = make_rng({seed, static_cast<std::uint64_t>(Stream::subsample)});
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(m);
  std::sort(rows.begin(), rows.end());  // keep original row order
  Batch out;
  out.input_dim = b.input_dim;
  out.labels.reserve(m);
  out.features.reserve(static_cast<std::size_t>(m) * b.input_dim);
  for (int r : rows) {
    const double* x = b.row(r);
    out.features.insert(out.features.end(), x, x + b.input_dim);
    out.labels.push_back(b.labels[r]);
  }
  return out;
}

inline void subsample_train(ClientShard& shard, int m, std::uint64_t seed) {
  shard.train = subsample_batch(shard.train, m,
                                mix_seed({seed, static_cast<std::uint64_t>(shard.client_id)}));
}

// Index assignment -> shards: shuffle each client's rows, carve off the test
// split, then apply scarcity subsampling to the train side if requested.
inline std::vector<ClientShard> assemble_shards(
    const LabeledDataset& ds, const std::vector<std::vector<int>>& assignment,
    const PartitionConfig& cfg) {
  // Salted separately from the assignment stream so split shuffles never
  // replay the partition draw.
  auto rng = make_rng({cfg.seed, static_cast<std::uint64_t>(Stream::partition),
                       0x517ULL});
  std::vector<ClientShard> shards(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    auto rows = assignment[i];
    std::shuffle(rows.begin(), rows.end(), rng);
    const int t = detail::test_size_for(static_cast<int>(rows.size()),
                                        cfg.test_fraction);
    std::vector<int> test_rows(rows.begin(), rows.begin() + t);
    std::vector<int> train_rows(rows.begin() + t, rows.end());
    shards[i].client_id = static_cast<int>(i);
    shards[i].train = detail::gather_batch(ds, train_rows);
    shards[i].test = detail::gather_batch(ds, test_rows);
    if (cfg.samples_per_client > 0 &&
        shards[i].train.size() > cfg.samples_per_client)
      subsample_train(shards[i], cfg.samples_per_client, cfg.seed);
  }
  return shards;
}

inline std::vector<ClientShard> partition_dirichlet(const LabeledDataset& ds,
                                                    const PartitionConfig& cfg) {
  return assemble_shards(ds, dirichlet_partition_indices(ds, cfg), cfg);
}

inline std::vector<ClientShard> partition_pathological(const LabeledDataset& ds,
                                                       const PartitionConfig& cfg) {
  return assemble_shards(ds, pathological_partition_indices(ds, cfg), cfg);
}

inline std::vector<ClientShard> partition_dataset(const LabeledDataset& ds,
                                                  const PartitionConfig& cfg) {
  cfg.validate();
  return cfg.scheme == PartitionScheme::dirichlet ? partition_dirichlet(ds, cfg)
                                                  : partition_pathological(ds, cfg);
}

}  // namespace fedsim
