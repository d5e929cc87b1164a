#pragma once

// The round engine. One round of the attention-based algorithm:
//   1. sample participants,
//   2. build their pairwise similarity matrix,
//   3. threshold it at the p-quantile of all its entries,
//   4. replace each participant's model with the attention average of its
//      selected neighbors (the intermediate u_i),
//   5. take local gradient steps from u_i on the client's own data.
// The baselines reuse the same plumbing: fedavg averages into a shared global,
// fedamp skips the threshold (all positively-aligned clients aggregate), and
// local skips aggregation entirely. Non-participants are never touched, which
// is what makes trajectory-equivalence checks between variants exact.
//
// Round functions are templated over the client problem so the same engine
// runs both dataset shards and the analytic quadratic testbed used by the
// convergence diagnostics.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fedsim/core.hpp"
#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/schedules.hpp"
#include "fedsim/similarity.hpp"

namespace fedsim {

enum class Algorithm { fedacs, fedavg, fedamp, local };

inline Algorithm algorithm_from_string(const std::string& s) {
  if (s == "fedacs") return Algorithm::fedacs;
  if (s == "fedavg") return Algorithm::fedavg;
  if (s == "fedamp") return Algorithm::fedamp;
  if (s == "local") return Algorithm::local;
  throw ConfigError("unknown algorithm '" + s +
                    "' (want fedacs, fedavg, fedamp, or local)");
}

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::fedacs: return "fedacs";
    case Algorithm::fedavg: return "fedavg";
    case Algorithm::fedamp: return "fedamp";
    case Algorithm::local: return "local";
  }
  return "?";
}

struct AlgoConfig {
  Algorithm algorithm = Algorithm::fedacs;
  double lambda = 1.0;          // objective weight on the similarity regularizer
  double pick_ratio_p = 0.5;    // quantile for the selection threshold
  int rounds_K = 100;
  int local_steps = 1;          // 0 keeps the attention average as the model
  int batch_size = 0;           // 0 = full batch
  double participation_fraction = 1.0;
  ScheduleSpec alpha_schedule{};
  ScheduleSpec beta_schedule{};
  std::uint64_t seed = 0;

  void validate() const {
    require(lambda > 0.0, "AlgoConfig: lambda must be positive");
    require(pick_ratio_p >= 0.0 && pick_ratio_p <= 1.0,
            "AlgoConfig: pick_ratio_p must be in [0, 1]");
    require(rounds_K > 0, "AlgoConfig: rounds_K must be positive");
    require(local_steps >= 0, "AlgoConfig: local_steps must be >= 0");
    require(batch_size >= 0, "AlgoConfig: batch_size must be >= 0");
    require(participation_fraction > 0.0 && participation_fraction <= 1.0,
            "AlgoConfig: participation_fraction must be in (0, 1]");
  }
};

// Trajectory state after `round` rounds. models[i] is client i's personalized
// model; intermediates[i] is the aggregation result u_i it last trained from
// (equal to the init before any round). participants lists the clients that
// took part in the most recent round, sorted ascending.
struct FederatedState {
  int round = 0;
  std::vector<ParamVector> models;
  std::vector<ParamVector> intermediates;
  std::vector<int> participants;
};

inline FederatedState make_initial_state(int n_clients, const ParamVector& init) {
  require(n_clients > 0, "make_initial_state: n_clients must be positive");
  FederatedState st;
  st.round = 0;
  st.models.assign(n_clients, init);
  st.intermediates.assign(n_clients, init);
  st.participants.resize(n_clients);
  std::iota(st.participants.begin(), st.participants.end(), 0);
  return st;
}

// What one round reports besides the new state. delta is NaN for algorithms
// with no threshold; weights covers the round's participants (in participant
// order) and is empty for fedavg/local.
struct RoundOutcome {
  FederatedState state;
  double delta = std::numeric_limits<double>::quiet_NaN();
  AttentionWeights weights;
};

// ---------------------------------------------------------------------------
// Client problems.
// ---------------------------------------------------------------------------

template <typename P>
concept ClientProblem = requires(const P& p, const ParamVector& w,
                                 const std::vector<int>& rows) {
  { p.sample_count() } -> std::convertible_to<int>;
  { p.loss_on(w, rows) } -> std::convertible_to<double>;
  { p.gradient_on(w, rows) } -> std::convertible_to<ParamVector>;
  { p.full_loss(w) } -> std::convertible_to<double>;
  { p.full_gradient(w) } -> std::convertible_to<ParamVector>;
};

// Classification on a shard's train batch.
struct DatasetProblem {
  const ModelSpec* spec = nullptr;
  const Batch* train = nullptr;

  int sample_count() const { return train->size(); }
  double loss_on(const ParamVector& w, const std::vector<int>& rows) const {
    return forward_loss(*spec, w, *train, rows);
  }
  ParamVector gradient_on(const ParamVector& w, const std::vector<int>& rows) const {
    return gradient(*spec, w, *train, rows);
  }
  double full_loss(const ParamVector& w) const {
    return forward_loss(*spec, w, *train);
  }
  ParamVector full_gradient(const ParamVector& w) const {
    return gradient(*spec, w, *train);
  }
};

inline std::vector<DatasetProblem> make_problems(const std::vector<ClientShard>& shards,
                                                 const ModelSpec& spec) {
  std::vector<DatasetProblem> out;
  out.reserve(shards.size());
  for (const auto& s : shards) out.push_back({&spec, &s.train});
  return out;
}

// F_i(w) = 0.5 |w - c_i|^2, the analytic testbed for convergence checks.
struct QuadraticProblem {
  ParamVector center;

  int sample_count() const { return 1; }
  double loss_on(const ParamVector& w, const std::vector<int>&) const {
    return full_loss(w);
  }
  ParamVector gradient_on(const ParamVector& w, const std::vector<int>&) const {
    return full_gradient(w);
  }
  double full_loss(const ParamVector& w) const {
    return 0.5 * squared_distance(w, center);
  }
  ParamVector full_gradient(const ParamVector& w) const {
    return sub(w, center);
  }
};

// ---------------------------------------------------------------------------
// Participant sampling and the local update.
// ---------------------------------------------------------------------------

// max(1, round(fraction * n)) distinct clients, returned sorted. Partial
// Fisher-Yates so the draw consumes a bounded, size-independent amount of
// randomness per selected client.
inline std::vector<int> sample_participants(int n_clients, double fraction,
                                            std::mt19937_64& rng) {
  require(n_clients > 0, "sample_participants: n_clients must be positive");
  require(fraction > 0.0 && fraction <= 1.0,
          "sample_participants: fraction must be in (0, 1]");
  const int m = std::max(
      1, static_cast<int>(std::llround(fraction * static_cast<double>(n_clients))));
  std::vector<int> pool(n_clients);
  std::iota(pool.begin(), pool.end(), 0);
  for (int t = 0; t < m; ++t) {
    std::uniform_int_distribution<int> pick(t, n_clients - 1);
    std::swap(pool[t], pool[pick(rng)]);
  }
  pool.resize(m);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// local_steps gradient steps of size beta starting from the aggregate u.
// Full batch (batch_size 0 or >= shard size) iterates the rows in natural
// order and consumes no randomness; minibatches reshuffle once per epoch and
// walk the shuffled order without replacement, carrying the epoch position
// across steps. Every produced gradient and iterate must stay finite.
template <ClientProblem P>
ParamVector local_update(const P& problem, ParamVector u, double beta,
                         int local_steps, int batch_size, std::uint64_t batch_seed,
                         int round, int client_id) {
  require(local_steps >= 0, "local_update: local_steps must be >= 0");
  require(beta >= 0.0, "local_update: beta must be >= 0");
  const int m = problem.sample_count();
  require(m > 0, "local_update: client has no training samples");

  const bool full_batch = batch_size <= 0 || batch_size >= m;
  std::vector<int> order;
  std::mt19937_64 rng;
  std::size_t pos = 0;
  if (!full_batch) {
    order.resize(m);
    std::iota(order.begin(), order.end(), 0);
    rng = make_rng({batch_seed});
    std::shuffle(order.begin(), order.end(), rng);
  }

  ParamVector w = std::move(u);
  std::vector<int> rows;
  for (int step = 0; step < local_steps; ++step) {
    ParamVector g;
    if (full_batch) {
      g = problem.full_gradient(w);
    } else {
      if (pos >= order.size()) {  // epoch exhausted; reshuffle
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      const std::size_t take =
          std::min<std::size_t>(batch_size, order.size() - pos);
      rows.assign(order.begin() + pos, order.begin() + pos + take);
      pos += take;
      g = problem.gradient_on(w, rows);
    }
    if (!all_finite(g))
      throw DivergenceError("local_update: non-finite gradient at round " +
                                std::to_string(round) + ", client " +
                                std::to_string(client_id),
                            round, client_id);
    axpy(-beta, g, w);
    if (!all_finite(w))
      throw DivergenceError("local_update: non-finite parameters at round " +
                                std::to_string(round) + ", client " +
                                std::to_string(client_id),
                            round, client_id);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Rounds.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> round_participants(const FederatedState& state,
                                           const AlgoConfig& cfg, int n) {
  auto rng = make_rng({cfg.seed, static_cast<std::uint64_t>(Stream::participation),
                       static_cast<std::uint64_t>(state.round + 1)});
  return sample_participants(n, cfg.participation_fraction, rng);
}

inline std::uint64_t batch_seed_for(const AlgoConfig& cfg, int round, int client) {
  return mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::batch),
                   static_cast<std::uint64_t>(round),
                   static_cast<std::uint64_t>(client)});
}

// Shared body of the attention-based rounds. `forced_delta` NaN means "use
// the quantile of this round's similarity matrix" (fedacs); fedamp passes
// -inf so every positively-aligned participant stays a neighbor.
template <ClientProblem P>
RoundOutcome attention_round(const FederatedState& state, const AlgoConfig& cfg,
                             const std::vector<P>& problems, double beta_k,
                             double forced_delta) {
  const int n = static_cast<int>(state.models.size());
  require(static_cast<int>(problems.size()) == n,
          "attention_round: problems/models size mismatch");
  cfg.validate();
  const int k = state.round + 1;
  const auto participants = detail::round_participants(state, cfg, n);

  std::vector<ParamVector> part_models;
  part_models.reserve(participants.size());
  for (int id : participants) part_models.push_back(state.models[id]);

  SimilarityMatrix S;
  try {
    S = similarity_matrix(part_models);
  } catch (const DegenerateModelError& e) {
    // Local participant index -> global client id.
    const int id = e.client_id >= 0 ? participants[e.client_id] : e.client_id;
    throw DegenerateModelError("round " + std::to_string(k) +
                                   ": zero-norm model for client " +
                                   std::to_string(id),
                               id);
  }
  const double delta = std::isnan(forced_delta)
                           ? quantile_threshold(S, cfg.pick_ratio_p)
                           : forced_delta;
  auto [aggregates, weights] = attention_aggregate(part_models, S, delta);

  RoundOutcome out;
  out.state = state;
  out.state.round = k;
  out.state.participants = participants;
  out.delta = delta;
  out.weights = std::move(weights);
  for (std::size_t t = 0; t < participants.size(); ++t) {
    const int id = participants[t];
    out.state.intermediates[id] = aggregates[t];
    out.state.models[id] = local_update(
        problems[id], std::move(aggregates[t]), beta_k, cfg.local_steps,
        cfg.batch_size, detail::batch_seed_for(cfg, k, id), k, id);
  }
  return out;
}

}  // namespace detail

// One attention-selection round (threshold at the p-quantile).
template <ClientProblem P>
RoundOutcome fedacs_round(const FederatedState& state, const AlgoConfig& cfg,
                          const std::vector<P>& problems, double beta_k) {
  return detail::attention_round(state, cfg, problems, beta_k,
                                 std::numeric_limits<double>::quiet_NaN());
}

// Like fedacs_round but with a caller-chosen threshold instead of the
// quantile. Used by equivalence checks (delta >= 1 reduces to local training;
// delta = -inf reduces to the no-threshold variant).
template <ClientProblem P>
RoundOutcome fedacs_round_with_delta(const FederatedState& state,
                                     const AlgoConfig& cfg,
                                     const std::vector<P>& problems,
                                     double beta_k, double delta) {
  require(!std::isnan(delta), "fedacs_round_with_delta: delta must not be NaN");
  return detail::attention_round(state, cfg, problems, beta_k, delta);
}

// No-threshold attention variant: every participant with positive alignment
// aggregates. With local_steps = 0 the model simply becomes the aggregate.
template <ClientProblem P>
RoundOutcome fedamp_round(const FederatedState& state, const AlgoConfig& cfg,
                          const std::vector<P>& problems, double beta_k) {
  return detail::attention_round(state, cfg, problems, beta_k,
                                 -std::numeric_limits<double>::infinity());
}

// Sample-size-weighted global averaging. Participants train from the current
// global and the server averages their results into the next global, which
// only participants receive (cached-global semantics; non-participants keep
// whatever global they last saw, bitwise). The current global is read off any
// member of the previous round's participant set, all of whom hold it.
template <ClientProblem P>
RoundOutcome fedavg_round(const FederatedState& state, const AlgoConfig& cfg,
                          const std::vector<P>& problems, double beta_k) {
  const int n = static_cast<int>(state.models.size());
  require(static_cast<int>(problems.size()) == n,
          "fedavg_round: problems/models size mismatch");
  cfg.validate();
  require(!state.participants.empty(),
          "fedavg_round: state has no participant history");
  const int k = state.round + 1;
  const auto participants = detail::round_participants(state, cfg, n);
  const ParamVector& global = state.models[state.participants.front()];

  RoundOutcome out;
  out.state = state;
  out.state.round = k;
  out.state.participants = participants;

  double total = 0.0;
  for (int id : participants) total += problems[id].sample_count();
  ParamVector next_global(global.size(), 0.0);
  for (int id : participants) {
    ParamVector trained = local_update(
        problems[id], global, beta_k, cfg.local_steps, cfg.batch_size,
        detail::batch_seed_for(cfg, k, id), k, id);
    axpy(problems[id].sample_count() / total, trained, next_global);
  }
  for (int id : participants) {
    out.state.intermediates[id] = next_global;
    out.state.models[id] = next_global;
  }
  return out;
}

// Independent local training; aggregation never happens. Participants start
// each round from their own previous model.
template <ClientProblem P>
RoundOutcome local_round(const FederatedState& state, const AlgoConfig& cfg,
                         const std::vector<P>& problems, double beta_k) {
  const int n = static_cast<int>(state.models.size());
  require(static_cast<int>(problems.size()) == n,
          "local_round: problems/models size mismatch");
  cfg.validate();
  const int k = state.round + 1;
  const auto participants = detail::round_participants(state, cfg, n);

  RoundOutcome out;
  out.state = state;
  out.state.round = k;
  out.state.participants = participants;
  for (int id : participants) {
    out.state.intermediates[id] = state.models[id];
    out.state.models[id] = local_update(
        problems[id], state.models[id], beta_k, cfg.local_steps, cfg.batch_size,
        detail::batch_seed_for(cfg, k, id), k, id);
  }
  return out;
}

// Dispatch on cfg.algorithm.
template <ClientProblem P>
RoundOutcome run_round(const FederatedState& state, const AlgoConfig& cfg,
                       const std::vector<P>& problems, double beta_k) {
  switch (cfg.algorithm) {
    case Algorithm::fedacs: return fedacs_round(state, cfg, problems, beta_k);
    case Algorithm::fedavg: return fedavg_round(state, cfg, problems, beta_k);
    case Algorithm::fedamp: return fedamp_round(state, cfg, problems, beta_k);
    case Algorithm::local: return local_round(state, cfg, problems, beta_k);
  }
  throw ContractViolation("run_round: unknown algorithm");
}

}  // namespace fedsim
