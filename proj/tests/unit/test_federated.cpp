#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "fedsim/federated.hpp"

using namespace fedsim;

namespace {

// Instrumented problem for batching checks: records the row subsets each
// gradient call receives. Gradient is zero so iterates never move.
struct RecordingProblem {
  int n = 0;
  mutable std::vector<std::vector<int>> calls;

  int sample_count() const { return n; }
  double loss_on(const ParamVector&, const std::vector<int>&) const { return 0.0; }
  ParamVector gradient_on(const ParamVector& w, const std::vector<int>& rows) const {
    calls.push_back(rows);
    return ParamVector(w.size(), 0.0);
  }
  double full_loss(const ParamVector&) const { return 0.0; }
  ParamVector full_gradient(const ParamVector& w) const {
    calls.push_back({});
    return ParamVector(w.size(), 0.0);
  }
};

std::vector<QuadraticProblem> quadratic_problems(
    const std::vector<ParamVector>& centers) {
  std::vector<QuadraticProblem> ps;
  for (const auto& c : centers) ps.push_back({c});
  return ps;
}

std::vector<ParamVector> random_centers(int n, int d, std::uint64_t seed) {
  auto rng = make_rng({seed});
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ParamVector> cs(n, ParamVector(d));
  for (auto& c : cs)
    for (auto& v : c) v = g(rng);
  return cs;
}

AlgoConfig basic_config(Algorithm algo) {
  AlgoConfig cfg;
  cfg.algorithm = algo;
  cfg.rounds_K = 10;
  cfg.local_steps = 1;
  cfg.seed = 77;
  return cfg;
}

}  // namespace

TEST_CASE("sample_participants: size, distinctness, order, determinism") {
  auto rng1 = make_rng({1, 2});
  const auto all = sample_participants(10, 1.0, rng1);
  std::vector<int> want(10);
  std::iota(want.begin(), want.end(), 0);
  CHECK(all == want);

  auto rng2 = make_rng({1, 3});
  const auto some = sample_participants(10, 0.3, rng2);
  REQUIRE(some.size() == 3);
  CHECK(std::is_sorted(some.begin(), some.end()));
  CHECK(std::set<int>(some.begin(), some.end()).size() == 3);
  for (int id : some) CHECK((id >= 0 && id < 10));

  auto rng3 = make_rng({1, 3});
  CHECK(sample_participants(10, 0.3, rng3) == some);

  auto rng4 = make_rng({1, 4});
  CHECK(sample_participants(7, 0.01, rng4).size() == 1);  // max(1, ...)

  auto rng5 = make_rng({1});
  CHECK_THROWS_AS(sample_participants(0, 1.0, rng5), ContractViolation);
  CHECK_THROWS_AS(sample_participants(5, 0.0, rng5), ContractViolation);
}

TEST_CASE("local_update: one full-batch step is the literal gradient step") {
  QuadraticProblem prob{{1.0, 2.0, 3.0}};
  const ParamVector u{0.0, 0.0, 0.0};
  const double beta = 0.25;
  const auto w = local_update(prob, u, beta, 1, 0, 0, 1, 0);
  for (int j = 0; j < 3; ++j)
    CHECK(w[j] == Catch::Approx(u[j] - beta * (u[j] - prob.center[j])));
}

TEST_CASE("local_update: beta = 0 and local_steps = 0 leave the input bitwise") {
  QuadraticProblem prob{{5.0, -5.0}};
  const ParamVector u{1.25, -0.75};
  CHECK(local_update(prob, u, 0.0, 3, 0, 0, 1, 0) == u);
  CHECK(local_update(prob, u, 0.5, 0, 0, 0, 1, 0) == u);
}

TEST_CASE("local_update: minibatches cover each epoch without replacement") {
  RecordingProblem prob;
  prob.n = 7;
  const ParamVector u(2, 0.0);
  // 6 steps of batch 3 over 7 rows: epochs are (3, 3, 1), so 6 steps span
  // exactly two full epochs.
  local_update(prob, u, 0.1, 6, 3, 123, 1, 0);
  REQUIRE(prob.calls.size() == 6);
  CHECK(prob.calls[0].size() == 3);
  CHECK(prob.calls[1].size() == 3);
  CHECK(prob.calls[2].size() == 1);
  for (int epoch = 0; epoch < 2; ++epoch) {
    std::vector<int> seen;
    for (int s = 0; s < 3; ++s)
      for (int r : prob.calls[epoch * 3 + s]) seen.push_back(r);
    std::sort(seen.begin(), seen.end());
    CHECK(seen == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  }
}

TEST_CASE("local_update: batch order is deterministic in the seed") {
  RecordingProblem a, b, c;
  a.n = b.n = c.n = 10;
  const ParamVector u(2, 0.0);
  local_update(a, u, 0.1, 4, 3, 55, 1, 0);
  local_update(b, u, 0.1, 4, 3, 55, 1, 0);
  local_update(c, u, 0.1, 4, 3, 56, 1, 0);
  CHECK(a.calls == b.calls);
  CHECK(a.calls != c.calls);
}

TEST_CASE("local_update flags divergence with round and client context") {
  // Quadratic with a absurd step size oscillates with exploding amplitude
  // until the iterate overflows to inf.
  QuadraticProblem prob{{1.0, 1.0}};
  const ParamVector u{100.0, 100.0};
  try {
    local_update(prob, u, 1e12, 100, 0, 0, 7, 3);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    CHECK(e.round == 7);
    CHECK(e.client_id == 3);
  }
}

TEST_CASE("fedacs symmetry: identical shards and init keep all models equal") {
  // All clients share the same center and the same starting point; full-batch
  // updates are symmetric, so the models must stay bitwise equal forever.
  const int n = 6, d = 5;
  std::vector<ParamVector> centers(n, ParamVector(d, 2.0));
  const auto problems = quadratic_problems(centers);
  ParamVector init(d, 1.0);
  init[0] = -3.0;
  auto cfg = basic_config(Algorithm::fedacs);
  auto state = make_initial_state(n, init);
  for (int k = 1; k <= 20; ++k) {
    state = fedacs_round(state, cfg, problems, 0.3).state;
    for (int i = 1; i < n; ++i) CHECK(state.models[i] == state.models[0]);
  }
}

TEST_CASE("fedacs with p = 1 is trajectory-identical to local training") {
  // p = 1 puts the threshold at the matrix maximum (the unit diagonal), so
  // no other client ever passes the strict comparison: every aggregate is the
  // client's own model and the rounds collapse to independent local SGD.
  const int n = 8, d = 4;
  const auto problems = quadratic_problems(random_centers(n, d, 5));
  auto cfg_acs = basic_config(Algorithm::fedacs);
  cfg_acs.pick_ratio_p = 1.0;
  cfg_acs.batch_size = 0;
  auto cfg_local = cfg_acs;
  cfg_local.algorithm = Algorithm::local;

  ParamVector init(d, 0.5);
  auto sa = make_initial_state(n, init);
  auto sl = make_initial_state(n, init);
  for (int k = 1; k <= 30; ++k) {
    sa = fedacs_round(sa, cfg_acs, problems, 0.2).state;
    sl = local_round(sl, cfg_local, problems, 0.2).state;
    CHECK(sa.models == sl.models);  // bitwise
    CHECK(sa.participants == sl.participants);
  }
}

TEST_CASE("fedacs with a forced threshold >= 1 matches local training too") {
  const int n = 5, d = 3;
  const auto problems = quadratic_problems(random_centers(n, d, 6));
  auto cfg = basic_config(Algorithm::fedacs);
  ParamVector init(d, 1.0);
  auto sa = make_initial_state(n, init);
  auto sl = make_initial_state(n, init);
  for (int k = 1; k <= 10; ++k) {
    sa = fedacs_round_with_delta(sa, cfg, problems, 0.1, 1.0).state;
    sl = local_round(sl, cfg, problems, 0.1).state;
    CHECK(sa.models == sl.models);
  }
}

TEST_CASE("fedacs with delta = -inf is trajectory-identical to fedamp") {
  const int n = 7, d = 4;
  const auto problems = quadratic_problems(random_centers(n, d, 7));
  auto cfg = basic_config(Algorithm::fedacs);
  ParamVector init(d, 0.7);
  auto sa = make_initial_state(n, init);
  auto sm = make_initial_state(n, init);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= 25; ++k) {
    sa = fedacs_round_with_delta(sa, cfg, problems, 0.15, neg_inf).state;
    sm = fedamp_round(sm, cfg, problems, 0.15).state;
    CHECK(sa.models == sm.models);
    CHECK(sa.intermediates == sm.intermediates);
  }
}

TEST_CASE("fedamp with zero local steps keeps models equal to aggregates") {
  const int n = 5, d = 4;
  const auto problems = quadratic_problems(random_centers(n, d, 8));
  auto cfg = basic_config(Algorithm::fedamp);
  cfg.local_steps = 0;
  auto state = make_initial_state(n, ParamVector(d, 1.0));
  // move the models apart first so aggregation is non-trivial
  state = local_round(state, basic_config(Algorithm::local), problems, 0.5).state;
  const auto out = fedamp_round(state, cfg, problems, 0.5);
  CHECK(out.state.models == out.state.intermediates);
}

TEST_CASE("fedacs round reports the quantile threshold and attention weights") {
  const int n = 6, d = 5;
  const auto problems = quadratic_problems(random_centers(n, d, 9));
  auto cfg = basic_config(Algorithm::fedacs);
  cfg.pick_ratio_p = 0.5;
  auto state = make_initial_state(n, ParamVector(d, 1.0));
  state = local_round(state, basic_config(Algorithm::local), problems, 0.5).state;

  const auto S = similarity_matrix(state.models);
  const auto out = fedacs_round(state, cfg, problems, 0.2);
  CHECK(out.delta == quantile_threshold(S, 0.5));
  REQUIRE(out.weights.n == n);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += out.weights.at(i, j);
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }
  CHECK(out.state.round == state.round + 1);
}

TEST_CASE("non-participants are bitwise unchanged under every algorithm") {
  const int n = 10, d = 4;
  const auto problems = quadratic_problems(random_centers(n, d, 10));
  for (Algorithm algo : {Algorithm::fedacs, Algorithm::fedavg, Algorithm::fedamp,
                         Algorithm::local}) {
    auto cfg = basic_config(algo);
    cfg.participation_fraction = 0.4;
    auto state = make_initial_state(n, ParamVector(d, 0.9));
    for (int k = 1; k <= 5; ++k) {
      const auto before = state;
      state = run_round(state, cfg, problems, 0.2).state;
      REQUIRE(state.participants.size() == 4);
      for (int i = 0; i < n; ++i) {
        if (std::find(state.participants.begin(), state.participants.end(), i) !=
            state.participants.end())
          continue;
        CHECK(state.models[i] == before.models[i]);
        CHECK(state.intermediates[i] == before.intermediates[i]);
      }
    }
  }
}

TEST_CASE("fedavg with one client reduces to plain gradient descent") {
  const std::vector<QuadraticProblem> problems{{{3.0, -1.0}}};
  const auto& prob = problems[0];
  auto cfg = basic_config(Algorithm::fedavg);
  cfg.local_steps = 1;
  auto state = make_initial_state(1, ParamVector{0.0, 0.0});
  ParamVector w{0.0, 0.0};
  const double beta = 0.3;
  for (int k = 1; k <= 15; ++k) {
    state = fedavg_round(state, cfg, problems, beta).state;
    axpy(-beta, sub(w, prob.center), w);
    CHECK(state.models[0][0] == Catch::Approx(w[0]).epsilon(1e-15));
    CHECK(state.models[0][1] == Catch::Approx(w[1]).epsilon(1e-15));
  }
}

TEST_CASE("fedavg with beta = 0 and equal shards leaves the global unchanged") {
  const int n = 2;
  std::vector<QuadraticProblem> problems{{{1.0, 2.0, 3.0}}, {{1.0, 2.0, 3.0}}};
  auto cfg = basic_config(Algorithm::fedavg);
  auto state = make_initial_state(n, ParamVector{0.5, 0.25, -1.0});
  const auto before = state.models[0];
  state = fedavg_round(state, cfg, problems, 0.0).state;
  CHECK(state.models[0] == before);  // 0.5 + 0.5 weights are exact
  CHECK(state.models[1] == before);
}

TEST_CASE("fedavg weights client contributions by sample count") {
  // Two recording problems with different sizes and *constant* gradients so
  // the average is easy to predict: client updates differ only through their
  // gradients here, both start from the same global.
  struct ConstGradProblem {
    int n;
    ParamVector grad;
    int sample_count() const { return n; }
    double loss_on(const ParamVector&, const std::vector<int>&) const { return 0.0; }
    ParamVector gradient_on(const ParamVector&, const std::vector<int>&) const {
      return grad;
    }
    double full_loss(const ParamVector&) const { return 0.0; }
    ParamVector full_gradient(const ParamVector&) const { return grad; }
  };
  std::vector<ConstGradProblem> problems{{30, {1.0, 0.0}}, {10, {0.0, 1.0}}};
  auto cfg = basic_config(Algorithm::fedavg);
  auto state = make_initial_state(2, ParamVector{0.0, 0.0});
  state = fedavg_round(state, cfg, problems, 1.0).state;
  // global = 0.75 * (0,0 - (1,0)) + 0.25 * (0,0 - (0,1)) = (-0.75, -0.25)
  CHECK(state.models[0][0] == Catch::Approx(-0.75));
  CHECK(state.models[0][1] == Catch::Approx(-0.25));
  CHECK(state.models[1] == state.models[0]);
  CHECK(state.intermediates[0] == state.models[0]);
}

TEST_CASE("fedavg at full participation keeps every client on the global") {
  const int n = 5, d = 3;
  const auto problems = quadratic_problems(random_centers(n, d, 11));
  auto cfg = basic_config(Algorithm::fedavg);
  auto state = make_initial_state(n, ParamVector(d, 0.4));
  for (int k = 1; k <= 10; ++k) {
    state = fedavg_round(state, cfg, problems, 0.2).state;
    for (int i = 1; i < n; ++i) CHECK(state.models[i] == state.models[0]);
  }
}

TEST_CASE("degenerate participant models name the offending client") {
  const int n = 4, d = 3;
  const auto problems = quadratic_problems(random_centers(n, d, 12));
  auto cfg = basic_config(Algorithm::fedacs);
  auto state = make_initial_state(n, ParamVector(d, 1.0));
  state.models[2] = ParamVector(d, 0.0);
  try {
    fedacs_round(state, cfg, problems, 0.1);
    FAIL("expected DegenerateModelError");
  } catch (const DegenerateModelError& e) {
    CHECK(e.client_id == 2);
  }
}

TEST_CASE("run_round dispatches on the configured algorithm") {
  const int n = 3, d = 2;
  const auto problems = quadratic_problems(random_centers(n, d, 13));
  auto state = make_initial_state(n, ParamVector(d, 1.0));
  for (Algorithm algo : {Algorithm::fedacs, Algorithm::fedavg, Algorithm::fedamp,
                         Algorithm::local}) {
    auto cfg = basic_config(algo);
    const auto out = run_round(state, cfg, problems, 0.1);
    CHECK(out.state.round == 1);
    if (algo == Algorithm::fedacs)
      CHECK(std::isfinite(out.delta));
    if (algo == Algorithm::fedavg || algo == Algorithm::local)
      CHECK(std::isnan(out.delta));
  }
}
