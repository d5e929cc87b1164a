#pragma once

// Convergence diagnostics: the personalized objective F_lambda, its gradient
// norm, stationarity traces (running minimum of the squared gradient norm),
// log-log rate fits against round checkpoints, a finite-difference oracle for
// gradient checks, and an empirical probe of the boundedness/smoothness
// assumptions behind the convergence guarantee.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/core.hpp"
#include "fedsim/federated.hpp"
#include "fedsim/similarity.hpp"

namespace fedsim {

// ---------------------------------------------------------------------------
// Objective and gradient.
// ---------------------------------------------------------------------------

// F_lambda(W) = sum_i F_i(w_i) + lambda * R(W), with S frozen by the caller.
template <ClientProblem P>
double personalized_objective(const std::vector<ParamVector>& models,
                              const std::vector<P>& problems, double lambda,
                              const SimilarityMatrix& S) {
  require(models.size() == problems.size(),
          "personalized_objective: models/problems size mismatch");
  require(lambda > 0.0, "personalized_objective: lambda must be positive");
  double f = 0.0;
  for (std::size_t i = 0; i < models.size(); ++i)
    f += problems[i].full_loss(models[i]);
  return f + lambda * regularizer(models, S);
}

// Per-client columns of the objective gradient with S frozen:
// grad_i = dF_i(w_i) + lambda * (regularizer gradient column i).
template <ClientProblem P>
std::vector<ParamVector> objective_grad(const std::vector<ParamVector>& models,
                                        const std::vector<P>& problems,
                                        double lambda, const SimilarityMatrix& S,
                                        RegGradMode mode = RegGradMode::pairwise) {
  require(models.size() == problems.size(),
          "objective_grad: models/problems size mismatch");
  auto reg = regularizer_grad(models, S, mode);
  std::vector<ParamVector> g(models.size());
  for (std::size_t i = 0; i < models.size(); ++i) {
    g[i] = problems[i].full_gradient(models[i]);
    axpy(lambda, reg[i], g[i]);
  }
  return g;
}

// Frobenius norm of the stacked gradient columns.
template <ClientProblem P>
double objective_grad_norm(const std::vector<ParamVector>& models,
                           const std::vector<P>& problems, double lambda,
                           const SimilarityMatrix& S,
                           RegGradMode mode = RegGradMode::pairwise) {
  return stacked_norm(objective_grad(models, problems, lambda, S, mode));
}

// Central differences, the oracle analytic gradients are checked against:
// g_j = (f(w + h e_j) - f(w - h e_j)) / 2h.
inline ParamVector finite_difference_grad(
    const std::function<double(const ParamVector&)>& f, const ParamVector& w,
    double h) {
  require(h > 0.0, "finite_difference_grad: h must be positive");
  ParamVector g(w.size());
  ParamVector x = w;
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double orig = x[j];
    x[j] = orig + h;
    const double fp = f(x);
    x[j] = orig - h;
    const double fm = f(x);
    x[j] = orig;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Stationarity traces.
// ---------------------------------------------------------------------------

struct TracePoint {
  int round = 0;
  double objective = 0.0;
  double grad_norm_sq = 0.0;
  double running_min = 0.0;  // min grad_norm_sq over rounds recorded so far
};

struct StationarityTrace {
  std::vector<TracePoint> points;

  void append(int round, double objective, double grad_norm_sq) {
    const double prev = points.empty()
                            ? std::numeric_limits<double>::infinity()
                            : points.back().running_min;
    points.push_back({round, objective, grad_norm_sq,
                      std::min(prev, grad_norm_sq)});
  }

  const TracePoint& at_round(int round) const {
    for (const auto& p : points)
      if (p.round == round) return p;
    throw ContractViolation("StationarityTrace: round " + std::to_string(round) +
                            " not recorded");
  }
};

// Evaluates the objective and gradient norm of the current state against a
// similarity matrix frozen from the current models, and appends to the trace.
template <ClientProblem P>
void record_trace_point(StationarityTrace& trace, const FederatedState& state,
                        const std::vector<P>& problems, double lambda,
                        RegGradMode mode = RegGradMode::pairwise) {
  const SimilarityMatrix S = similarity_matrix(state.models);
  const double obj = personalized_objective(state.models, problems, lambda, S);
  const double gn = objective_grad_norm(state.models, problems, lambda, S, mode);
  trace.append(state.round, obj, gn * gn);
}

// ---------------------------------------------------------------------------
// Rate fitting.
// ---------------------------------------------------------------------------

struct RateFit {
  double slope = 0.0;      // d log(y) / d log(x)
  double intercept = 0.0;  // log(y) at log(x) = 0
  double residual = 0.0;   // root mean squared log residual
  int n_points = 0;
};

// Least squares on (log x, log y). Points with non-positive coordinates are
// rejected; a guarantee of the form y = O(x^c) shows up as slope <= c.
inline RateFit fit_loglog(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 2, "fit_loglog: need at least 2 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : points) {
    require(x > 0.0 && y > 0.0, "fit_loglog: points must be positive");
    const double lx = std::log(x), ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double n = static_cast<double>(points.size());
  const double denom = n * sxx - sx * sx;
  require(denom > 0.0, "fit_loglog: degenerate x values");
  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  fit.n_points = static_cast<int>(points.size());
  double rss = 0.0;
  for (const auto& [x, y] : points) {
    const double r = std::log(y) - (fit.intercept + fit.slope * std::log(x));
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

// Fit of the running minimum against the checkpoint rounds of one trace.
inline RateFit rate_fit(const StationarityTrace& trace,
                        const std::vector<int>& checkpoint_rounds) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(checkpoint_rounds.size());
  for (int k : checkpoint_rounds)
    pts.emplace_back(static_cast<double>(k), trace.at_round(k).running_min);
  return fit_loglog(pts);
}

// ---------------------------------------------------------------------------
// Quadratic testbed.
// ---------------------------------------------------------------------------

struct QuadraticTestbed {
  std::vector<QuadraticProblem> problems;
  ParamVector init;  // shared across clients
  std::vector<int> cluster_of;
};

// Clients in `n_clusters` contiguous blocks; block g's centers sit at
// radius * e_g (coordinate axes, so distinct clusters are exactly orthogonal),
// optionally jittered. All clients share one random nonzero init.
inline QuadraticTestbed make_quadratic_testbed(int n_clients, int dim,
                                               int n_clusters, double radius,
                                               double jitter, std::uint64_t seed) {
  require(n_clients > 0, "make_quadratic_testbed: n_clients must be positive");
  require(n_clusters > 0 && n_clusters <= n_clients,
          "make_quadratic_testbed: n_clusters must be in [1, n_clients]");
  require(n_clusters <= dim,
          "make_quadratic_testbed: need n_clusters <= dim for orthogonal centers");
  require(radius > 0.0, "make_quadratic_testbed: radius must be positive");
  require(jitter >= 0.0, "make_quadratic_testbed: jitter must be >= 0");

  auto rng = make_rng({seed, static_cast<std::uint64_t>(Stream::data)});
  std::normal_distribution<double> g(0.0, 1.0);

  QuadraticTestbed tb;
  tb.problems.resize(n_clients);
  tb.cluster_of.resize(n_clients);
  for (int i = 0; i < n_clients; ++i) {
    const int cl = static_cast<int>(static_cast<long long>(i) * n_clusters / n_clients);
    tb.cluster_of[i] = cl;
    ParamVector c(dim, 0.0);
    c[cl] = radius;
    if (jitter > 0.0)
      for (double& v : c) v += jitter * g(rng);
    tb.problems[i].center = std::move(c);
  }
  tb.init.resize(dim);
  do {
    for (double& v : tb.init) v = g(rng);
  } while (norm(tb.init) == 0.0);
  return tb;
}

// Runs `cfg.rounds_K` rounds of cfg.algorithm on the given problems from a
// shared init, recording a trace point before the first round and after every
// round. The executed update ignores alpha; it is part of the schedule only
// because the guarantee couples the two step sizes.
template <ClientProblem P>
StationarityTrace run_stationarity_trace(const std::vector<P>& problems,
                                         const ParamVector& init,
                                         const AlgoConfig& cfg) {
  cfg.validate();
  const auto steps = resolve_schedules(cfg.alpha_schedule, cfg.beta_schedule,
                                       cfg.rounds_K, cfg.lambda);
  auto state = make_initial_state(static_cast<int>(problems.size()), init);
  StationarityTrace trace;
  record_trace_point(trace, state, problems, cfg.lambda);
  for (int k = 1; k <= cfg.rounds_K; ++k) {
    state = run_round(state, cfg, problems, steps[k - 1].beta).state;
    record_trace_point(trace, state, problems, cfg.lambda);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Assumption probe.
// ---------------------------------------------------------------------------

// Empirical check of the guarantee's standing assumptions over a recorded
// trajectory: gradients of the losses stay bounded (estimate of the constant
// B), the regularizer gradient stays within B / lambda, and both gradient
// maps look locally Lipschitz along the trajectory (secant estimates; empty
// when the trajectory never moves).
struct AssumptionProbe {
  double max_f_grad_norm = 0.0;
  double max_r_grad_norm = 0.0;
  double lambda = 0.0;
  std::vector<double> f_lipschitz;
  std::vector<double> r_lipschitz;

  bool r_grad_within_bound() const {
    return max_r_grad_norm <= max_f_grad_norm / lambda + 1e-12;
  }
  double max_f_lipschitz() const {
    double m = 0.0;
    for (double v : f_lipschitz) m = std::max(m, v);
    return m;
  }
  double max_r_lipschitz() const {
    double m = 0.0;
    for (double v : r_lipschitz) m = std::max(m, v);
    return m;
  }
};

template <ClientProblem P>
AssumptionProbe assumption_probe(
    const std::vector<std::vector<ParamVector>>& snapshots,
    const std::vector<P>& problems, double lambda) {
  require(!snapshots.empty(), "assumption_probe: no snapshots");
  require(lambda > 0.0, "assumption_probe: lambda must be positive");
  AssumptionProbe probe;
  probe.lambda = lambda;

  auto f_grads = [&](const std::vector<ParamVector>& W) {
    std::vector<ParamVector> g(W.size());
    for (std::size_t i = 0; i < W.size(); ++i)
      g[i] = problems[i].full_gradient(W[i]);
    return g;
  };
  auto r_grads = [&](const std::vector<ParamVector>& W) {
    return regularizer_grad(W, similarity_matrix(W), RegGradMode::pairwise);
  };

  std::vector<std::vector<ParamVector>> fg, rg;
  fg.reserve(snapshots.size());
  rg.reserve(snapshots.size());
  for (const auto& W : snapshots) {
    require(W.size() == problems.size(),
            "assumption_probe: snapshot size mismatch");
    fg.push_back(f_grads(W));
    rg.push_back(r_grads(W));
    probe.max_f_grad_norm = std::max(probe.max_f_grad_norm, stacked_norm(fg.back()));
    probe.max_r_grad_norm = std::max(probe.max_r_grad_norm, stacked_norm(rg.back()));
  }
  for (std::size_t t = 1; t < snapshots.size(); ++t) {
    const double dw =
        std::sqrt(stacked_squared_distance(snapshots[t], snapshots[t - 1]));
    if (dw < 1e-12) continue;  // no movement, no secant
    probe.f_lipschitz.push_back(
        std::sqrt(stacked_squared_distance(fg[t], fg[t - 1])) / dw);
    probe.r_lipschitz.push_back(
        std::sqrt(stacked_squared_distance(rg[t], rg[t - 1])) / dw);
  }
  return probe;
}

}  // namespace fedsim
