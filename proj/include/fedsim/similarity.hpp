#pragma once

// Pairwise model similarity, the quantile threshold that drives client
// selection, and attention aggregation of selected neighbors. Also the
// similarity-weighted regularizer R(W) and its gradient forms, which the
// diagnostics layer uses to evaluate the personalized objective.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fedsim/core.hpp"

namespace fedsim {

// Dense n x n cosine similarity matrix, row-major.
struct SimilarityMatrix {
  int n = 0;
  std::vector<double> scores;

  double at(int i, int j) const { return scores[static_cast<std::size_t>(i) * n + j]; }
  double& at(int i, int j) { return scores[static_cast<std::size_t>(i) * n + j]; }
};

// Row-stochastic attention weights produced by one aggregation step, plus the
// threshold they were built with. weights[i][j] == 0 means j was not selected
// as a neighbor of i.
struct AttentionWeights {
  int n = 0;
  double delta = 0.0;
  std::vector<double> weights;  // row-major n x n

  double at(int i, int j) const { return weights[static_cast<std::size_t>(i) * n + j]; }
  double& at(int i, int j) { return weights[static_cast<std::size_t>(i) * n + j]; }
};

// cos(a, b) = <a,b> / (|a||b|). Zero-norm inputs have no direction, so this
// throws rather than inventing one; callers with client context re-throw with
// the offending id attached.
inline double cosine_similarity(const ParamVector& a, const ParamVector& b) {
  require(a.size() == b.size(), "cosine_similarity: size mismatch");
  require(!a.empty(), "cosine_similarity: empty vectors");
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0)
    throw DegenerateModelError("cosine_similarity: zero-norm model vector", -1);
  // Round-off can push near-parallel vectors past +/-1, which would leak
  // through strict threshold comparisons at the boundary; clamp to the
  // mathematical range.
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// Full pairwise matrix. The diagonal is written as exactly 1: a model's
// similarity to itself is 1 by definition, and using the literal constant
// keeps self-links immune to round-off.
inline SimilarityMatrix similarity_matrix(const std::vector<ParamVector>& models) {
  const int n = static_cast<int>(models.size());
  require(n > 0, "similarity_matrix: no models");
  SimilarityMatrix S;
  S.n = n;
  S.scores.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> norms(n);
  for (int i = 0; i < n; ++i) {
    norms[i] = norm(models[i]);
    if (norms[i] == 0.0)
      throw DegenerateModelError(
          "similarity_matrix: zero-norm model for client " + std::to_string(i), i);
  }
  for (int i = 0; i < n; ++i) {
    S.at(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      const double s =
          std::clamp(dot(models[i], models[j]) / (norms[i] * norms[j]), -1.0, 1.0);
      S.at(i, j) = s;
      S.at(j, i) = s;
    }
  }
  return S;
}

// p-quantile over all n*n entries (diagonal included): sort ascending and
// take index ceil(p * n^2) - 1, clamped to [0, n^2 - 1]. p=0 gives the
// minimum entry, p=1 the maximum.
inline double quantile_threshold(const SimilarityMatrix& S, double p) {
  require(S.n > 0, "quantile_threshold: empty matrix");
  require(p >= 0.0 && p <= 1.0, "quantile_threshold: p must be in [0, 1]");
  std::vector<double> entries(S.scores);
  std::sort(entries.begin(), entries.end());
  const auto total = static_cast<long long>(entries.size());
  long long idx = static_cast<long long>(std::ceil(p * static_cast<double>(total))) - 1;
  idx = std::max(0LL, std::min(idx, total - 1));
  return entries[static_cast<std::size_t>(idx)];
}

namespace detail {

// Neighbor rule shared by aggregation and the thresholded-matrix helper:
// self always counts; another client j counts when s_ij > max(delta, 0).
// The max with 0 keeps negatively-aligned models out even when the quantile
// lands below zero, since a negative attention weight would repel rather
// than aggregate.
inline bool is_neighbor(const SimilarityMatrix& S, int i, int j, double delta) {
  if (j == i) return true;
  const double s = S.at(i, j);
  return s > delta && s > 0.0;
}

}  // namespace detail

// Copy of S with non-neighbor entries zeroed (diagonal always kept).
inline SimilarityMatrix thresholded_similarity(const SimilarityMatrix& S,
                                               double delta) {
  SimilarityMatrix T;
  T.n = S.n;
  T.scores.assign(static_cast<std::size_t>(S.n) * S.n, 0.0);
  for (int i = 0; i < S.n; ++i)
    for (int j = 0; j < S.n; ++j)
      if (detail::is_neighbor(S, i, j, delta)) T.at(i, j) = S.at(i, j);
  return T;
}

// Attention aggregation: u_i = sum_{j in J_i} s_ij w_j / sum_{j in J_i} s_ij
// with J_i = {i} union {j : s_ij > max(delta, 0)}. Rows of the returned
// weights are the normalized coefficients, so each row sums to 1 and the
// diagonal entry is strictly positive (self similarity is 1).
inline std::pair<std::vector<ParamVector>, AttentionWeights> attention_aggregate(
    const std::vector<ParamVector>& models, const SimilarityMatrix& S,
    double delta) {
  const int n = static_cast<int>(models.size());
  require(n > 0, "attention_aggregate: no models");
  require(S.n == n, "attention_aggregate: similarity size mismatch");
  AttentionWeights W;
  W.n = n;
  W.delta = delta;
  W.weights.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<ParamVector> agg(n);
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    for (int j = 0; j < n; ++j)
      if (detail::is_neighbor(S, i, j, delta)) denom += S.at(i, j);
    // denom >= s_ii = 1, so the division below is always safe.
    ParamVector u(models[i].size(), 0.0);
    for (int j = 0; j < n; ++j) {
      if (!detail::is_neighbor(S, i, j, delta)) continue;
      require(models[j].size() == models[i].size(),
              "attention_aggregate: model dimension mismatch");
      const double c = S.at(i, j) / denom;
      W.at(i, j) = c;
      axpy(c, models[j], u);
    }
    agg[i] = std::move(u);
  }
  return {std::move(agg), std::move(W)};
}

// R(W) = sum_{i,j} s_ij |w_i - w_j|^2 over all ordered pairs.
inline double regularizer(const std::vector<ParamVector>& models,
                          const SimilarityMatrix& S) {
  const int n = static_cast<int>(models.size());
  require(S.n == n, "regularizer: similarity size mismatch");
  double r = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      r += S.at(i, j) * squared_distance(models[i], models[j]);
    }
  return r;
}

enum class RegGradMode {
  // d/dw_i of R(W) with S frozen: 4 * sum_j s_ij (w_i - w_j) for symmetric S.
  pairwise,
  // The column update form w_i - sum_j s_ij w_j. With row-normalized weights
  // this is the direction the intermediate step U = W - alpha * grad moves in;
  // it is not the derivative of R above unless rows are normalized and the
  // pairwise factor is absorbed into alpha.
  column,
};

// Per-client regularizer gradient columns, in the requested form.
inline std::vector<ParamVector> regularizer_grad(
    const std::vector<ParamVector>& models, const SimilarityMatrix& S,
    RegGradMode mode = RegGradMode::pairwise) {
  const int n = static_cast<int>(models.size());
  require(n > 0, "regularizer_grad: no models");
  require(S.n == n, "regularizer_grad: similarity size mismatch");
  std::vector<ParamVector> g(n);
  for (int i = 0; i < n; ++i) {
    g[i].assign(models[i].size(), 0.0);
    if (mode == RegGradMode::pairwise) {
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        // contribution of both ordered pairs (i,j) and (j,i)
        axpy(4.0 * S.at(i, j), sub(models[i], models[j]), g[i]);
      }
    } else {
      g[i] = models[i];
      for (int j = 0; j < n; ++j) axpy(-S.at(i, j), models[j], g[i]);
    }
  }
  return g;
}

}  // namespace fedsim
