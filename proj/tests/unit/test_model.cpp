#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "fedsim/diagnostics.hpp"
#include "fedsim/model.hpp"

using namespace fedsim;

namespace {

// ---------------------------------------------------------------------------
// Reference oracle: an independent straight-line softmax cross-entropy for
// the linear model, written against the layout contract only. Naive exp/sum
// is fine at the moderate scales used here.
// ---------------------------------------------------------------------------

double ref_linear_loss(const ModelSpec& spec, const ParamVector& w,
                       const Batch& batch) {
  const int d = spec.input_dim, c = spec.num_classes;
  double total = 0.0;
  for (int r = 0; r < batch.size(); ++r) {
    const double* x = batch.row(r);
    std::vector<double> z(c);
    for (int k = 0; k < c; ++k) {
      z[k] = w[static_cast<std::size_t>(c) * d + k];  // bias
      for (int j = 0; j < d; ++j) z[k] += w[static_cast<std::size_t>(k) * d + j] * x[j];
    }
    double sum = 0.0;
    for (int k = 0; k < c; ++k) sum += std::exp(z[k]);
    total += std::log(sum) - z[batch.labels[r]];
  }
  return total / batch.size();
}

Batch random_batch(const ModelSpec& spec, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, spec.num_classes - 1);
  Batch b;
  b.input_dim = spec.input_dim;
  b.features.resize(static_cast<std::size_t>(m) * spec.input_dim);
  b.labels.resize(m);
  for (auto& v : b.features) v = g(rng);
  for (auto& y : b.labels) y = lab(rng);
  return b;
}

ParamVector random_params(const ModelSpec& spec, std::mt19937_64& rng,
                          double scale = 0.5) {
  std::normal_distribution<double> g(0.0, scale);
  ParamVector w(spec.param_dim());
  for (auto& v : w) v = g(rng);
  return w;
}

double max_rel_error(const ParamVector& got, const ParamVector& want) {
  REQUIRE(got.size() == want.size());
  const double scale = std::max(1e-8, std::max(norm(got), norm(want)));
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::abs(got[i] - want[i]) / scale);
  return worst;
}

}  // namespace

TEST_CASE("param_dim matches the flat layout") {
  ModelSpec lin{ModelKind::linear, 7, 3, 0, Activation::relu};
  CHECK(lin.param_dim() == (7 + 1) * 3);
  ModelSpec mlp{ModelKind::mlp, 7, 3, 5, Activation::relu};
  CHECK(mlp.param_dim() == (7 + 1) * 5 + (5 + 1) * 3);
}

TEST_CASE("zero parameters give uniform probabilities and loss ln(C)") {
  for (int c : {2, 3, 10}) {
    ModelSpec spec{ModelKind::linear, 4, c, 0, Activation::relu};
    auto rng = std::mt19937_64{42};
    Batch b = random_batch(spec, 6, rng);
    ParamVector w(spec.param_dim(), 0.0);
    CHECK(forward_loss(spec, w, b) == Catch::Approx(std::log(c)).epsilon(1e-12));
    const auto probs = predict_probabilities(spec, w, b);
    for (double p : probs) CHECK(p == Catch::Approx(1.0 / c).epsilon(1e-12));
  }
}

TEST_CASE("well-separated logits: loss equals log1p(exp(-margin))") {
  // One sample, logits (+10, -10) for the true class first: the cross-entropy
  // is log(1 + e^-20), about 2.06e-9, and must not be flushed to zero.
  ModelSpec spec{ModelKind::linear, 1, 2, 0, Activation::relu};
  ParamVector w{10.0, -10.0, 0.0, 0.0};  // W rows then biases
  Batch b;
  b.input_dim = 1;
  b.features = {1.0};
  b.labels = {0};
  // The log-sum-exp detour through the +10 max shift leaves ~1e-15 of
  // absolute noise on a ~2e-9 value, so the tolerance is absolute.
  const double expected = std::log1p(std::exp(-20.0));
  CHECK(forward_loss(spec, w, b) == Catch::Approx(expected).margin(1e-12));
  CHECK(forward_loss(spec, w, b) > 0.0);
}

TEST_CASE("loss stays finite for extreme parameters") {
  auto rng = std::mt19937_64{7};
  for (ModelKind kind : {ModelKind::linear, ModelKind::mlp}) {
    ModelSpec spec{kind, 6, 4, 5, Activation::relu};
    Batch b = random_batch(spec, 8, rng);
    ParamVector w = random_params(spec, rng, 300.0);
    const double loss = forward_loss(spec, w, b);
    CHECK(std::isfinite(loss));
    CHECK(loss >= 0.0);
    CHECK(all_finite(gradient(spec, w, b)));
  }
}

TEST_CASE("forward_loss matches the independent reference on random instances") {
  auto rng = std::mt19937_64{2024};
  for (int trial = 0; trial < 25; ++trial) {
    ModelSpec spec{ModelKind::linear, 3 + trial % 5, 2 + trial % 4, 0,
                   Activation::relu};
    Batch b = random_batch(spec, 1 + trial % 7, rng);
    ParamVector w = random_params(spec, rng);
    CHECK(forward_loss(spec, w, b) ==
          Catch::Approx(ref_linear_loss(spec, w, b)).epsilon(1e-12));
  }
}

TEST_CASE("gradient bias block at zero parameters is softmax(0) minus one-hot") {
  ModelSpec spec{ModelKind::linear, 3, 4, 0, Activation::relu};
  Batch b;
  b.input_dim = 3;
  b.features = {1.0, 2.0, 3.0};
  b.labels = {2};
  ParamVector w(spec.param_dim(), 0.0);
  const auto g = gradient(spec, w, b);
  const std::size_t bias0 = static_cast<std::size_t>(4) * 3;
  for (int k = 0; k < 4; ++k) {
    const double want = 0.25 - (k == 2 ? 1.0 : 0.0);
    CHECK(g[bias0 + k] == Catch::Approx(want).epsilon(1e-12));
    // weight row for class k is x scaled by the same factor
    for (int j = 0; j < 3; ++j)
      CHECK(g[static_cast<std::size_t>(k) * 3 + j] ==
            Catch::Approx(want * b.features[j]).epsilon(1e-12));
  }
}

TEST_CASE("analytic gradients agree with central finite differences") {
  auto rng = std::mt19937_64{99};
  const double h = 1e-5;
  const ModelSpec specs[] = {
      {ModelKind::linear, 5, 3, 0, Activation::relu},
      {ModelKind::mlp, 4, 3, 6, Activation::relu},
      {ModelKind::mlp, 4, 4, 5, Activation::tanh},
  };
  for (const auto& spec : specs) {
    for (int trial = 0; trial < 10; ++trial) {
      Batch b = random_batch(spec, 5, rng);
      ParamVector w = random_params(spec, rng);
      const auto analytic = gradient(spec, w, b);
      const auto fd = finite_difference_grad(
          [&](const ParamVector& v) { return forward_loss(spec, v, b); }, w, h);
      CHECK(max_rel_error(analytic, fd) < 1e-6);
    }
  }
}

TEST_CASE("subset evaluation equals evaluation of the gathered subset") {
  auto rng = std::mt19937_64{5};
  ModelSpec spec{ModelKind::mlp, 4, 3, 4, Activation::relu};
  Batch b = random_batch(spec, 10, rng);
  ParamVector w = random_params(spec, rng);
  const std::vector<int> rows{1, 4, 7};
  Batch sub;
  sub.input_dim = b.input_dim;
  for (int r : rows) {
    const double* x = b.row(r);
    sub.features.insert(sub.features.end(), x, x + b.input_dim);
    sub.labels.push_back(b.labels[r]);
  }
  CHECK(forward_loss(spec, w, b, rows) == Catch::Approx(forward_loss(spec, w, sub)));
  const auto g1 = gradient(spec, w, b, rows);
  const auto g2 = gradient(spec, w, sub);
  CHECK(max_rel_error(g1, g2) < 1e-14);
}

TEST_CASE("accuracy breaks argmax ties toward the lowest class index") {
  ModelSpec spec{ModelKind::linear, 2, 3, 0, Activation::relu};
  ParamVector w(spec.param_dim(), 0.0);  // all logits equal
  Batch b;
  b.input_dim = 2;
  b.features = {1.0, 1.0, 2.0, 2.0, 3.0, 3.0};
  b.labels = {0, 1, 2};
  // Every prediction is class 0, so only the first row scores.
  CHECK(accuracy(spec, w, b) == Catch::Approx(1.0 / 3.0));
}

TEST_CASE("accuracy counts argmax hits") {
  ModelSpec spec{ModelKind::linear, 1, 2, 0, Activation::relu};
  ParamVector w{1.0, -1.0, 0.0, 0.0};  // predicts class 0 iff x > 0
  Batch b;
  b.input_dim = 1;
  b.features = {1.0, -1.0, 2.0, -2.0};
  b.labels = {0, 1, 1, 1};
  CHECK(accuracy(spec, w, b) == Catch::Approx(0.75));
}

TEST_CASE("init_params is deterministic in the seed and sized to the model") {
  ModelSpec spec{ModelKind::mlp, 6, 3, 4, Activation::relu};
  const auto a = init_params(spec, 11);
  const auto b = init_params(spec, 11);
  const auto c = init_params(spec, 12);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(static_cast<int>(a.size()) == spec.param_dim());
  CHECK(norm(a) > 0.0);
}

TEST_CASE("model evaluation validates its inputs") {
  ModelSpec spec{ModelKind::linear, 2, 2, 0, Activation::relu};
  auto rng = std::mt19937_64{1};
  Batch b = random_batch(spec, 3, rng);
  ParamVector wrong_size(spec.param_dim() + 1, 0.0);
  CHECK_THROWS_AS(forward_loss(spec, wrong_size, b), ContractViolation);

  Batch bad_label = b;
  bad_label.labels[0] = 2;
  ParamVector w(spec.param_dim(), 0.0);
  CHECK_THROWS_AS(forward_loss(spec, w, bad_label), ContractViolation);

  Batch empty;
  empty.input_dim = 2;
  CHECK_THROWS_AS(forward_loss(spec, w, empty), ContractViolation);

  ModelSpec bad_spec{ModelKind::mlp, 2, 2, 0, Activation::relu};  // hidden_dim 0
  CHECK_THROWS_AS(forward_loss(bad_spec, w, b), ContractViolation);

  CHECK_THROWS_AS(forward_loss(spec, w, b, std::vector<int>{5}), ContractViolation);
  CHECK_THROWS_AS(forward_loss(spec, w, b, std::vector<int>{}), ContractViolation);
}
