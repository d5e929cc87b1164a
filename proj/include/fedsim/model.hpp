#pragma once

// Client models as flat parameter vectors: multinomial logistic regression and
// a one-hidden-layer MLP, with analytic gradients of the mean cross-entropy.
// Everything the federated layer needs from a model is forward_loss, gradient,
// and accuracy over a Batch (optionally restricted to a subset of rows).

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/core.hpp"

namespace fedsim {

enum class ModelKind { linear, mlp };
enum class Activation { relu, tanh };

struct ModelSpec {
  ModelKind kind = ModelKind::linear;
  int input_dim = 0;
  int num_classes = 0;
  int hidden_dim = 0;  // mlp only
  Activation activation = Activation::relu;

  // Flat layout: linear = [W(C x D) row-major by class | b(C)];
  // mlp = [W1(H x D) | b1(H) | W2(C x H) | b2(C)].
  int param_dim() const {
    if (kind == ModelKind::linear) return (input_dim + 1) * num_classes;
    return (input_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes;
  }

  void validate() const {
    require(input_dim > 0, "ModelSpec: input_dim must be positive");
    require(num_classes >= 2, "ModelSpec: num_classes must be at least 2");
    if (kind == ModelKind::mlp)
      require(hidden_dim > 0, "ModelSpec: hidden_dim must be positive for mlp");
  }
};

// A dense labeled batch; features are row-major (size() x input_dim).
struct Batch {
  std::vector<double> features;
  std::vector<int> labels;
  int input_dim = 0;

  int size() const { return static_cast<int>(labels.size()); }

  const double* row(int r) const { return features.data() + static_cast<std::size_t>(r) * input_dim; }

  void validate(int num_classes) const {
    require(input_dim > 0, "Batch: input_dim must be positive");
    require(features.size() == labels.size() * static_cast<std::size_t>(input_dim),
            "Batch: features size does not match labels * input_dim");
    for (std::size_t i = 0; i < labels.size(); ++i)
      require(labels[i] >= 0 && labels[i] < num_classes,
              "Batch: label out of range at row " + std::to_string(i));
  }
};

namespace detail {

// Writes the C logits for one feature row into `logits`.
inline void logits_linear(const ModelSpec& spec, const ParamVector& w,
                          const double* x, double* logits) {
  const int d = spec.input_dim, c = spec.num_classes;
  const double* bias = w.data() + static_cast<std::size_t>(c) * d;
  for (int k = 0; k < c; ++k) {
    const double* row = w.data() + static_cast<std::size_t>(k) * d;
    double z = bias[k];
    for (int j = 0; j < d; ++j) z += row[j] * x[j];
    logits[k] = z;
  }
}

struct MlpLayout {
  const double* w1;
  const double* b1;
  const double* w2;
  const double* b2;
  explicit MlpLayout(const ModelSpec& s, const double* p) {
    const std::size_t d = s.input_dim, h = s.hidden_dim, c = s.num_classes;
    w1 = p;
    b1 = p + h * d;
    w2 = b1 + h;
    b2 = w2 + c * h;
  }
};

inline double activate(Activation a, double u) {
  return a == Activation::relu ? (u > 0.0 ? u : 0.0) : std::tanh(u);
}

// Derivative expressed through the activation output (valid for relu/tanh).
inline double activate_deriv_from_output(Activation a, double pre, double out) {
  return a == Activation::relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

// hidden/pre must have room for H entries; logits for C.
inline void logits_mlp(const ModelSpec& spec, const ParamVector& w,
                       const double* x, double* pre, double* hidden,
                       double* logits) {
  const int d = spec.input_dim, h = spec.hidden_dim, c = spec.num_classes;
  MlpLayout L(spec, w.data());
  for (int t = 0; t < h; ++t) {
    const double* row = L.w1 + static_cast<std::size_t>(t) * d;
    double u = L.b1[t];
    for (int j = 0; j < d; ++j) u += row[j] * x[j];
    pre[t] = u;
    hidden[t] = activate(spec.activation, u);
  }
  for (int k = 0; k < c; ++k) {
    const double* row = L.w2 + static_cast<std::size_t>(k) * h;
    double z = L.b2[k];
    for (int t = 0; t < h; ++t) z += row[t] * hidden[t];
    logits[k] = z;
  }
}

// In place: logits -> softmax probabilities, returns log-sum-exp.
// Max subtraction keeps exp() in range for any finite logits.
inline double softmax_inplace(double* z, int c) {
  double zmax = z[0];
  for (int k = 1; k < c; ++k) zmax = std::max(zmax, z[k]);
  double sum = 0.0;
  for (int k = 0; k < c; ++k) {
    z[k] = std::exp(z[k] - zmax);
    sum += z[k];
  }
  for (int k = 0; k < c; ++k) z[k] /= sum;
  return zmax + std::log(sum);
}

inline void check_eval_args(const ModelSpec& spec, const ParamVector& params,
                            const Batch& batch) {
  spec.validate();
  require(static_cast<int>(params.size()) == spec.param_dim(),
          "model: params size does not match spec.param_dim()");
  require(batch.input_dim == spec.input_dim,
          "model: batch input_dim does not match spec");
  batch.validate(spec.num_classes);
  require(batch.size() > 0, "model: batch must be non-empty");
}

// Row subset selector: nullptr means "all rows".
inline int subset_size(const Batch& b, const std::vector<int>* subset) {
  return subset ? static_cast<int>(subset->size()) : b.size();
}
inline int subset_row(const Batch& b, const std::vector<int>* subset, int r) {
  if (!subset) return r;
  const int row = (*subset)[r];
  require(row >= 0 && row < b.size(), "model: subset row index out of range");
  return row;
}

inline double forward_loss_impl(const ModelSpec& spec, const ParamVector& params,
                                const Batch& batch, const std::vector<int>* subset) {
  check_eval_args(spec, params, batch);
  const int m = subset_size(batch, subset);
  require(m > 0, "model: row subset must be non-empty");
  const int c = spec.num_classes;
  std::vector<double> logits(c), pre(std::max(spec.hidden_dim, 1)),
      hidden(std::max(spec.hidden_dim, 1));
  double total = 0.0;
  for (int r = 0; r < m; ++r) {
    const int row = subset_row(batch, subset, r);
    const double* x = batch.row(row);
    if (spec.kind == ModelKind::linear)
      logits_linear(spec, params, x, logits.data());
    else
      logits_mlp(spec, params, x, pre.data(), hidden.data(), logits.data());
    double zlabel = logits[batch.labels[row]];
    double lse = softmax_inplace(logits.data(), c);
    total += lse - zlabel;
  }
  return total / m;
}

inline ParamVector gradient_impl(const ModelSpec& spec, const ParamVector& params,
                                 const Batch& batch, const std::vector<int>* subset) {
  check_eval_args(spec, params, batch);
  const int m = subset_size(batch, subset);
  require(m > 0, "model: row subset must be non-empty");
  const int d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
  ParamVector grad(params.size(), 0.0);
  std::vector<double> logits(c), pre(std::max(h, 1)), hidden(std::max(h, 1));
  for (int r = 0; r < m; ++r) {
    const int row = subset_row(batch, subset, r);
    const double* x = batch.row(row);
    const int y = batch.labels[row];
    if (spec.kind == ModelKind::linear) {
      logits_linear(spec, params, x, logits.data());
      softmax_inplace(logits.data(), c);
      double* gw = grad.data();
      double* gb = grad.data() + static_cast<std::size_t>(c) * d;
      for (int k = 0; k < c; ++k) {
        const double dz = logits[k] - (k == y ? 1.0 : 0.0);
        double* grow = gw + static_cast<std::size_t>(k) * d;
        for (int j = 0; j < d; ++j) grow[j] += dz * x[j];
        gb[k] += dz;
      }
    } else {
      logits_mlp(spec, params, x, pre.data(), hidden.data(), logits.data());
      softmax_inplace(logits.data(), c);
      MlpLayout L(spec, params.data());
      MlpLayout G(spec, grad.data());
      double* gw1 = const_cast<double*>(G.w1);
      double* gb1 = const_cast<double*>(G.b1);
      double* gw2 = const_cast<double*>(G.w2);
      double* gb2 = const_cast<double*>(G.b2);
      // dL/dh accumulates over output units; then push through the activation.
      std::vector<double> dh(h, 0.0);
      for (int k = 0; k < c; ++k) {
        const double dz = logits[k] - (k == y ? 1.0 : 0.0);
        double* grow = gw2 + static_cast<std::size_t>(k) * h;
        const double* wrow = L.w2 + static_cast<std::size_t>(k) * h;
        for (int t = 0; t < h; ++t) {
          grow[t] += dz * hidden[t];
          dh[t] += dz * wrow[t];
        }
        gb2[k] += dz;
      }
      for (int t = 0; t < h; ++t) {
        const double da =
            dh[t] * activate_deriv_from_output(spec.activation, pre[t], hidden[t]);
        if (da == 0.0) continue;
        double* grow = gw1 + static_cast<std::size_t>(t) * d;
        for (int j = 0; j < d; ++j) grow[j] += da * x[j];
        gb1[t] += da;
      }
    }
  }
  for (double& g : grad) g /= m;
  return grad;
}

}  // namespace detail

// Mean cross-entropy over the batch (natural log), computed with
// max-subtracted log-sum-exp so any finite logits stay finite.
inline double forward_loss(const ModelSpec& spec, const ParamVector& params,
                           const Batch& batch) {
  return detail::forward_loss_impl(spec, params, batch, nullptr);
}
inline double forward_loss(const ModelSpec& spec, const ParamVector& params,
                           const Batch& batch, const std::vector<int>& rows) {
  return detail::forward_loss_impl(spec, params, batch, &rows);
}

// Analytic gradient of forward_loss with respect to params, same flat layout.
inline ParamVector gradient(const ModelSpec& spec, const ParamVector& params,
                            const Batch& batch) {
  return detail::gradient_impl(spec, params, batch, nullptr);
}
inline ParamVector gradient(const ModelSpec& spec, const ParamVector& params,
                            const Batch& batch, const std::vector<int>& rows) {
  return detail::gradient_impl(spec, params, batch, &rows);
}

// Per-row class probabilities (softmax of the logits); row-major m x C.
inline std::vector<double> predict_probabilities(const ModelSpec& spec,
                                                 const ParamVector& params,
                                                 const Batch& batch) {
  detail::check_eval_args(spec, params, batch);
  const int c = spec.num_classes, m = batch.size();
  std::vector<double> out(static_cast<std::size_t>(m) * c);
  std::vector<double> pre(std::max(spec.hidden_dim, 1)),
      hidden(std::max(spec.hidden_dim, 1));
  for (int r = 0; r < m; ++r) {
    double* z = out.data() + static_cast<std::size_t>(r) * c;
    if (spec.kind == ModelKind::linear)
      detail::logits_linear(spec, params, batch.row(r), z);
    else
      detail::logits_mlp(spec, params, batch.row(r), pre.data(), hidden.data(), z);
    detail::softmax_inplace(z, c);
  }
  return out;
}

// Fraction of rows whose argmax logit matches the label.
// Ties resolve to the lowest class index, so accuracy is deterministic.
inline double accuracy(const ModelSpec& spec, const ParamVector& params,
                       const Batch& batch) {
  detail::check_eval_args(spec, params, batch);
  const int c = spec.num_classes, m = batch.size();
  std::vector<double> logits(c), pre(std::max(spec.hidden_dim, 1)),
      hidden(std::max(spec.hidden_dim, 1));
  int hits = 0;
  for (int r = 0; r < m; ++r) {
    if (spec.kind == ModelKind::linear)
      detail::logits_linear(spec, params, batch.row(r), logits.data());
    else
      detail::logits_mlp(spec, params, batch.row(r), pre.data(), hidden.data(),
                         logits.data());
    int best = 0;
    for (int k = 1; k < c; ++k)
      if (logits[k] > logits[best]) best = k;
    if (best == batch.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / m;
}

// Small random init, shared across clients by seeding identically.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  auto rng = make_rng({seed, static_cast<std::uint64_t>(Stream::init)});
  std::normal_distribution<double> dist(0.0, 0.1);
  ParamVector w(spec.param_dim());
  for (double& v : w) v = dist(rng);
  return w;
}

}  // namespace fedsim
