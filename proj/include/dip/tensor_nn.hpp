#pragma once

// Dense feed-forward classifier with softmax cross-entropy, manual
// backpropagation and momentum SGD. This is the base hypothesis h that the
// mixing predictor marginalizes over.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dip/errors.hpp"
#include "dip/rng.hpp"

namespace dip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation { relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

/// Weights are stored input-major: weights[l] is layer_sizes[l] x layer_sizes[l+1],
/// so a batch of row vectors propagates as X * W + b.
struct ModelParams {
  std::vector<int> layer_sizes;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Activation activation = Activation::relu;

  std::size_t num_layers() const { return weights.size(); }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }

  std::size_t num_parameters() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) total += weights[l].size() + biases[l].size();
    return total;
  }
};

/// Same layout as ModelParams' weights and biases.
struct ParamGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static ParamGrads zeros_like(const ModelParams& p) {
    ParamGrads g;
    for (std::size_t l = 0; l < p.num_layers(); ++l) {
      g.weights.push_back(Matrix::Zero(p.weights[l].rows(), p.weights[l].cols()));
      g.biases.push_back(Vector::Zero(p.biases[l].size()));
    }
    return g;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
  }
};

/// Features plus soft labels; one-hot labels are the special case.
struct Batch {
  Matrix features;
  Matrix soft_labels;

  Eigen::Index size() const { return features.rows(); }
};

struct ScheduleEntry {
  int epoch;
  double multiplier;
};

struct OptimState {
  double learning_rate = 0.1;
  double momentum = 0.9;
  std::vector<ScheduleEntry> schedule;
  std::vector<Matrix> velocity_w;
  std::vector<Vector> velocity_b;

  /// Learning rate in effect at `epoch`: every multiplier whose epoch is
  /// <= `epoch` has been applied.
  double lr_at(int epoch) const {
    double lr = learning_rate;
    for (const auto& s : schedule) {
      if (epoch >= s.epoch) lr *= s.multiplier;
    }
    return lr;
  }

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      if (i > 0 && schedule[i].epoch <= schedule[i - 1].epoch)
        throw ConfigError("schedule epochs must be strictly increasing");
      if (!(schedule[i].multiplier > 0.0)) throw ConfigError("schedule multipliers must be positive");
    }
  }
};

/// Intermediate values kept by the forward pass for backpropagation.
struct ForwardCache {
  std::vector<Matrix> inputs;       // input to layer l (post-activation of l-1)
  std::vector<Matrix> preactivity;  // X * W + b for layer l
};

namespace detail {

inline void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string(what) + " contains NaN or Inf");
}

inline Matrix activate(const Matrix& z, Activation a) {
  if (a == Activation::relu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

inline Matrix activation_derivative(const Matrix& z, Activation a) {
  if (a == Activation::relu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

inline Matrix log_softmax_rows(const Matrix& logits) {
  Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
  Matrix shifted = logits.colwise() - row_max;
  Eigen::VectorXd log_norm = shifted.array().exp().rowwise().sum().log().matrix();
  return shifted.colwise() - log_norm;
}

}  // namespace detail

inline Matrix softmax_rows(const Matrix& logits) {
  return detail::log_softmax_rows(logits).array().exp().matrix();
}

inline Matrix log_softmax_rows(const Matrix& logits) { return detail::log_softmax_rows(logits); }

inline void validate_params(const ModelParams& p) {
  if (p.layer_sizes.size() < 2) throw ConfigError("a network needs at least an input and an output layer");
  if (p.weights.size() + 1 != p.layer_sizes.size() || p.biases.size() != p.weights.size())
    throw ShapeError("layer count does not match layer_sizes");
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    if (p.weights[l].rows() != p.layer_sizes[l] || p.weights[l].cols() != p.layer_sizes[l + 1])
      throw ShapeError("weights[" + std::to_string(l) + "] has the wrong shape");
    if (p.biases[l].size() != p.layer_sizes[l + 1])
      throw ShapeError("biases[" + std::to_string(l) + "] has the wrong length");
    detail::check_finite(p.weights[l], "weights");
    detail::check_finite(p.biases[l], "biases");
  }
}

/// Weights uniform in +-1/sqrt(fan_in), biases zero.
inline ModelParams mlp_init(const std::vector<int>& layer_sizes, Activation activation, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ConfigError("mlp_init: need at least 2 layer sizes");
  for (int s : layer_sizes)
    if (s < 1) throw ConfigError("mlp_init: layer sizes must be >= 1");

  ModelParams p;
  p.layer_sizes = layer_sizes;
  p.activation = activation;
  RngStream rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_in, fan_out);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    p.weights.push_back(std::move(w));
    p.biases.push_back(Vector::Zero(fan_out));
  }
  return p;
}

inline Matrix forward(const ModelParams& params, const Matrix& features, ForwardCache* cache = nullptr) {
  if (features.cols() != params.input_dim())
    throw ShapeError("forward: feature width " + std::to_string(features.cols()) + " != input size " +
                     std::to_string(params.input_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->preactivity.clear();
  }
  Matrix a = features;
  const std::size_t L = params.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = a * params.weights[l];
    z.rowwise() += params.biases[l].transpose();
    if (cache) {
      cache->inputs.push_back(a);
      cache->preactivity.push_back(z);
    }
    a = (l + 1 < L) ? detail::activate(z, params.activation) : std::move(z);
  }
  return a;
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
struct XentResult {
  double loss;
  Matrix dlogits;
};

inline XentResult softmax_xent(const Matrix& logits, const Matrix& soft_labels) {
  if (logits.rows() != soft_labels.rows() || logits.cols() != soft_labels.cols())
    throw ShapeError("softmax_xent: logits and labels differ in shape");
  if (logits.rows() == 0) throw ShapeError("softmax_xent: empty batch");
  detail::check_finite(logits, "logits");
  detail::check_finite(soft_labels, "labels");
  const double m = static_cast<double>(logits.rows());
  Matrix log_p = detail::log_softmax_rows(logits);
  const double loss = -(soft_labels.array() * log_p.array()).sum() / m;
  Matrix dlogits = (log_p.array().exp() - soft_labels.array()).matrix() / m;
  return {loss, std::move(dlogits)};
}

/// Backpropagates an upstream logit gradient through a cached forward pass.
inline ParamGrads backward_from_logits(const ModelParams& params, const ForwardCache& cache, const Matrix& dlogits) {
  const std::size_t L = params.num_layers();
  ParamGrads g;
  g.weights.resize(L);
  g.biases.resize(L);
  Matrix dz = dlogits;
  for (std::size_t l = L; l-- > 0;) {
    g.weights[l] = cache.inputs[l].transpose() * dz;
    g.biases[l] = dz.colwise().sum().transpose();
    if (l > 0) {
      Matrix da = dz * params.weights[l].transpose();
      dz = da.cwiseProduct(detail::activation_derivative(cache.preactivity[l - 1], params.activation));
    }
  }
  return g;
}

struct LossAndGrad {
  double loss;
  ParamGrads grads;
};

inline void validate_batch(const ModelParams& params, const Batch& batch) {
  if (batch.size() == 0) throw ShapeError("empty batch");
  if (batch.soft_labels.rows() != batch.size()) throw ShapeError("batch features and labels differ in rows");
  if (batch.features.cols() != params.input_dim()) throw ShapeError("batch feature width mismatch");
  if (batch.soft_labels.cols() != params.output_dim()) throw ShapeError("batch label width mismatch");
}

/// Loss and exact gradient of softmax_xent(forward(params, x), y).
inline LossAndGrad backward(const ModelParams& params, const Batch& batch) {
  validate_batch(params, batch);
  ForwardCache cache;
  Matrix logits = forward(params, batch.features, &cache);
  auto [loss, dlogits] = softmax_xent(logits, batch.soft_labels);
  return {loss, backward_from_logits(params, cache, dlogits)};
}

/// velocity <- momentum * velocity - lr(epoch) * grad; params <- params + velocity.
inline void sgd_step(ModelParams& params, const ParamGrads& grads, OptimState& state, int epoch) {
  if (!(state.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (grads.weights.size() != params.num_layers() || grads.biases.size() != params.num_layers())
    throw ShapeError("sgd_step: gradient layer count mismatch");
  if (state.velocity_w.empty()) {
    auto zero = ParamGrads::zeros_like(params);
    state.velocity_w = std::move(zero.weights);
    state.velocity_b = std::move(zero.biases);
  }
  const double lr = state.lr_at(epoch);
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    if (grads.weights[l].rows() != params.weights[l].rows() || grads.weights[l].cols() != params.weights[l].cols() ||
        grads.biases[l].size() != params.biases[l].size())
      throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
    state.velocity_w[l] = state.momentum * state.velocity_w[l] - lr * grads.weights[l];
    state.velocity_b[l] = state.momentum * state.velocity_b[l] - lr * grads.biases[l];
    params.weights[l] += state.velocity_w[l];
    params.biases[l] += state.velocity_b[l];
  }
}

/// Row-wise argmax; ties resolve to the lowest class index.
inline std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c)
      if (scores(r, c) > scores(r, best)) best = static_cast<int>(c);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

}  // namespace dip
