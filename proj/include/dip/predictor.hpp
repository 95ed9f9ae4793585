#pragma once

// Prediction with the marginalized classifier: the logits of h are averaged
// over S_test Monte-Carlo draws of (lambda, partner) before the softmax.
// Raw mode evaluates h on the clean input.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "dip/data.hpp"
#include "dip/errors.hpp"
#include "dip/mixing.hpp"
#include "dip/rng.hpp"
#include "dip/tensor_nn.hpp"

namespace dip {

enum class PredictMode { raw, dip };

inline std::string to_string(PredictMode m) { return m == PredictMode::raw ? "raw" : "dip"; }

inline PredictMode predict_mode_from_string(const std::string& s) {
  if (s == "raw") return PredictMode::raw;
  if (s == "dip") return PredictMode::dip;
  throw ConfigError("unknown predictor mode '" + s + "' (expected raw or dip)");
}

struct PredictorConfig {
  PredictMode mode = PredictMode::raw;
  int S_test = 500;
  BetaParams prior = BetaParams::point_mass_at_one();
  /// Features partners are drawn from; normally the (standardized) training set.
  std::shared_ptr<const Matrix> partner_pool;
  std::uint64_t seed = 0;

  void validate() const {
    if (mode == PredictMode::raw) return;
    if (S_test < 1) throw ConfigError("S_test must be >= 1");
    prior.validate();
    if (!partner_pool || partner_pool->rows() == 0) throw ConfigError("dip prediction needs a nonempty partner pool");
  }
};

/// Averaged logits of one input; `rng` supplies the draws in dip mode.
inline RowVector predict_logits(const ModelParams& params, const Vector& x, const PredictorConfig& cfg, RngStream& rng) {
  if (x.size() != params.input_dim()) throw ShapeError("predict: input dimension mismatch");
  if (cfg.mode == PredictMode::raw || cfg.prior.degenerate) return forward(params, x.transpose()).row(0);
  const Matrix& pool = *cfg.partner_pool;
  if (pool.cols() != x.size()) throw ShapeError("predict: partner pool dimension mismatch");
  Matrix inputs(cfg.S_test, x.size());
  for (int j = 0; j < cfg.S_test; ++j) {
    const auto p = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(pool.rows())));
    const double lam = sample_lambda(cfg.prior, rng);
    inputs.row(j) = mix(x, pool.row(p).transpose(), lam).transpose();
  }
  return forward(params, inputs).colwise().mean();
}

/// Class probabilities for one input. In dip mode the draws come from a
/// stream seeded by cfg.seed.
inline Vector predict(const ModelParams& params, const Vector& x, const PredictorConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.seed);
  return softmax_rows(predict_logits(params, x, cfg, rng)).row(0).transpose();
}

/// Log-probabilities for every row; row i uses the stream split from cfg.seed
/// at index i, so results do not depend on evaluation order.
inline Matrix predict_log_probs(const ModelParams& params, const Matrix& features, const PredictorConfig& cfg) {
  cfg.validate();
  if (cfg.mode == PredictMode::raw || cfg.prior.degenerate) return log_softmax_rows(forward(params, features));
  const RngStream base(cfg.seed);
  Matrix logits(features.rows(), params.output_dim());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    RngStream rng = base.split(static_cast<std::uint64_t>(i));
    logits.row(i) = predict_logits(params, features.row(i).transpose(), cfg, rng);
  }
  return log_softmax_rows(logits);
}

struct EvalResult {
  double accuracy;
  double misclassification_rate;
  double mean_loss;
};

/// Argmax accuracy (ties to the lowest class index) and mean cross-entropy of
/// the predicted probabilities.
inline EvalResult evaluate(const ModelParams& params, const Dataset& ds, const PredictorConfig& cfg) {
  ds.validate();
  if (ds.num_classes() != params.output_dim()) throw ShapeError("evaluate: class count does not match the model");
  const Matrix log_p = predict_log_probs(params, ds.features, cfg);
  const auto pred = argmax_rows(log_p);
  std::size_t correct = 0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const int y = ds.label_of(i);
    if (pred[static_cast<std::size_t>(i)] == y) ++correct;
    loss -= log_p(i, y);
  }
  const double n = static_cast<double>(ds.size());
  const double acc = static_cast<double>(correct) / n;
  return {acc, 1.0 - acc, loss / n};
}

/// Row-major grid: cell (r, c) sits at (xs[c], ys[r]), with ys ascending.
struct DecisionGrid {
  int resolution = 0;
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<int> classes;
  std::vector<double> max_prob;

  int num_classes = 0;
};

namespace detail {

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return v;
}

}  // namespace detail

inline DecisionGrid decision_grid(const ModelParams& params, const PredictorConfig& cfg, std::pair<double, double> x_range,
                                  std::pair<double, double> y_range, int resolution) {
  if (params.input_dim() != 2) throw ConfigError("decision_grid: only 2-D inputs are supported");
  if (resolution < 1) throw ConfigError("decision_grid: resolution must be >= 1");
  DecisionGrid g;
  g.resolution = resolution;
  g.num_classes = params.output_dim();
  g.xs = detail::linspace(x_range.first, x_range.second, resolution);
  g.ys = detail::linspace(y_range.first, y_range.second, resolution);
  Matrix cells(static_cast<Eigen::Index>(resolution) * resolution, 2);
  for (int r = 0; r < resolution; ++r)
    for (int c = 0; c < resolution; ++c) {
      cells(r * resolution + c, 0) = g.xs[static_cast<std::size_t>(c)];
      cells(r * resolution + c, 1) = g.ys[static_cast<std::size_t>(r)];
    }
  const Matrix log_p = predict_log_probs(params, cells, cfg);
  const auto pred = argmax_rows(log_p);
  g.classes = pred;
  g.max_prob.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    g.max_prob[i] = std::exp(log_p(static_cast<Eigen::Index>(i), pred[i]));
  return g;
}

inline void write_grid_csv(const DecisionGrid& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write grid CSV " + path);
  out << "x,y,class,prob\n";
  for (int r = 0; r < g.resolution; ++r)
    for (int c = 0; c < g.resolution; ++c) {
      const auto i = static_cast<std::size_t>(r * g.resolution + c);
      out << detail::format_double(g.xs[static_cast<std::size_t>(c)]) << ','
          << detail::format_double(g.ys[static_cast<std::size_t>(r)]) << ',' << g.classes[i] << ','
          << detail::format_double(g.max_prob[i]) << '\n';
    }
  if (!out) throw IoError("failed writing grid CSV " + path);
}

/// ASCII (P2) graymap of class indices; the top image row is the largest y.
inline void write_grid_pgm(const DecisionGrid& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write grid PGM " + path);
  out << "P2\n" << g.resolution << ' ' << g.resolution << '\n' << std::max(1, g.num_classes - 1) << '\n';
  for (int r = g.resolution - 1; r >= 0; --r) {
    for (int c = 0; c < g.resolution; ++c) {
      if (c) out << ' ';
      out << g.classes[static_cast<std::size_t>(r * g.resolution + c)];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing grid PGM " + path);
}

}  // namespace dip
