#pragma once

// Training objectives for mixing classifiers:
//  - plain empirical risk (no mixing),
//  - label-mixing (Mixup) loss on mixed inputs with mixed soft labels,
//  - the label-preserving S-sample upper bound, where the S mixed forwards of
//    each example are averaged in logit space before the loss,
// together with brute-force checks of the label-mixing/label-preserving
// equivalence and of the ordering of the S-sample bounds, and the training loop.

#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dip/data.hpp"
#include "dip/errors.hpp"
#include "dip/mixing.hpp"
#include "dip/quadrature.hpp"
#include "dip/rng.hpp"
#include "dip/tensor_nn.hpp"

namespace dip {

struct LossEstimate {
  double value = 0.0;
  double std_error = 0.0;
  int n_reps = 1;
};

inline LossEstimate summarize(const std::vector<double>& samples) {
  if (samples.empty()) throw ConfigError("summarize: no samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double s : samples) mean += s;
  mean /= n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  const double se = samples.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {mean, se, static_cast<int>(samples.size())};
}

/// Per-example (lambda, partner) table. Entry i * S + j is the j-th draw for
/// example i; partner indexes rows of whatever partner source is in use.
struct MixDraws {
  int S = 1;
  std::vector<double> lambda;
  std::vector<std::size_t> partner;

  std::size_t examples() const { return lambda.size() / static_cast<std::size_t>(S); }
};

/// Draws S partner lists (each a full permutation of the batch or i.i.d.
/// indices into the pool) followed by one lambda per (example, draw).
inline MixDraws draw_mix(const BetaParams& prior, std::size_t m, std::size_t pool_size, int S,
                         PartnerStrategy strategy, RngStream& rng) {
  if (S < 1) throw ConfigError("draw_mix: S must be >= 1");
  MixDraws d;
  d.S = S;
  const auto total = m * static_cast<std::size_t>(S);
  d.lambda.resize(total);
  d.partner.resize(total);
  for (int j = 0; j < S; ++j) {
    const auto p = sample_partners(strategy == PartnerStrategy::batch_permutation ? m : pool_size, m, strategy, rng);
    for (std::size_t i = 0; i < m; ++i) d.partner[i * static_cast<std::size_t>(S) + static_cast<std::size_t>(j)] = p[i];
  }
  for (auto& l : d.lambda) l = sample_lambda(prior, rng);
  return d;
}

/// Rows i * S + j hold mix(x_i, partner_features[partner_ij], lambda_ij).
inline Matrix mixed_inputs(const Matrix& features, const Matrix& partner_features, const MixDraws& draws) {
  if (features.cols() != partner_features.cols()) throw ShapeError("mixed_inputs: partner dimension mismatch");
  const auto m = static_cast<std::size_t>(features.rows());
  if (draws.examples() != m) throw ShapeError("mixed_inputs: draw table does not match the batch");
  const auto S = static_cast<std::size_t>(draws.S);
  Matrix out(static_cast<Eigen::Index>(m * S), features.cols());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < S; ++j) {
      const std::size_t e = i * S + j;
      const auto p = static_cast<Eigen::Index>(draws.partner[e]);
      if (p >= partner_features.rows()) throw ShapeError("mixed_inputs: partner index out of range");
      out.row(static_cast<Eigen::Index>(e)) =
          mix(features.row(static_cast<Eigen::Index>(i)).transpose(), partner_features.row(p).transpose(), draws.lambda[e])
              .transpose();
    }
  }
  return out;
}

/// Mean of each consecutive group of S rows.
inline Matrix average_groups(const Matrix& rows, int S) {
  const Eigen::Index m = rows.rows() / S;
  Matrix out(m, rows.cols());
  for (Eigen::Index i = 0; i < m; ++i) out.row(i) = rows.middleRows(i * S, S).colwise().mean();
  return out;
}

inline double plain_loss(const ModelParams& params, const Batch& batch) {
  validate_batch(params, batch);
  return softmax_xent(forward(params, batch.features), batch.soft_labels).loss;
}

inline LossAndGrad plain_loss_grad(const ModelParams& params, const Batch& batch) { return backward(params, batch); }

/// Label-preserving S-sample bound for fixed draws:
/// mean_i xent((1/S) sum_j h(mix(x_i, x'_ij, lambda_ij)), y_i).
inline LossAndGrad dip_preserving_loss_grad(const ModelParams& params, const Batch& batch,
                                            const Matrix& partner_features, const MixDraws& draws) {
  validate_batch(params, batch);
  const Matrix inputs = mixed_inputs(batch.features, partner_features, draws);
  ForwardCache cache;
  const Matrix logits = forward(params, inputs, &cache);
  const Matrix averaged = average_groups(logits, draws.S);
  auto [loss, dmean] = softmax_xent(averaged, batch.soft_labels);
  Matrix dlogits(logits.rows(), logits.cols());
  const double inv_s = 1.0 / draws.S;
  for (Eigen::Index i = 0; i < averaged.rows(); ++i)
    for (int j = 0; j < draws.S; ++j) dlogits.row(i * draws.S + j) = dmean.row(i) * inv_s;
  return {loss, backward_from_logits(params, cache, dlogits)};
}

/// Label-mixing loss for fixed S = 1 draws: xent(h(mix(x, x', lambda)), lambda y + (1 - lambda) y').
inline LossAndGrad mixup_loss_grad(const ModelParams& params, const Batch& batch, const Matrix& partner_features,
                                   const Matrix& partner_labels, const MixDraws& draws) {
  validate_batch(params, batch);
  if (draws.S != 1) throw ConfigError("label-mixing loss uses a single draw per example");
  if (partner_labels.rows() != partner_features.rows() || partner_labels.cols() != batch.soft_labels.cols())
    throw ShapeError("mixup: partner labels do not match partner features");
  Batch mixed;
  mixed.features = mixed_inputs(batch.features, partner_features, draws);
  mixed.soft_labels.resize(batch.soft_labels.rows(), batch.soft_labels.cols());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const double l = draws.lambda[static_cast<std::size_t>(i)];
    const auto p = static_cast<Eigen::Index>(draws.partner[static_cast<std::size_t>(i)]);
    mixed.soft_labels.row(i) = l * batch.soft_labels.row(i) + (1.0 - l) * partner_labels.row(p);
  }
  return backward(params, mixed);
}

/// One stochastic evaluation of the label-preserving bound; partners come
/// from the batch itself.
inline double dip_loss_preserving(const ModelParams& params, const Batch& batch, const MixConfig& cfg, RngStream& rng) {
  cfg.validate();
  if (cfg.mode != MixMode::label_preserving) throw ConfigError("dip_loss_preserving needs mode label_preserving");
  const auto m = static_cast<std::size_t>(batch.size());
  const auto draws = draw_mix(lambda_prior(cfg.mode, cfg.alpha), m, m, cfg.S, cfg.partner, rng);
  return dip_preserving_loss_grad(params, batch, batch.features, draws).loss;
}

/// One stochastic evaluation of the Mixup loss: lambda ~ Beta(alpha, alpha)
/// per example, partners by in-batch permutation.
inline double mixup_loss(const ModelParams& params, const Batch& batch, double alpha, RngStream& rng) {
  if (!(alpha > 0.0)) throw ConfigError("mixup_loss: alpha must be > 0");
  const auto m = static_cast<std::size_t>(batch.size());
  const auto draws = draw_mix(lambda_prior(MixMode::label_mixing, alpha), m, m, 1, PartnerStrategy::batch_permutation, rng);
  return mixup_loss_grad(params, batch, batch.features, batch.soft_labels, draws).loss;
}

/// Loss of a single example given its logits and (soft) label row.
using RowLoss = std::function<double(const RowVector& logits, const RowVector& label)>;

inline double xent_row(const RowVector& logits, const RowVector& label) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return -(label.array() * (logits.array() - lse)).sum();
}

struct Prop1Result {
  double lhs;
  double rhs;
  double abs_diff;
};

inline constexpr Eigen::Index kProp1MaxSamples = 32;

/// Brute-force comparison of the label-mixing risk under Beta(alpha, alpha)
/// with the label-preserving risk under Beta(alpha+1, alpha), over all n^2
/// ordered pairs, integrating lambda by Gauss-Legendre with the Beta density
/// in the integrand. The two agree whenever `loss` is linear in the label.
inline Prop1Result prop1_check(const ModelParams& params, const Dataset& ds, double alpha, int quad_nodes,
                               const RowLoss& loss = xent_row) {
  if (ds.size() < 1) throw DataError("prop1_check: empty dataset");
  if (ds.size() > kProp1MaxSamples) throw ConfigError("prop1_check: at most 32 samples (the check is quadratic)");
  if (quad_nodes < 64) throw ConfigError("prop1_check: need at least 64 quadrature nodes");
  if (!(alpha >= 0.5)) throw ConfigError("prop1_check: alpha must be >= 0.5");
  const BetaParams mixing = lambda_prior(MixMode::label_mixing, alpha);
  const BetaParams preserving = lambda_prior(MixMode::label_preserving, alpha);
  const auto rule = gauss_legendre_unit(quad_nodes);
  const Eigen::Index n = ds.size();

  double lhs = 0.0, rhs = 0.0;
  Matrix inputs(n * n, ds.dim());
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double lam = rule.nodes[q];
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k)
        inputs.row(i * n + k) = mix(ds.features.row(i).transpose(), ds.features.row(k).transpose(), lam).transpose();
    const Matrix logits = forward(params, inputs);
    double mixed_sum = 0.0, kept_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        const RowVector z = logits.row(i * n + k);
        const RowVector y_mix = lam * ds.labels.row(i) + (1.0 - lam) * ds.labels.row(k);
        mixed_sum += loss(z, y_mix);
        kept_sum += loss(z, ds.labels.row(i));
      }
    }
    lhs += rule.weights[q] * beta_pdf(lam, mixing) * mixed_sum;
    rhs += rule.weights[q] * beta_pdf(lam, preserving) * kept_sum;
  }
  const double pairs = static_cast<double>(n * n);
  lhs /= pairs;
  rhs /= pairs;
  return {lhs, rhs, std::abs(lhs - rhs)};
}

/// Value of the S-sample bound on a whole dataset for fixed draws, with an
/// arbitrary per-example loss on the averaged logits.
inline double upper_bound_value(const ModelParams& params, const Dataset& ds, const MixDraws& draws,
                                const RowLoss& loss = xent_row) {
  const Matrix logits = forward(params, mixed_inputs(ds.features, ds.features, draws));
  const Matrix averaged = average_groups(logits, draws.S);
  double total = 0.0;
  for (Eigen::Index i = 0; i < averaged.rows(); ++i) total += loss(averaged.row(i), ds.labels.row(i));
  return total / static_cast<double>(averaged.rows());
}

struct JensenReport {
  std::vector<int> S_values;
  std::vector<LossEstimate> estimates;
  /// Large-S stand-in for the marginalized risk itself.
  LossEstimate limit_proxy;
  int proxy_S = 0;
};

/// Monte-Carlo estimates of the S-sample bound for each S in `S_list`, over
/// `reps` independent draw tables with partners drawn uniformly from `ds`
/// and lambda from Beta(alpha+1, alpha).
inline JensenReport jensen_check(const ModelParams& params, const Dataset& ds, double alpha,
                                 const std::vector<int>& S_list, int reps, RngStream& rng,
                                 const RowLoss& loss = xent_row, int proxy_S = 256, int proxy_reps = 20) {
  if (reps < 1) throw ConfigError("jensen_check: reps must be >= 1");
  if (S_list.empty()) throw ConfigError("jensen_check: empty S list");
  const BetaParams prior = lambda_prior(MixMode::label_preserving, alpha);
  const auto n = static_cast<std::size_t>(ds.size());
  JensenReport report;
  for (std::size_t s = 0; s < S_list.size(); ++s) {
    RngStream stream = rng.split(s);
    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(reps));
    for (int r = 0; r < reps; ++r) {
      const auto draws = draw_mix(prior, n, n, S_list[s], PartnerStrategy::dataset_uniform, stream);
      samples.push_back(upper_bound_value(params, ds, draws, loss));
    }
    report.S_values.push_back(S_list[s]);
    report.estimates.push_back(summarize(samples));
  }
  if (proxy_S > 0 && proxy_reps > 0) {
    RngStream stream = rng.split(S_list.size());
    std::vector<double> samples;
    for (int r = 0; r < proxy_reps; ++r) {
      const auto draws = draw_mix(prior, n, n, proxy_S, PartnerStrategy::dataset_uniform, stream);
      samples.push_back(upper_bound_value(params, ds, draws, loss));
    }
    report.limit_proxy = summarize(samples);
    report.proxy_S = proxy_S;
  }
  return report;
}

/// Loss and gradient of the objective selected by `cfg` on one mini-batch.
/// `pool` supplies partners for dataset_uniform; batch_permutation mixes
/// within the batch.
inline LossAndGrad objective_loss_grad(const ModelParams& params, const Batch& batch, const MixConfig& cfg,
                                       const Dataset& pool, RngStream& rng) {
  if (cfg.mode == MixMode::none) return plain_loss_grad(params, batch);
  const auto m = static_cast<std::size_t>(batch.size());
  const bool in_batch = cfg.partner == PartnerStrategy::batch_permutation;
  const Matrix& pf = in_batch ? batch.features : pool.features;
  const Matrix& pl = in_batch ? batch.soft_labels : pool.labels;
  const auto draws = draw_mix(lambda_prior(cfg.mode, cfg.alpha), m, static_cast<std::size_t>(pf.rows()),
                              cfg.mode == MixMode::label_mixing ? 1 : cfg.S, cfg.partner, rng);
  if (cfg.mode == MixMode::label_mixing) return mixup_loss_grad(params, batch, pf, pl, draws);
  return dip_preserving_loss_grad(params, batch, pf, draws);
}

struct EpochMetrics {
  int epoch;
  double train_loss;
  double train_acc;
  double lr;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochMetrics> metrics;
};

inline double accuracy(const ModelParams& params, const Dataset& ds) {
  const auto pred = argmax_rows(forward(params, ds.features));
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i)
    if (pred[static_cast<std::size_t>(i)] == ds.label_of(i)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

/// Mini-batch training with per-epoch reshuffling. Epochs are numbered from 1;
/// train_loss is the example-weighted mean of the optimized objective over the
/// epoch and train_acc is measured on the unmixed training features.
inline TrainResult train(ModelParams params, const Dataset& train_set, const MixConfig& cfg, OptimState& optim,
                         int epochs, int batch_size, RngStream& rng) {
  validate_params(params);
  train_set.validate();
  cfg.validate();
  optim.validate();
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1 || batch_size > train_set.size()) throw ConfigError("batch_size must be in [1, n]");
  if (train_set.dim() != params.input_dim()) throw ConfigError("model input size does not match the data dimension");
  if (train_set.num_classes() != params.output_dim())
    throw ConfigError("model output size does not match the number of classes");

  const auto n = static_cast<std::size_t>(train_set.size());
  TrainResult result;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    auto order = sample_partners(n, n, PartnerStrategy::batch_permutation, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Dataset part = subset(train_set, rows);
      const Batch batch{part.features, part.labels};
      const auto lg = objective_loss_grad(params, batch, cfg, train_set, rng);
      sgd_step(params, lg.grads, optim, epoch);
      loss_sum += lg.loss * static_cast<double>(rows.size());
    }
    result.metrics.push_back({epoch, loss_sum / static_cast<double>(n), accuracy(params, train_set), optim.lr_at(epoch)});
  }
  result.params = std::move(params);
  return result;
}

inline void write_metrics_csv(const std::vector<EpochMetrics>& metrics, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write metrics file " + path);
  out << "epoch,train_loss,train_acc,lr\n";
  for (const auto& m : metrics)
    out << m.epoch << ',' << detail::format_double(m.train_loss) << ',' << detail::format_double(m.train_acc) << ','
        << detail::format_double(m.lr) << '\n';
  if (!out) throw IoError("failed writing metrics file " + path);
}

}  // namespace dip
