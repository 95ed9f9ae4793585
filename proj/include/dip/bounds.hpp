#pragma once

// Rademacher-complexity bound for mixing classifiers, evaluated as a data
// functional:
//   R_n(loss o F) <= rho * C_H / sqrt(n) *
//                    sqrt(C * mean_i |x_i|^2 + (1 - C) * |mean_i x_i|^2),
// with C = E[lambda^2 + (1 - lambda)^2] under the mixing prior, combined with
// the standard bounded-loss generalization bound
//   L(f) <= L_hat(f) + 2 R_n(loss o F) + 3 B sqrt(log(2 / delta) / (2 n)).

#include <cmath>
#include <utility>

#include "json.hpp"

#include "dip/errors.hpp"
#include "dip/mixing.hpp"
#include "dip/objective.hpp"
#include "dip/predictor.hpp"
#include "dip/rng.hpp"

namespace dip {

/// E[lambda^2 + (1 - lambda)^2] = 1 - 2ab / ((a + b)(a + b + 1)).
inline double c_lambda_closed(const BetaParams& prior) {
  if (prior.degenerate) return 1.0;
  prior.validate();
  const double s = prior.a + prior.b;
  return 1.0 - 2.0 * prior.a * prior.b / (s * (s + 1.0));
}

inline LossEstimate c_lambda_mc(const BetaParams& prior, int n_samples, RngStream& rng) {
  if (n_samples < 1) throw ConfigError("c_lambda_mc: n_samples must be >= 1");
  if (prior.degenerate) return {1.0, 0.0, n_samples};
  std::vector<double> v(static_cast<std::size_t>(n_samples));
  for (auto& s : v) {
    const double l = sample_lambda(prior, rng);
    s = l * l + (1.0 - l) * (1.0 - l);
  }
  return summarize(v);
}

struct Bracket {
  double bracket;
  double mean_sq_norm;
  double sq_norm_mean;
};

inline Bracket rademacher_bracket(const Matrix& features, double c_lambda) {
  if (features.rows() < 1) throw DataError("rademacher_bracket: empty dataset");
  if (!(c_lambda >= 0.0 && c_lambda <= 1.0)) throw DomainError("rademacher_bracket: c_lambda must be in [0, 1]");
  const double n = static_cast<double>(features.rows());
  const double mean_sq_norm = features.rowwise().squaredNorm().sum() / n;
  const double sq_norm_mean = (features.colwise().sum() / n).squaredNorm();
  // Jensen: mean |x|^2 >= |mean x|^2, up to rounding
  if (mean_sq_norm < sq_norm_mean * (1.0 - 1e-12) - 1e-300)
    throw NumericError("rademacher_bracket: mean squared norm below squared norm of the mean");
  const double inner = c_lambda * mean_sq_norm + (1.0 - c_lambda) * sq_norm_mean;
  return {std::sqrt(std::max(0.0, inner)), mean_sq_norm, sq_norm_mean};
}

struct BoundReport {
  BetaParams prior;
  double c_lambda = 1.0;
  double mean_sq_norm = 0.0;
  double sq_norm_mean = 0.0;
  double bracket = 0.0;
  double rho = 1.0;
  double c_h = 1.0;
  long long n = 0;
  double rad_bound = 0.0;
  double delta = 0.05;
  double confidence_term = 0.0;
  double loss_bound_B = 10.0;
};

inline BoundReport bound_report(const Matrix& features, const BetaParams& prior, double rho, double c_h, double B,
                                double delta) {
  if (!(rho > 0.0) || !(c_h > 0.0) || !(B > 0.0)) throw ConfigError("bound_report: rho, c_h and B must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("bound_report: delta must be in (0, 1)");
  BoundReport r;
  r.prior = prior;
  r.c_lambda = c_lambda_closed(prior);
  const auto br = rademacher_bracket(features, r.c_lambda);
  r.mean_sq_norm = br.mean_sq_norm;
  r.sq_norm_mean = br.sq_norm_mean;
  r.bracket = br.bracket;
  r.rho = rho;
  r.c_h = c_h;
  r.n = static_cast<long long>(features.rows());
  const double n = static_cast<double>(r.n);
  r.rad_bound = rho * c_h / std::sqrt(n) * r.bracket;
  r.delta = delta;
  r.loss_bound_B = B;
  r.confidence_term = 3.0 * B * std::sqrt(std::log(2.0 / delta) / (2.0 * n));
  return r;
}

inline nlohmann::json to_json(const BoundReport& r) {
  nlohmann::json prior;
  if (r.prior.degenerate)
    prior = {{"kind", "point_mass_at_one"}};
  else
    prior = {{"kind", "beta"}, {"a", r.prior.a}, {"b", r.prior.b}};
  return {{"prior", prior},
          {"c_lambda", r.c_lambda},
          {"mean_sq_norm", r.mean_sq_norm},
          {"sq_norm_mean", r.sq_norm_mean},
          {"bracket", r.bracket},
          {"rho", r.rho},
          {"c_h", r.c_h},
          {"n", r.n},
          {"rad_bound", r.rad_bound},
          {"delta", r.delta},
          {"confidence_term", r.confidence_term},
          {"loss_bound_B", r.loss_bound_B},
          {"generalization_slack", 2.0 * r.rad_bound + r.confidence_term}};
}

/// Test minus train misclassification rate.
inline double generalization_gap(const EvalResult& train_eval, const EvalResult& test_eval) {
  return test_eval.misclassification_rate - train_eval.misclassification_rate;
}

}  // namespace dip
