#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dip/errors.hpp"
#include "dip/mixing.hpp"

namespace dip {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule mapped to [0, 1]. Nodes come from Newton iteration on
/// P_n started at the Chebyshev guess; the rule is symmetric about 1/2.
inline QuadratureRule gauss_legendre_unit(int n) {
  if (n < 1) throw ConfigError("gauss_legendre_unit: need at least one node");
  QuadratureRule rule;
  rule.nodes.assign(static_cast<std::size_t>(n), 0.0);
  rule.weights.assign(static_cast<std::size_t>(n), 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    if (n == 1) dp = 1.0;
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    // map [-1, 1] -> [0, 1]; mirror pairs share a weight
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    rule.nodes[lo] = 0.5 * (1.0 - x);
    rule.nodes[hi] = 0.5 * (1.0 + x);
    rule.weights[lo] = 0.5 * w;
    rule.weights[hi] = 0.5 * w;
  }
  return rule;
}

inline double log_beta_function(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

/// Beta(a, b) density at lambda; zero outside the open unit interval.
inline double beta_pdf(double lambda, const BetaParams& prior) {
  if (prior.degenerate) throw DomainError("beta_pdf: point mass has no density");
  if (lambda <= 0.0 || lambda >= 1.0) return 0.0;
  return std::exp((prior.a - 1.0) * std::log(lambda) + (prior.b - 1.0) * std::log1p(-lambda) -
                  log_beta_function(prior.a, prior.b));
}

}  // namespace dip
