#pragma once

// Independent reference computations used only by the tests.

#include <algorithm>
#include <cmath>
#include <functional>

#include "dip/data.hpp"
#include "dip/mixing.hpp"
#include "dip/quadrature.hpp"
#include "dip/tensor_nn.hpp"

namespace dip::oracle {

/// Central finite differences of `loss` with respect to every parameter.
inline ParamGrads finite_difference_grads(const ModelParams& params, const std::function<double(const ModelParams&)>& loss,
                                          double eps = 1e-5) {
  ParamGrads g = ParamGrads::zeros_like(params);
  ModelParams p = params;
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    for (Eigen::Index i = 0; i < p.weights[l].size(); ++i) {
      const double orig = p.weights[l].data()[i];
      p.weights[l].data()[i] = orig + eps;
      const double up = loss(p);
      p.weights[l].data()[i] = orig - eps;
      const double down = loss(p);
      p.weights[l].data()[i] = orig;
      g.weights[l].data()[i] = (up - down) / (2.0 * eps);
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) {
      const double orig = p.biases[l](i);
      p.biases[l](i) = orig + eps;
      const double up = loss(p);
      p.biases[l](i) = orig - eps;
      const double down = loss(p);
      p.biases[l](i) = orig;
      g.biases[l](i) = (up - down) / (2.0 * eps);
    }
  }
  return g;
}

/// max |a - n| / max(|a|, |n|, floor) over all entries.
inline double max_relative_error(const ParamGrads& analytic, const ParamGrads& numeric, double floor = 1e-6) {
  double worst = 0.0;
  const auto visit = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& n) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double x = a.data()[i], y = n.data()[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
  };
  for (std::size_t l = 0; l < analytic.weights.size(); ++l) {
    visit(analytic.weights[l], numeric.weights[l]);
    visit(analytic.biases[l], numeric.biases[l]);
  }
  return worst;
}

/// Exact marginalized empirical risk for small n:
/// (1/n) sum_i xent(E_{lambda, x'}[h(mix(x_i, x', lambda))], y_i), with x'
/// uniform over the dataset and lambda integrated by Gauss-Legendre.
inline double marginalized_risk_quadrature(const ModelParams& params, const Dataset& ds, const BetaParams& prior,
                                           int nodes = 200) {
  const auto rule = gauss_legendre_unit(nodes);
  const Eigen::Index n = ds.size();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n, params.output_dim());
  Eigen::MatrixXd inputs(n * n, ds.dim());
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double lam = rule.nodes[q];
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k)
        inputs.row(i * n + k) = lam * ds.features.row(i) + (1.0 - lam) * ds.features.row(k);
    const Eigen::MatrixXd logits = forward(params, inputs);
    const double w = rule.weights[q] * beta_pdf(lam, prior) / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) f.row(i) += w * logits.middleRows(i * n, n).colwise().sum();
  }
  return softmax_xent(f, ds.labels).loss;
}

/// Uniformly random dense net with weights of the given scale.
inline ModelParams random_params(const std::vector<int>& sizes, Activation act, std::uint64_t seed, double scale = 1.0) {
  ModelParams p = mlp_init(sizes, act, seed);
  RngStream rng(seed + 1000);
  for (auto& w : p.weights) w *= scale;
  for (auto& b : p.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = scale * 0.3 * rng.normal();
  return p;
}

}  // namespace dip::oracle
