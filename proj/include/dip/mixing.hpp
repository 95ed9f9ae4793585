#pragma once

// Sample mixing: the mix function, the Beta prior over the mixing ratio and
// the choice of mixing partners.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dip/errors.hpp"
#include "dip/rng.hpp"

namespace dip {

enum class MixMode { none, label_mixing, label_preserving };
enum class PartnerStrategy { batch_permutation, dataset_uniform };

inline std::string to_string(MixMode m) {
  switch (m) {
    case MixMode::none: return "none";
    case MixMode::label_mixing: return "label_mixing";
    case MixMode::label_preserving: return "label_preserving";
  }
  return "?";
}

inline MixMode mix_mode_from_string(const std::string& s) {
  if (s == "none") return MixMode::none;
  if (s == "label_mixing") return MixMode::label_mixing;
  if (s == "label_preserving") return MixMode::label_preserving;
  throw ConfigError("unknown mix mode '" + s + "' (expected none, label_mixing or label_preserving)");
}

inline std::string to_string(PartnerStrategy p) {
  return p == PartnerStrategy::batch_permutation ? "batch_permutation" : "dataset_uniform";
}

inline PartnerStrategy partner_strategy_from_string(const std::string& s) {
  if (s == "batch_permutation") return PartnerStrategy::batch_permutation;
  if (s == "dataset_uniform") return PartnerStrategy::dataset_uniform;
  throw ConfigError("unknown partner strategy '" + s + "'");
}

/// Shape pair of the Beta prior on lambda. `degenerate` stands for the point
/// mass at lambda = 1, under which mixing is the identity.
struct BetaParams {
  double a = 1.0;
  double b = 1.0;
  bool degenerate = false;

  static BetaParams point_mass_at_one() { return {1.0, 0.0, true}; }

  void validate() const {
    if (degenerate) return;
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
      throw ConfigError("Beta prior needs a > 0 and b > 0");
  }

  double mean() const { return degenerate ? 1.0 : a / (a + b); }

  double variance() const {
    if (degenerate) return 0.0;
    const double s = a + b;
    return a * b / (s * s * (s + 1.0));
  }

  friend bool operator==(const BetaParams&, const BetaParams&) = default;
};

struct MixConfig {
  MixMode mode = MixMode::none;
  double alpha = 0.0;
  int S = 1;
  PartnerStrategy partner = PartnerStrategy::batch_permutation;

  void validate() const {
    if (mode == MixMode::none) return;
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0 when mixing is enabled");
    if (S < 1) throw ConfigError("S must be >= 1");
    if (mode == MixMode::label_mixing && S != 1) throw ConfigError("label_mixing training supports S = 1 only");
  }
};

/// lambda * x + (1 - lambda) * x_prime.
template <typename DerivedA, typename DerivedB>
Eigen::VectorXd mix(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& x_prime, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("mix: lambda must lie in [0, 1]");
  if (x.size() != x_prime.size()) throw ShapeError("mix: dimension mismatch");
  if (lambda == 1.0) return x;
  if (lambda == 0.0) return x_prime;
  return lambda * x + (1.0 - lambda) * x_prime;
}

/// Prior on lambda for a training mode: Beta(alpha+1, alpha) when labels are
/// preserved, Beta(alpha, alpha) when labels are mixed, point mass at 1 for none.
inline BetaParams lambda_prior(MixMode mode, double alpha) {
  if (mode == MixMode::none) return BetaParams::point_mass_at_one();
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("lambda_prior: alpha must be > 0 for mixing modes");
  if (mode == MixMode::label_preserving) return {alpha + 1.0, alpha, false};
  return {alpha, alpha, false};
}

/// Prior used at prediction time: Beta(alpha+1, alpha), or no mixing for alpha == 0.
inline BetaParams prediction_prior(double alpha) {
  if (alpha == 0.0) return BetaParams::point_mass_at_one();
  return lambda_prior(MixMode::label_preserving, alpha);
}

/// Gamma(shape, 1) by Marsaglia and Tsang; shape < 1 uses the
/// Gamma(shape + 1) * U^(1/shape) boost.
inline double sample_gamma(double shape, RngStream& rng) {
  if (!(shape > 0.0)) throw ConfigError("sample_gamma: shape must be > 0");
  if (shape < 1.0) {
    const double g = sample_gamma(shape + 1.0, rng);
    return g * std::pow(rng.uniform_open(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

/// Beta(a, b) draw as X / (X + Y) with X ~ Gamma(a), Y ~ Gamma(b), clamped to [0, 1].
inline double sample_lambda(const BetaParams& prior, RngStream& rng) {
  if (prior.degenerate) return 1.0;
  prior.validate();
  const double x = sample_gamma(prior.a, rng);
  const double y = sample_gamma(prior.b, rng);
  const double s = x + y;
  if (!(s > 0.0)) return prior.a >= prior.b ? 1.0 : 0.0;
  return std::clamp(x / s, 0.0, 1.0);
}

/// Partner indices for m examples. batch_permutation returns a uniform
/// permutation of 0..m-1 (n is the batch size); dataset_uniform returns m
/// i.i.d. uniform indices into 0..n-1.
inline std::vector<std::size_t> sample_partners(std::size_t n, std::size_t m, PartnerStrategy strategy,
                                                RngStream& rng) {
  if (n == 0) throw DataError("sample_partners: empty dataset");
  if (m == 0) throw ConfigError("sample_partners: m must be >= 1");
  std::vector<std::size_t> out(m);
  if (strategy == PartnerStrategy::batch_permutation) {
    if (m != n) throw ConfigError("sample_partners: batch_permutation needs m equal to the batch size");
    std::iota(out.begin(), out.end(), std::size_t{0});
    std::shuffle(out.begin(), out.end(), rng.engine());
  } else {
    for (auto& i : out) i = rng.index(n);
  }
  return out;
}

}  // namespace dip
