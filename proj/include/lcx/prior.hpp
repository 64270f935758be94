// SPDX-License-Identifier: Apache-2.0
//
// Parametric learning-curve prior: a weighted sum of three growth curves
// (pow3, Janoschek, ilog2) plus i.i.d. Gaussian observation noise.
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace lcx {

using Rng = std::mt19937_64;

inline constexpr int kDefaultHorizon = 100;
inline constexpr int kDefaultMaxRejects = 10000;

enum class BasisKind { pow3, janoschek, ilog2 };

/// c - a * t^(-alpha)
struct Pow3Params {
  double c = 0.0;
  double a = 0.0;
  double alpha = 1.0;

  friend bool operator==(const Pow3Params&, const Pow3Params&) = default;
};

/// alpha - (alpha - beta) * exp(-kappa * t^delta)
struct JanoschekParams {
  double alpha = 0.0;
  double beta = 0.0;
  double kappa = 1.0;
  double delta = 1.0;

  friend bool operator==(const JanoschekParams&, const JanoschekParams&) = default;
};

/// c - a / log(t + 1)
struct Ilog2Params {
  double c = 0.0;
  double a = 0.0;

  friend bool operator==(const Ilog2Params&, const Ilog2Params&) = default;
};

/// The 13 latent parameters of one prior curve. Weight order is
/// (pow3, janoschek, ilog2).
struct CurveConfiguration {
  static constexpr int kDim = 13;

  std::array<double, 3> w{0.0, 0.0, 0.0};
  Pow3Params pow3;
  JanoschekParams janoschek;
  Ilog2Params ilog2;
  double sigma2 = 1e-4;

  /// Flat layout: w0 w1 w2 | c a alpha | alpha beta kappa delta | c a | sigma2.
  std::array<double, kDim> flatten() const;
  static CurveConfiguration unflatten(std::span<const double> flat);

  friend bool operator==(const CurveConfiguration&, const CurveConfiguration&) = default;
};

/// Hyperparameters of the component priors. Normal entries are (mean, variance)
/// of the logarithm of the parameter.
namespace prior_table {
struct Uniform {
  double lo;
  double hi;
};
struct LogNormal {
  double mean;
  double variance;
};

inline constexpr Uniform kWeight{0.0, 1.0};
inline constexpr Uniform kPow3C{0.0, 1.25};
inline constexpr Uniform kPow3A{-0.6, 0.6};
inline constexpr LogNormal kPow3Alpha{0.0, 4.0};
inline constexpr Uniform kJanoschekAlpha{0.0, 1.0};
inline constexpr Uniform kJanoschekBeta{0.0, 2.0};
inline constexpr LogNormal kJanoschekKappa{-2.0, 1.0};
inline constexpr LogNormal kJanoschekDelta{0.0, 0.25};
inline constexpr Uniform kIlog2C{0.0, 1.0};
inline constexpr Uniform kIlog2A{-0.5, 0.5};
inline constexpr LogNormal kSigma2{-8.0, 2.0};
}  // namespace prior_table

struct PriorSample {
  CurveConfiguration config;
  std::vector<double> y;  // y[t-1] is the observation at step t
};

/// Basis-curve evaluation at step t >= 1. Throws a numeric Error on invalid
/// parameters (non-positive exponents / rates) or t < 1.
double eval_basis(const Pow3Params& p, int t);
double eval_basis(const JanoschekParams& p, int t);
double eval_basis(const Ilog2Params& p, int t);
double eval_basis(BasisKind kind, const CurveConfiguration& xi, int t);

double eval_comb(const CurveConfiguration& xi, int t);

/// f_comb evaluated on t = 1..m.
std::vector<double> comb_curve(const CurveConfiguration& xi, int m);

/// True when f_comb stays in [0,1] on t = 1..m and f_comb(1) < f_comb(m).
bool satisfies_curve_constraints(const CurveConfiguration& xi, int m);

/// Log prior density of xi (unnormalized only through the constraint
/// indicators). Returns -infinity outside the support.
double log_prior_density(const CurveConfiguration& xi, int m);

/// One unconstrained draw of every component, without the curve constraints.
CurveConfiguration draw_unconstrained(Rng& rng);

/// Rejection sampler over the constrained prior. Throws a numeric Error after
/// max_rejects failed draws.
CurveConfiguration sample_configuration(Rng& rng, int m, int max_rejects = kDefaultMaxRejects);

/// Noisy observations y_t = f_comb(t) + eps_t, eps_t ~ N(0, sigma2). Not clipped.
PriorSample sample_curve(Rng& rng, const CurveConfiguration& xi, int m);

/// Configuration and curve in one call.
PriorSample sample_prior_curve(Rng& rng, int m, int max_rejects = kDefaultMaxRejects);

/// Gaussian log-likelihood of the first T observations.
double log_likelihood(const CurveConfiguration& xi, std::span<const double> y_prefix, int T);

}  // namespace lcx
