// SPDX-License-Identifier: Apache-2.0
#include "lcx/prior.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "lcx/error.hpp"

namespace lcx {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_step(int t) {
  if (t < 1) throw_numeric("basis curves are defined for t >= 1, got t=" + std::to_string(t));
}

bool in_support(double x, prior_table::Uniform u) { return std::isfinite(x) && x >= u.lo && x <= u.hi; }

double log_uniform(prior_table::Uniform u) { return -std::log(u.hi - u.lo); }

// Density of x where log(x) ~ N(mean, variance).
double log_lognormal(double x, prior_table::LogNormal ln) {
  const double z = std::log(x) - ln.mean;
  return -std::log(x) - 0.5 * std::log(2.0 * std::numbers::pi * ln.variance) - 0.5 * z * z / ln.variance;
}

double draw_uniform(Rng& rng, prior_table::Uniform u) {
  return std::uniform_real_distribution<double>(u.lo, u.hi)(rng);
}

double draw_lognormal(Rng& rng, prior_table::LogNormal ln) {
  return std::exp(std::normal_distribution<double>(ln.mean, std::sqrt(ln.variance))(rng));
}

}  // namespace

std::array<double, CurveConfiguration::kDim> CurveConfiguration::flatten() const {
  return {w[0],        w[1],           w[2],           pow3.c,  pow3.a,  pow3.alpha, janoschek.alpha,
          janoschek.beta, janoschek.kappa, janoschek.delta, ilog2.c, ilog2.a, sigma2};
}

CurveConfiguration CurveConfiguration::unflatten(std::span<const double> flat) {
  if (flat.size() != kDim) throw_numeric("configuration vector must have 13 entries");
  CurveConfiguration xi;
  xi.w = {flat[0], flat[1], flat[2]};
  xi.pow3 = {flat[3], flat[4], flat[5]};
  xi.janoschek = {flat[6], flat[7], flat[8], flat[9]};
  xi.ilog2 = {flat[10], flat[11]};
  xi.sigma2 = flat[12];
  return xi;
}

double eval_basis(const Pow3Params& p, int t) {
  require_step(t);
  if (!(p.alpha > 0.0)) throw_numeric("pow3 requires alpha > 0");
  return p.c - p.a * std::pow(static_cast<double>(t), -p.alpha);
}

double eval_basis(const JanoschekParams& p, int t) {
  require_step(t);
  if (!(p.kappa > 0.0) || !(p.delta > 0.0)) throw_numeric("janoschek requires kappa > 0 and delta > 0");
  return p.alpha - (p.alpha - p.beta) * std::exp(-p.kappa * std::pow(static_cast<double>(t), p.delta));
}

double eval_basis(const Ilog2Params& p, int t) {
  require_step(t);
  return p.c - p.a / std::log(static_cast<double>(t) + 1.0);
}

double eval_basis(BasisKind kind, const CurveConfiguration& xi, int t) {
  switch (kind) {
    case BasisKind::pow3:
      return eval_basis(xi.pow3, t);
    case BasisKind::janoschek:
      return eval_basis(xi.janoschek, t);
    case BasisKind::ilog2:
      return eval_basis(xi.ilog2, t);
  }
  throw_numeric("unknown basis kind");
}

double eval_comb(const CurveConfiguration& xi, int t) {
  return xi.w[0] * eval_basis(xi.pow3, t) + xi.w[1] * eval_basis(xi.janoschek, t) +
         xi.w[2] * eval_basis(xi.ilog2, t);
}

std::vector<double> comb_curve(const CurveConfiguration& xi, int m) {
  std::vector<double> f(static_cast<size_t>(m));
  for (int t = 1; t <= m; ++t) f[static_cast<size_t>(t - 1)] = eval_comb(xi, t);
  return f;
}

bool satisfies_curve_constraints(const CurveConfiguration& xi, int m) {
  double first = 0.0;
  double last = 0.0;
  for (int t = 1; t <= m; ++t) {
    const double f = eval_comb(xi, t);
    if (!(f >= 0.0 && f <= 1.0)) return false;
    if (t == 1) first = f;
    if (t == m) last = f;
  }
  return first < last;
}

double log_prior_density(const CurveConfiguration& xi, int m) {
  using namespace prior_table;
  for (double w : xi.w)
    if (!in_support(w, kWeight)) return kNegInf;
  if (!in_support(xi.pow3.c, kPow3C) || !in_support(xi.pow3.a, kPow3A)) return kNegInf;
  if (!in_support(xi.janoschek.alpha, kJanoschekAlpha) || !in_support(xi.janoschek.beta, kJanoschekBeta))
    return kNegInf;
  if (!in_support(xi.ilog2.c, kIlog2C) || !in_support(xi.ilog2.a, kIlog2A)) return kNegInf;
  for (double positive : {xi.pow3.alpha, xi.janoschek.kappa, xi.janoschek.delta, xi.sigma2})
    if (!(positive > 0.0) || !std::isfinite(positive)) return kNegInf;
  if (!satisfies_curve_constraints(xi, m)) return kNegInf;

  double lp = 3.0 * log_uniform(kWeight);
  lp += log_uniform(kPow3C) + log_uniform(kPow3A) + log_lognormal(xi.pow3.alpha, kPow3Alpha);
  lp += log_uniform(kJanoschekAlpha) + log_uniform(kJanoschekBeta) +
        log_lognormal(xi.janoschek.kappa, kJanoschekKappa) + log_lognormal(xi.janoschek.delta, kJanoschekDelta);
  lp += log_uniform(kIlog2C) + log_uniform(kIlog2A);
  lp += log_lognormal(xi.sigma2, kSigma2);
  return lp;
}

CurveConfiguration draw_unconstrained(Rng& rng) {
  using namespace prior_table;
  CurveConfiguration xi;
  for (double& w : xi.w) w = draw_uniform(rng, kWeight);
  xi.pow3 = {draw_uniform(rng, kPow3C), draw_uniform(rng, kPow3A), draw_lognormal(rng, kPow3Alpha)};
  xi.janoschek = {draw_uniform(rng, kJanoschekAlpha), draw_uniform(rng, kJanoschekBeta),
                  draw_lognormal(rng, kJanoschekKappa), draw_lognormal(rng, kJanoschekDelta)};
  xi.ilog2 = {draw_uniform(rng, kIlog2C), draw_uniform(rng, kIlog2A)};
  xi.sigma2 = draw_lognormal(rng, kSigma2);
  return xi;
}

CurveConfiguration sample_configuration(Rng& rng, int m, int max_rejects) {
  if (max_rejects < 1) throw_config("max_rejects must be >= 1");
  if (m < 2) throw_config("curve horizon m must be >= 2");
  for (int attempt = 0; attempt < max_rejects; ++attempt) {
    CurveConfiguration xi = draw_unconstrained(rng);
    if (satisfies_curve_constraints(xi, m)) return xi;
  }
  throw_numeric("prior rejection budget exhausted after " + std::to_string(max_rejects) + " draws");
}

PriorSample sample_curve(Rng& rng, const CurveConfiguration& xi, int m) {
  PriorSample sample{xi, comb_curve(xi, m)};
  if (xi.sigma2 > 0.0) {
    std::normal_distribution<double> noise(0.0, std::sqrt(xi.sigma2));
    for (double& y : sample.y) y += noise(rng);
  }
  return sample;
}

PriorSample sample_prior_curve(Rng& rng, int m, int max_rejects) {
  const CurveConfiguration xi = sample_configuration(rng, m, max_rejects);
  return sample_curve(rng, xi, m);
}

double log_likelihood(const CurveConfiguration& xi, std::span<const double> y_prefix, int T) {
  if (T < 1 || static_cast<size_t>(T) > y_prefix.size()) throw_numeric("log_likelihood requires 1 <= T <= len(y)");
  if (!(xi.sigma2 > 0.0)) throw_numeric("log_likelihood requires sigma2 > 0");
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * xi.sigma2);
  double ll = 0.0;
  for (int t = 1; t <= T; ++t) {
    const double r = y_prefix[static_cast<size_t>(t - 1)] - eval_comb(xi, t);
    ll += log_norm - 0.5 * r * r / xi.sigma2;
  }
  return ll;
}

}  // namespace lcx
