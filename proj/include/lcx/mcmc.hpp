// SPDX-License-Identifier: Apache-2.0
//
// Affine-invariant ensemble sampling of the curve posterior given a prefix,
// and the Gaussian-mixture PPD it induces.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lcx/mixture_ppd.hpp"
#include "lcx/predictive.hpp"
#include "lcx/prior.hpp"

namespace lcx::mcmc {

inline constexpr int kDim = CurveConfiguration::kDim;

enum class InitStrategy { lse, map, fixed_default };

InitStrategy parse_init_strategy(const std::string& name);
std::string to_string(InitStrategy init);

struct ChainConfig {
  int nwalkers = 100;
  int nsamples = 2000;  // post-burn-in sweeps per walker
  int burn_in = 500;
  int thin = 1;
  double stretch_scale = 2.0;
  InitStrategy init = InitStrategy::lse;
  std::uint64_t seed = 0;

  /// Throws a config Error unless nwalkers >= 26, nsamples >= 1, thin >= 1 and
  /// stretch_scale > 1.
  void validate() const;
};

struct PosteriorEnsemble {
  std::vector<CurveConfiguration> samples;
  double acceptance_rate = 0.0;
};

/// log p(xi) + log p(y_1..y_T | xi); -infinity outside the prior support.
double log_posterior(const CurveConfiguration& xi, std::span<const double> y_prefix, int T, int m);

// ---------------------------------------------------------------------------
// Generic ensemble machinery (usable with any log density).

using LogDensity = std::function<double(std::span<const double>)>;

class WalkerEnsemble {
 public:
  WalkerEnsemble(int nwalkers, int dim) : nwalkers_(nwalkers), dim_(dim), pos_(static_cast<size_t>(nwalkers * dim)) {}

  int nwalkers() const { return nwalkers_; }
  int dim() const { return dim_; }

  std::span<double> walker(int j) { return {pos_.data() + static_cast<size_t>(j * dim_), static_cast<size_t>(dim_)}; }
  std::span<const double> walker(int j) const {
    return {pos_.data() + static_cast<size_t>(j * dim_), static_cast<size_t>(dim_)};
  }

  std::vector<double> log_probs;

 private:
  int nwalkers_;
  int dim_;
  std::vector<double> pos_;
};

/// z in [1/a, a] with density proportional to 1/sqrt(z), by inverse CDF.
double draw_stretch_factor(Rng& rng, double a);

/// Log of the Metropolis ratio z^(dim-1) * exp(logp_new - logp_old).
double stretch_log_ratio(double z, int dim, double logp_new, double logp_old);

/// One sweep of the split-ensemble stretch move. Every walker must start with
/// a finite log density (stored in ensemble.log_probs). Returns the number of
/// accepted proposals.
int stretch_move(WalkerEnsemble& ensemble, Rng& rng, const LogDensity& target, double a = 2.0);

// ---------------------------------------------------------------------------
// Curve posterior.

/// Chain coordinates: alpha (pow3), kappa, delta and sigma2 are replaced by
/// their logarithms; every other entry is the flat configuration entry.
std::array<double, kDim> to_chain_coordinates(const CurveConfiguration& xi);
CurveConfiguration from_chain_coordinates(std::span<const double> coords);

/// Posterior density in chain coordinates (includes the log-Jacobian of the
/// four log transforms).
double chain_log_target(std::span<const double> coords, std::span<const double> y_prefix, int T, int m);

/// Fixed feasible starting point.
CurveConfiguration init_default(int m = kDefaultHorizon);

/// Independent bounded least-squares fit of each basis curve, weights 1/3.
/// Falls back to init_default when the assembled point is infeasible.
CurveConfiguration init_lse(std::span<const double> y_prefix, int T, int m);

/// Nelder-Mead ascent of log_posterior from init_default, <= 2000 evaluations.
CurveConfiguration init_map(std::span<const double> y_prefix, int T, int m);

/// Runs burn_in + nsamples sweeps from a jittered start and keeps every
/// thin-th post-burn-in sweep of every walker.
PosteriorEnsemble run_sampler(std::span<const double> y_prefix, int T, int m, const ChainConfig& config);

MixturePPD ppd_from_ensemble(const PosteriorEnsemble& ensemble, int t_query);

/// Provider that runs one chain per call on the given prefix.
PpdProvider make_mcmc_provider(const ChainConfig& config, int m = kDefaultHorizon);

/// Writes one CSV row of flattened configuration values per retained sample.
void write_ensemble_csv(const PosteriorEnsemble& ensemble, const std::string& path);

}  // namespace lcx::mcmc
