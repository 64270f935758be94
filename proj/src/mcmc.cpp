// SPDX-License-Identifier: Apache-2.0
#include "lcx/mcmc.hpp"

#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <stdexcept>
#include <cmath>
#include <fstream>
#include <limits>

#include <ceres/ceres.h>

#include "lcx/error.hpp"
#include "lcx/text.hpp"

namespace lcx::mcmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kJitterScale = 1e-4;
constexpr int kJitterTries = 100;
constexpr int kMapEvaluationBudget = 2000;
constexpr double kMinInitVariance = 6.14421235332821e-06;  // e^-12
constexpr double kLogSdSpan = 4.0;                         // LSE box half-width, in prior sds

// Indices of the log-transformed entries in the flat layout.
constexpr std::array<int, 4> kLogIndices{5, 8, 9, 12};

}  // namespace

InitStrategy parse_init_strategy(const std::string& name) {
  if (name == "lse" || name == "LSE") return InitStrategy::lse;
  if (name == "map" || name == "MAP") return InitStrategy::map;
  if (name == "default" || name == "Default") return InitStrategy::fixed_default;
  throw_config("unknown chain init strategy '" + name + "'");
}

std::string to_string(InitStrategy init) {
  switch (init) {
    case InitStrategy::lse:
      return "lse";
    case InitStrategy::map:
      return "map";
    case InitStrategy::fixed_default:
      return "default";
  }
  return "?";
}

void ChainConfig::validate() const {
  if (nwalkers < 2 * kDim) throw_config("nwalkers must be >= 26 (twice the parameter count)");
  if (nsamples < 1) throw_config("nsamples must be >= 1");
  if (burn_in < 0) throw_config("burn_in must be >= 0");
  if (thin < 1) throw_config("thin must be >= 1");
  if (!(stretch_scale > 1.0)) throw_config("stretch_scale must be > 1");
}

double log_posterior(const CurveConfiguration& xi, std::span<const double> y_prefix, int T, int m) {
  const double lp = log_prior_density(xi, m);
  if (!std::isfinite(lp)) return kNegInf;
  return lp + log_likelihood(xi, y_prefix, T);
}

double draw_stretch_factor(Rng& rng, double a) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double s = (a - 1.0) * u + 1.0;
  return s * s / a;
}

double stretch_log_ratio(double z, int dim, double logp_new, double logp_old) {
  return (dim - 1) * std::log(z) + logp_new - logp_old;
}

int stretch_move(WalkerEnsemble& ensemble, Rng& rng, const LogDensity& target, double a) {
  const int n = ensemble.nwalkers();
  const int dim = ensemble.dim();
  const int half = n / 2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> proposal(static_cast<size_t>(dim));
  int accepted = 0;

  for (int part = 0; part < 2; ++part) {
    const int begin = part == 0 ? 0 : half;
    const int end = part == 0 ? half : n;
    const int other_begin = part == 0 ? half : 0;
    const int other_size = part == 0 ? n - half : half;
    std::uniform_int_distribution<int> pick(0, other_size - 1);

    for (int j = begin; j < end; ++j) {
      const int k = other_begin + pick(rng);
      const double z = draw_stretch_factor(rng, a);
      const auto xj = ensemble.walker(j);
      const auto xk = ensemble.walker(k);
      for (int d = 0; d < dim; ++d) proposal[static_cast<size_t>(d)] = xk[d] + z * (xj[d] - xk[d]);
      const double lp_new = target(proposal);
      const double log_ratio = stretch_log_ratio(z, dim, lp_new, ensemble.log_probs[static_cast<size_t>(j)]);
      const double u = unit(rng);
      if (std::isfinite(lp_new) && std::log(u) < log_ratio) {
        std::copy(proposal.begin(), proposal.end(), xj.begin());
        ensemble.log_probs[static_cast<size_t>(j)] = lp_new;
        ++accepted;
      }
    }
  }
  return accepted;
}

std::array<double, kDim> to_chain_coordinates(const CurveConfiguration& xi) {
  auto flat = xi.flatten();
  for (int i : kLogIndices) flat[static_cast<size_t>(i)] = std::log(flat[static_cast<size_t>(i)]);
  return flat;
}

CurveConfiguration from_chain_coordinates(std::span<const double> coords) {
  if (coords.size() != kDim) throw_numeric("chain coordinates must have 13 entries");
  std::array<double, kDim> flat{};
  std::copy(coords.begin(), coords.end(), flat.begin());
  for (int i : kLogIndices) flat[static_cast<size_t>(i)] = std::exp(flat[static_cast<size_t>(i)]);
  return CurveConfiguration::unflatten(flat);
}

double chain_log_target(std::span<const double> coords, std::span<const double> y_prefix, int T, int m) {
  const CurveConfiguration xi = from_chain_coordinates(coords);
  const double lp = log_posterior(xi, y_prefix, T, m);
  if (!std::isfinite(lp)) return kNegInf;
  double log_jacobian = 0.0;
  for (int i : kLogIndices) log_jacobian += coords[static_cast<size_t>(i)];
  return lp + log_jacobian;
}

CurveConfiguration init_default(int m) {
  CurveConfiguration xi;
  xi.w = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  xi.pow3 = {0.8, 0.3, 1.0};
  xi.janoschek = {0.8, 0.2, std::exp(-2.0), 1.0};
  xi.ilog2 = {0.8, 0.3};
  xi.sigma2 = std::exp(-8.0);
  if (!std::isfinite(log_prior_density(xi, std::max(m, 2))))
    throw std::logic_error("default chain start violates the prior at m=" + std::to_string(m));
  return xi;
}

namespace {

struct Pow3Residual {
  Pow3Residual(std::span<const double> y) : y_(y) {}
  template <typename S>
  bool operator()(const S* p, S* residual) const {
    const S alpha = ceres::exp(p[2]);
    for (size_t i = 0; i < y_.size(); ++i) {
      const double log_t = std::log(static_cast<double>(i + 1));
      residual[i] = S(y_[i]) - (p[0] - p[1] * ceres::exp(-alpha * log_t));
    }
    return true;
  }
  std::span<const double> y_;
};

struct JanoschekResidual {
  JanoschekResidual(std::span<const double> y) : y_(y) {}
  template <typename S>
  bool operator()(const S* p, S* residual) const {
    const S kappa = ceres::exp(p[2]);
    const S delta = ceres::exp(p[3]);
    for (size_t i = 0; i < y_.size(); ++i) {
      const double log_t = std::log(static_cast<double>(i + 1));
      residual[i] = S(y_[i]) - (p[0] - (p[0] - p[1]) * ceres::exp(-kappa * ceres::exp(delta * log_t)));
    }
    return true;
  }
  std::span<const double> y_;
};

struct Ilog2Residual {
  Ilog2Residual(std::span<const double> y) : y_(y) {}
  template <typename S>
  bool operator()(const S* p, S* residual) const {
    for (size_t i = 0; i < y_.size(); ++i) {
      const double inv_log = 1.0 / std::log(static_cast<double>(i + 2));
      residual[i] = S(y_[i]) - (p[0] - p[1] * inv_log);
    }
    return true;
  }
  std::span<const double> y_;
};

template <int N, class Functor>
void fit_bounded(std::span<const double> y, std::array<double, N>& params, const std::array<double, N>& lo,
                 const std::array<double, N>& hi) {
  ceres::Problem problem;
  auto* cost = new ceres::AutoDiffCostFunction<Functor, ceres::DYNAMIC, N>(new Functor(y), static_cast<int>(y.size()));
  problem.AddResidualBlock(cost, nullptr, params.data());
  for (int i = 0; i < N; ++i) {
    problem.SetParameterLowerBound(params.data(), i, lo[static_cast<size_t>(i)]);
    problem.SetParameterUpperBound(params.data(), i, hi[static_cast<size_t>(i)]);
  }
  ceres::Solver::Options options;
  options.linear_solver_type = ceres::DENSE_QR;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;
  options.max_num_iterations = 200;
  options.function_tolerance = 1e-14;
  options.gradient_tolerance = 1e-14;
  options.parameter_tolerance = 1e-12;
  options.num_threads = 1;
  ceres::Solver::Summary summary;
  ceres::Solve(options, &problem, &summary);
}

double log_bound(prior_table::LogNormal ln, double sign) {
  return ln.mean + sign * kLogSdSpan * std::sqrt(ln.variance);
}

}  // namespace

CurveConfiguration init_lse(std::span<const double> y_prefix, int T, int m) {
  using namespace prior_table;
  if (T < 2 || static_cast<size_t>(T) > y_prefix.size()) throw_numeric("init_lse requires 2 <= T <= len(y)");
  const auto y = y_prefix.first(static_cast<size_t>(T));
  const CurveConfiguration fallback = init_default(m);

  std::array<double, 3> pow3{fallback.pow3.c, fallback.pow3.a, std::log(fallback.pow3.alpha)};
  fit_bounded<3, Pow3Residual>(y, pow3, {kPow3C.lo, kPow3A.lo, log_bound(kPow3Alpha, -1)},
                               {kPow3C.hi, kPow3A.hi, log_bound(kPow3Alpha, 1)});

  std::array<double, 4> jan{fallback.janoschek.alpha, fallback.janoschek.beta, std::log(fallback.janoschek.kappa),
                            std::log(fallback.janoschek.delta)};
  fit_bounded<4, JanoschekResidual>(
      y, jan, {kJanoschekAlpha.lo, kJanoschekBeta.lo, log_bound(kJanoschekKappa, -1), log_bound(kJanoschekDelta, -1)},
      {kJanoschekAlpha.hi, kJanoschekBeta.hi, log_bound(kJanoschekKappa, 1), log_bound(kJanoschekDelta, 1)});

  std::array<double, 2> ilog{fallback.ilog2.c, fallback.ilog2.a};
  fit_bounded<2, Ilog2Residual>(y, ilog, {kIlog2C.lo, kIlog2A.lo}, {kIlog2C.hi, kIlog2A.hi});

  CurveConfiguration xi;
  xi.w = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  xi.pow3 = {pow3[0], pow3[1], std::exp(pow3[2])};
  xi.janoschek = {jan[0], jan[1], std::exp(jan[2]), std::exp(jan[3])};
  xi.ilog2 = {ilog[0], ilog[1]};

  double sq = 0.0;
  for (int t = 1; t <= T; ++t) {
    const double r = y[static_cast<size_t>(t - 1)] - eval_comb(xi, t);
    sq += r * r;
  }
  xi.sigma2 = std::max(sq / T, kMinInitVariance);
  if (!std::isfinite(log_prior_density(xi, m))) return fallback;
  return xi;
}

namespace {

struct MapObjective {
  std::span<const double> y;
  int T;
  int m;
  int evaluations = 0;
  double best_value = kNegInf;
  std::array<double, kDim> best_coords{};
};

double map_negative_objective(const gsl_vector* x, void* raw) {
  auto* obj = static_cast<MapObjective*>(raw);
  constexpr double kPenalty = 1e100;
  if (obj->evaluations >= kMapEvaluationBudget) return kPenalty;
  ++obj->evaluations;
  std::array<double, kDim> coords{};
  for (int i = 0; i < kDim; ++i) coords[static_cast<size_t>(i)] = gsl_vector_get(x, static_cast<size_t>(i));
  const double lp = log_posterior(from_chain_coordinates(coords), obj->y, obj->T, obj->m);
  if (!std::isfinite(lp)) return kPenalty;
  if (lp > obj->best_value) {
    obj->best_value = lp;
    obj->best_coords = coords;
  }
  return -lp;
}

}  // namespace

CurveConfiguration init_map(std::span<const double> y_prefix, int T, int m) {
  if (T < 2 || static_cast<size_t>(T) > y_prefix.size()) throw_numeric("init_map requires 2 <= T <= len(y)");
  const CurveConfiguration start = init_default(m);
  const auto start_coords = to_chain_coordinates(start);

  MapObjective obj{y_prefix, T, m};
  gsl_multimin_function fn{&map_negative_objective, kDim, &obj};
  gsl_vector* x = gsl_vector_alloc(kDim);
  gsl_vector* step = gsl_vector_alloc(kDim);
  for (int i = 0; i < kDim; ++i) {
    gsl_vector_set(x, static_cast<size_t>(i), start_coords[static_cast<size_t>(i)]);
    gsl_vector_set(step, static_cast<size_t>(i), 0.05);
  }
  gsl_multimin_fminimizer* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, kDim);
  gsl_multimin_fminimizer_set(solver, &fn, x, step);
  while (obj.evaluations < kMapEvaluationBudget) {
    if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(solver), 1e-10) == GSL_SUCCESS) break;
  }
  gsl_multimin_fminimizer_free(solver);
  gsl_vector_free(step);
  gsl_vector_free(x);

  if (!std::isfinite(obj.best_value)) return start;
  return from_chain_coordinates(obj.best_coords);
}

PosteriorEnsemble run_sampler(std::span<const double> y_prefix, int T, int m, const ChainConfig& config) {
  config.validate();
  if (T < 1 || static_cast<size_t>(T) > y_prefix.size()) throw_numeric("run_sampler requires 1 <= T <= len(y)");
  const auto y = y_prefix.first(static_cast<size_t>(T));

  CurveConfiguration start;
  if (config.init == InitStrategy::fixed_default || T < 2)
    start = init_default(m);
  else if (config.init == InitStrategy::lse)
    start = init_lse(y, T, m);
  else
    start = init_map(y, T, m);

  const LogDensity target = [&](std::span<const double> coords) { return chain_log_target(coords, y, T, m); };

  Rng rng(config.seed);
  std::normal_distribution<double> jitter(0.0, kJitterScale);
  const auto center = to_chain_coordinates(start);
  WalkerEnsemble walkers(config.nwalkers, kDim);
  walkers.log_probs.assign(static_cast<size_t>(config.nwalkers), kNegInf);
  for (int j = 0; j < config.nwalkers; ++j) {
    auto x = walkers.walker(j);
    for (int attempt = 0; attempt < kJitterTries && !std::isfinite(walkers.log_probs[static_cast<size_t>(j)]);
         ++attempt) {
      for (int d = 0; d < kDim; ++d) x[d] = center[static_cast<size_t>(d)] + jitter(rng);
      walkers.log_probs[static_cast<size_t>(j)] = target(x);
    }
    if (!std::isfinite(walkers.log_probs[static_cast<size_t>(j)]))
      throw_numeric("walker " + std::to_string(j) + " found no finite starting point");
  }

  PosteriorEnsemble out;
  out.samples.reserve(static_cast<size_t>(config.nwalkers) * static_cast<size_t>(config.nsamples / config.thin));
  long long accepted = 0;
  const int sweeps = config.burn_in + config.nsamples;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    accepted += stretch_move(walkers, rng, target, config.stretch_scale);
    const int post = sweep - config.burn_in;
    if (post >= 0 && (post + 1) % config.thin == 0)
      for (int j = 0; j < config.nwalkers; ++j) out.samples.push_back(from_chain_coordinates(walkers.walker(j)));
  }
  out.acceptance_rate = static_cast<double>(accepted) / (static_cast<double>(sweeps) * config.nwalkers);
  return out;
}

MixturePPD ppd_from_ensemble(const PosteriorEnsemble& ensemble, int t_query) {
  MixturePPD ppd;
  ppd.means.reserve(ensemble.samples.size());
  ppd.variances.reserve(ensemble.samples.size());
  for (const auto& xi : ensemble.samples) {
    ppd.means.push_back(eval_comb(xi, t_query));
    ppd.variances.push_back(xi.sigma2);
  }
  return ppd;
}

PpdProvider make_mcmc_provider(const ChainConfig& config, int m) {
  config.validate();
  return [config, m](std::span<const double> prefix, std::span<const int> queries) {
    const auto ensemble = run_sampler(prefix, static_cast<int>(prefix.size()), m, config);
    std::vector<Predictive> out;
    out.reserve(queries.size());
    for (int t : queries) out.emplace_back(ppd_from_ensemble(ensemble, t));
    return out;
  };
}

void write_ensemble_csv(const PosteriorEnsemble& ensemble, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw_io("cannot open '" + path + "' for writing");
  os << "w_pow3,w_janoschek,w_ilog2,pow3_c,pow3_a,pow3_alpha,jan_alpha,jan_beta,jan_kappa,jan_delta,ilog2_c,ilog2_a,"
        "sigma2\n";
  for (const auto& xi : ensemble.samples) {
    const auto flat = xi.flatten();
    for (size_t i = 0; i < flat.size(); ++i) os << (i ? "," : "") << format_double(flat[i]);
    os << "\n";
  }
  if (!os) throw_io("failed writing '" + path + "'");
}

}  // namespace lcx::mcmc
