// SPDX-License-Identifier: Apache-2.0
//
// Cutoff protocol and metrics. Everything is scored in normalized space.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "lcx/normalize.hpp"
#include "lcx/predictive.hpp"
#include "lcx/prior.hpp"

namespace lcx::eval {

inline constexpr double kCutoffFractions[] = {0.1, 0.2, 0.4, 0.8};

struct LearningCurve {
  std::string task_id;
  std::string run_id;
  std::vector<double> values;  // raw metric, one per epoch
  NormalizationSpec spec;
  bool prenormalized = false;  // values already live in [0,1] curve space; spec is ignored

  std::string id() const { return task_id + "/" + run_id; }
  /// Throws unless there are >= 2 finite values, all inside the hard bounds
  /// (unless prenormalized).
  void validate() const;
  std::vector<double> normalized() const;
};

struct EvalRecord {
  std::string curve_id;
  std::string method;
  double cutoff = 0.0;
  double ll = 0.0;
  double mse = 0.0;
};

/// Identity for length <= m; otherwise indices 0, s, 2s, ... with s = ceil(length / m).
std::vector<double> subsample(std::span<const double> values, int m = kDefaultHorizon);
int subsample_stride(size_t length, int m = kDefaultHorizon);

/// T = max(1, ceil(fraction * length)). A relative 1e-12 slack keeps e.g.
/// 0.1 * 30 from rounding up to 4.
int cutoff_index(double fraction, size_t length);

struct Scores {
  double ll = 0.0;
  double mse = 0.0;
};

/// Scores an already normalized (and, if needed, subsampled) curve: the
/// provider sees y_1..y_T and is asked about T+1..length. Throws a config
/// Error when the cutoff leaves nothing censored.
Scores score(const PpdProvider& provider, std::span<const double> y, double cutoff_fraction);

/// Normalizes with the curve's spec, subsamples to m, then scores.
EvalRecord evaluate(const PpdProvider& provider, const LearningCurve& curve, double cutoff_fraction,
                    const std::string& method, int m = kDefaultHorizon);

/// Ranks 1..M, 1 = best; tied values share the mean of their ranks.
std::vector<double> average_ranks(std::span<const double> values, bool higher_is_better);

struct MeanRank {
  std::string method;
  double cutoff = 0.0;
  double ll_rank = 0.0;
  double mse_rank = 0.0;
  int n_curves = 0;
};

/// Per (curve, cutoff) ranking of methods, averaged over curves. Throws a
/// config Error when some method lacks a record another method has.
/// Output is ordered by cutoff, then method name.
std::vector<MeanRank> rank_aggregate(const std::vector<EvalRecord>& records);

void write_records_csv(const std::vector<EvalRecord>& records, const std::string& path);
void write_ranks_csv(const std::vector<MeanRank>& ranks, const std::string& path);

}  // namespace lcx::eval
