// SPDX-License-Identifier: Apache-2.0
//
// Vertical model selection: candidates are trained one after another in a
// fixed order, one epoch at a time, and a termination policy decides after
// each epoch whether to abandon the current run. Stopped runs never resume.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcx/predictive.hpp"

namespace lcx::earlystop {

enum class PolicyKind { none, predictive, patience };
enum class Schedule { fine, coarse };

struct TerminationPolicy {
  PolicyKind kind = PolicyKind::none;
  double delta = 0.05;  // predictive: stop when every exceedance probability is <= delta
  int k = 3;            // patience: stop after k epochs without a new best
  Schedule schedule = Schedule::fine;
  int min_cutoff = 2;

  static TerminationPolicy none() { return {}; }
  static TerminationPolicy predictive(double confidence = 0.95, Schedule schedule = Schedule::fine,
                                      int min_cutoff = 2);
  static TerminationPolicy patience(int k);

  void validate() const;
  /// Short label for CSV output, e.g. "predictive-fine-0.95" or "patience-3".
  std::string label() const;
};

PolicyKind parse_policy_kind(const std::string& name);
Schedule parse_schedule(const std::string& name);

/// fine: 1 < T < m. coarse: T in {ceil(0.1m), ceil(0.2m), ceil(0.4m), ceil(0.8m)}.
bool in_schedule(int T, int m, Schedule schedule);

/// prefix holds y_1..y_T (T = prefix.size()); curve horizon m. Without an
/// incumbent (y_best empty), off-schedule, or below min_cutoff: false.
bool should_stop_predictive(const PpdProvider& provider, std::optional<double> y_best,
                            std::span<const double> prefix, int m, double delta, Schedule schedule,
                            int min_cutoff);

/// True iff the running best of prefix was last improved at least k
/// observations ago.
bool should_stop_patience(std::span<const double> prefix, int k);

struct Simulation {
  std::vector<double> regret;         // regret[e] after e+1 epochs of cumulative cost
  std::vector<int> epochs_per_run;    // epochs spent on each candidate that was started
  int epochs_used() const { return static_cast<int>(regret.size()); }
};

/// Replays candidates (normalized, higher is better) in order under the policy
/// until `budget` epochs are spent or candidates run out. The provider is
/// required only for the predictive policy.
Simulation simulate(const std::vector<std::vector<double>>& candidates, int budget, const TerminationPolicy& policy,
                    const PpdProvider* provider = nullptr);

/// Default budget: 20 full runs of length m.
inline int default_budget(int m) { return 20 * m; }

struct Aggregate {
  std::vector<double> mean;
  std::vector<double> stderr_mean;  // sample sd / sqrt(n); 0 for n = 1
};

/// Pads every trajectory with its last value to `length` (or to the longest
/// trajectory when length is 0), then takes pointwise mean and standard error.
Aggregate aggregate(const std::vector<std::vector<double>>& trajectories, size_t length = 0);

struct TrajectoryRow {
  std::string policy;
  std::string task;
  int ordering = 0;
  const std::vector<double>* regret = nullptr;
};

/// CSV `policy,task,ordering,cum_epochs,regret`, one row per epoch.
void write_trajectories_csv(const std::vector<TrajectoryRow>& rows, const std::string& path);

}  // namespace lcx::earlystop
