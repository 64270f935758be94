// SPDX-License-Identifier: Apache-2.0
#include "lcx/earlystop.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lcx/error.hpp"
#include "lcx/text.hpp"

namespace lcx::earlystop {

TerminationPolicy TerminationPolicy::predictive(double confidence, Schedule schedule, int min_cutoff) {
  TerminationPolicy p;
  p.kind = PolicyKind::predictive;
  p.delta = 1.0 - confidence;
  p.schedule = schedule;
  p.min_cutoff = min_cutoff;
  return p;
}

TerminationPolicy TerminationPolicy::patience(int k) {
  TerminationPolicy p;
  p.kind = PolicyKind::patience;
  p.k = k;
  return p;
}

void TerminationPolicy::validate() const {
  switch (kind) {
    case PolicyKind::none:
      return;
    case PolicyKind::predictive:
      if (!(delta >= 0.0 && delta < 1.0)) throw_config("delta must lie in [0, 1)");
      if (min_cutoff < 1) throw_config("min_cutoff must be >= 1");
      return;
    case PolicyKind::patience:
      if (k < 1) throw_config("patience k must be >= 1");
      return;
  }
}

std::string TerminationPolicy::label() const {
  switch (kind) {
    case PolicyKind::none:
      return "none";
    case PolicyKind::predictive:
      return std::string("predictive-") + (schedule == Schedule::fine ? "fine" : "coarse") + "-" +
             format_double(1.0 - delta);
    case PolicyKind::patience:
      return "patience-" + std::to_string(k);
  }
  return "unknown";
}

PolicyKind parse_policy_kind(const std::string& name) {
  if (name == "none") return PolicyKind::none;
  if (name == "predictive") return PolicyKind::predictive;
  if (name == "patience") return PolicyKind::patience;
  throw_config("unknown policy '" + name + "' (expected none, predictive or patience)");
}

Schedule parse_schedule(const std::string& name) {
  if (name == "fine") return Schedule::fine;
  if (name == "coarse") return Schedule::coarse;
  throw_config("unknown schedule '" + name + "' (expected fine or coarse)");
}

bool in_schedule(int T, int m, Schedule schedule) {
  if (schedule == Schedule::fine) return T > 1 && T < m;
  for (double f : {0.1, 0.2, 0.4, 0.8}) {
    const double raw = f * m;
    if (T == static_cast<int>(std::ceil(raw - 1e-12 * raw))) return true;
  }
  return false;
}

bool should_stop_predictive(const PpdProvider& provider, std::optional<double> y_best,
                            std::span<const double> prefix, int m, double delta, Schedule schedule,
                            int min_cutoff) {
  const int T = static_cast<int>(prefix.size());
  if (!y_best || T < min_cutoff || T >= m || !in_schedule(T, m, schedule)) return false;
  std::vector<int> queries(static_cast<size_t>(m - T));
  std::iota(queries.begin(), queries.end(), T + 1);
  const auto ppds = provider(prefix, queries);
  double worst = 0.0;
  for (const auto& p : ppds) worst = std::max(worst, exceed_prob(p, *y_best));
  return worst <= delta;
}

bool should_stop_patience(std::span<const double> prefix, int k) {
  if (k < 1) throw_config("patience k must be >= 1");
  if (prefix.empty()) return false;
  size_t best = 0;
  for (size_t i = 1; i < prefix.size(); ++i)
    if (prefix[i] > prefix[best]) best = i;
  return static_cast<long>(best) <= static_cast<long>(prefix.size()) - 1 - k;
}

Simulation simulate(const std::vector<std::vector<double>>& candidates, int budget, const TerminationPolicy& policy,
                    const PpdProvider* provider) {
  policy.validate();
  if (budget < 1) throw_config("budget must be positive");
  if (policy.kind == PolicyKind::predictive && !provider) throw_config("predictive policy needs a PPD provider");

  double attainable = -std::numeric_limits<double>::infinity();
  for (const auto& c : candidates)
    for (double v : c) attainable = std::max(attainable, v);

  Simulation sim;
  std::optional<double> y_best;
  for (const auto& curve : candidates) {
    if (sim.epochs_used() >= budget) break;
    const int m = static_cast<int>(curve.size());
    int e = 0;
    while (e < m && sim.epochs_used() < budget) {
      const double v = curve[static_cast<size_t>(e)];
      ++e;
      y_best = y_best ? std::max(*y_best, v) : v;
      sim.regret.push_back(attainable - *y_best);
      if (e == m) break;
      const std::span<const double> prefix(curve.data(), static_cast<size_t>(e));
      bool stop = false;
      if (policy.kind == PolicyKind::predictive)
        stop = should_stop_predictive(*provider, y_best, prefix, m, policy.delta, policy.schedule, policy.min_cutoff);
      else if (policy.kind == PolicyKind::patience)
        stop = should_stop_patience(prefix, policy.k);
      if (stop) break;
    }
    sim.epochs_per_run.push_back(e);
  }
  return sim;
}

Aggregate aggregate(const std::vector<std::vector<double>>& trajectories, size_t length) {
  if (trajectories.empty()) throw_config("nothing to aggregate");
  if (length == 0)
    for (const auto& t : trajectories) length = std::max(length, t.size());
  const auto n = static_cast<double>(trajectories.size());
  Aggregate out;
  out.mean.assign(length, 0.0);
  out.stderr_mean.assign(length, 0.0);
  auto at = [](const std::vector<double>& t, size_t i) {
    if (t.empty()) throw_config("cannot pad an empty trajectory");
    return i < t.size() ? t[i] : t.back();
  };
  for (size_t i = 0; i < length; ++i) {
    double s = 0.0;
    for (const auto& t : trajectories) s += at(t, i);
    const double mean = s / n;
    double ss = 0.0;
    for (const auto& t : trajectories) ss += (at(t, i) - mean) * (at(t, i) - mean);
    out.mean[i] = mean;
    out.stderr_mean[i] = trajectories.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
  }
  return out;
}

void write_trajectories_csv(const std::vector<TrajectoryRow>& rows, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw_io("cannot open '" + path + "' for writing");
  os << "policy,task,ordering,cum_epochs,regret\n";
  for (const auto& r : rows)
    for (size_t i = 0; i < r.regret->size(); ++i)
      os << r.policy << ',' << r.task << ',' << r.ordering << ',' << i + 1 << ',' << format_double((*r.regret)[i])
         << '\n';
  if (!os) throw_io("failed writing '" + path + "'");
}

}  // namespace lcx::earlystop
