// SPDX-License-Identifier: Apache-2.0
#include "lcx/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "lcx/error.hpp"
#include "lcx/text.hpp"

namespace lcx::eval {

void LearningCurve::validate() const {
  if (values.size() < 2) throw_config("curve " + id() + " has fewer than two observations");
  for (double v : values)
    if (!std::isfinite(v)) throw_config("curve " + id() + " has a non-finite value");
  if (prenormalized) return;
  spec.validate();
  for (double v : values)
    if (!(v >= spec.l_hard && v <= spec.u_hard))
      throw_config("curve " + id() + " has a value outside the hard bounds: " + format_double(v));
}

std::vector<double> LearningCurve::normalized() const {
  validate();
  if (prenormalized) return values;
  const Normalizer norm(spec);
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&norm](double v) { return norm.forward(v); });
  return out;
}

int subsample_stride(size_t length, int m) {
  if (m < 1) throw_config("m must be >= 1");
  const auto mm = static_cast<size_t>(m);
  return length <= mm ? 1 : static_cast<int>((length + mm - 1) / mm);
}

std::vector<double> subsample(std::span<const double> values, int m) {
  const auto s = static_cast<size_t>(subsample_stride(values.size(), m));
  std::vector<double> out;
  for (size_t i = 0; i < values.size(); i += s) out.push_back(values[i]);
  return out;
}

int cutoff_index(double fraction, size_t length) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw_config("cutoff fraction must lie in (0, 1]");
  const double raw = fraction * static_cast<double>(length);
  const auto T = static_cast<int>(std::ceil(raw - 1e-12 * raw));
  return std::max(1, T);
}

Scores score(const PpdProvider& provider, std::span<const double> y, double cutoff_fraction) {
  const int T = cutoff_index(cutoff_fraction, y.size());
  const int n = static_cast<int>(y.size());
  if (T >= n) throw_config("cutoff leaves no censored observations");
  std::vector<int> queries(static_cast<size_t>(n - T));
  std::iota(queries.begin(), queries.end(), T + 1);
  const auto ppds = provider(y.first(static_cast<size_t>(T)), queries);
  if (ppds.size() != queries.size()) throw_numeric("provider returned the wrong number of predictions");
  Scores s;
  for (size_t i = 0; i < queries.size(); ++i) {
    const double truth = y[static_cast<size_t>(queries[i] - 1)];
    s.ll += log_density(ppds[i], truth);
    const double err = quantile(ppds[i], 0.5) - truth;
    s.mse += err * err;
  }
  s.ll /= static_cast<double>(queries.size());
  s.mse /= static_cast<double>(queries.size());
  return s;
}

EvalRecord evaluate(const PpdProvider& provider, const LearningCurve& curve, double cutoff_fraction,
                    const std::string& method, int m) {
  const auto y = subsample(curve.normalized(), m);
  const Scores s = score(provider, y, cutoff_fraction);
  return EvalRecord{curve.id(), method, cutoff_fraction, s.ll, s.mse};
}

std::vector<double> average_ranks(std::span<const double> values, bool higher_is_better) {
  const size_t n = values.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto better = [&](size_t a, size_t b) { return higher_is_better ? values[a] > values[b] : values[a] < values[b]; };
  std::stable_sort(idx.begin(), idx.end(), better);
  std::vector<double> ranks(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

std::vector<MeanRank> rank_aggregate(const std::vector<EvalRecord>& records) {
  std::set<std::string> methods;
  for (const auto& r : records) methods.insert(r.method);
  // (cutoff, curve) -> method -> record
  std::map<std::pair<double, std::string>, std::map<std::string, const EvalRecord*>> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.cutoff, r.curve_id}];
    if (!g.emplace(r.method, &r).second)
      throw_config("duplicate record for " + r.curve_id + " / " + r.method);
  }
  std::map<std::pair<double, std::string>, MeanRank> acc;
  for (const auto& [key, g] : groups) {
    if (g.size() != methods.size())
      throw_config("missing record for curve " + key.second + " at cutoff " + format_double(key.first));
    std::vector<double> ll, mse;
    for (const auto& [name, rec] : g) {
      ll.push_back(rec->ll);
      mse.push_back(rec->mse);
    }
    const auto rl = average_ranks(ll, true);
    const auto rm = average_ranks(mse, false);
    size_t i = 0;
    for (const auto& [name, rec] : g) {
      auto& a = acc[{key.first, name}];
      a.method = name;
      a.cutoff = key.first;
      a.ll_rank += rl[i];
      a.mse_rank += rm[i];
      ++a.n_curves;
      ++i;
    }
  }
  std::vector<MeanRank> out;
  for (auto& [key, a] : acc) {
    a.ll_rank /= a.n_curves;
    a.mse_rank /= a.n_curves;
    out.push_back(a);
  }
  return out;
}

void write_records_csv(const std::vector<EvalRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw_io("cannot open '" + path + "' for writing");
  os << "curve_id,method,cutoff,ll,mse\n";
  for (const auto& r : records)
    os << r.curve_id << ',' << r.method << ',' << format_double(r.cutoff) << ',' << format_double(r.ll) << ','
       << format_double(r.mse) << '\n';
  if (!os) throw_io("failed writing '" + path + "'");
}

void write_ranks_csv(const std::vector<MeanRank>& ranks, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw_io("cannot open '" + path + "' for writing");
  os << "method,cutoff,ll_rank,mse_rank,n_curves\n";
  for (const auto& r : ranks)
    os << r.method << ',' << format_double(r.cutoff) << ',' << format_double(r.ll_rank) << ','
       << format_double(r.mse_rank) << ',' << r.n_curves << '\n';
  if (!os) throw_io("failed writing '" + path + "'");
}

}  // namespace lcx::eval
