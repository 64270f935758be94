// SPDX-License-Identifier: Apache-2.0
#include "lcx/mixture_ppd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "lcx/error.hpp"

namespace lcx {

namespace {

constexpr double kQuantileTolerance = 1e-8;

void require_components(const MixturePPD& ppd) {
  if (ppd.means.empty() || ppd.means.size() != ppd.variances.size())
    throw_numeric("mixture PPD needs a matching, non-empty set of components");
}

}  // namespace

double MixturePPD::mean() const {
  require_components(*this);
  return std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
}

double mixture_logpdf(const MixturePPD& ppd, double y) {
  require_components(ppd);
  const size_t n = ppd.size();
  std::vector<double> terms(n);
  double peak = -std::numeric_limits<double>::infinity();
  for (size_t s = 0; s < n; ++s) {
    const double r = y - ppd.means[s];
    const double v = ppd.variances[s];
    terms[s] = -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
    peak = std::max(peak, terms[s]);
  }
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - peak);
  return peak + std::log(acc) - std::log(static_cast<double>(n));
}

double mixture_cdf(const MixturePPD& ppd, double y) {
  require_components(ppd);
  if (y == std::numeric_limits<double>::infinity()) return 1.0;
  if (y == -std::numeric_limits<double>::infinity()) return 0.0;
  double acc = 0.0;
  for (size_t s = 0; s < ppd.size(); ++s) {
    const double z = (y - ppd.means[s]) / std::sqrt(ppd.variances[s]);
    acc += 0.5 * std::erfc(-z / std::numbers::sqrt2);
  }
  return acc / static_cast<double>(ppd.size());
}

double mixture_quantile(const MixturePPD& ppd, double q) {
  require_components(ppd);
  if (!(q > 0.0 && q < 1.0)) throw_numeric("quantile level must lie in (0,1)");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (size_t s = 0; s < ppd.size(); ++s) {
    const double sd = std::sqrt(ppd.variances[s]);
    lo = std::min(lo, ppd.means[s] - 40.0 * sd);
    hi = std::max(hi, ppd.means[s] + 40.0 * sd);
  }
  while (hi - lo > kQuantileTolerance) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (mixture_cdf(ppd, mid) < q)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double mixture_exceed_prob(const MixturePPD& ppd, double threshold) { return 1.0 - mixture_cdf(ppd, threshold); }

}  // namespace lcx
