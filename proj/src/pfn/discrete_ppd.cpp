// SPDX-License-Identifier: Apache-2.0
#include "lcx/pfn/discrete_ppd.hpp"

#include <algorithm>
#include <cmath>

#include "lcx/error.hpp"

namespace lcx::pfn {

namespace {
constexpr double kEndpointGuard = 1e-9;
}

double ppd_loglik(const DiscretePPD& ppd, double y) {
  const double v = std::clamp(y, kEndpointGuard, 1.0 - kEndpointGuard);
  const int bin = ppd.grid->bin_of(v);
  return std::log(ppd.probs[static_cast<size_t>(bin)]) - std::log(ppd.grid->width(bin));
}

double ppd_cdf(const DiscretePPD& ppd, double y) {
  if (!(y > 0.0)) return 0.0;
  if (y >= 1.0) return 1.0;
  const int bin = ppd.grid->bin_of(y);
  double below = 0.0;
  for (int i = 0; i < bin; ++i) below += ppd.probs[static_cast<size_t>(i)];
  const double lo = ppd.grid->edges[static_cast<size_t>(bin)];
  const double frac = (y - lo) / ppd.grid->width(bin);
  return std::clamp(below + ppd.probs[static_cast<size_t>(bin)] * frac, 0.0, 1.0);
}

double ppd_quantile(const DiscretePPD& ppd, double q) {
  if (!(q > 0.0 && q < 1.0)) throw_numeric("quantile level must lie in (0,1)");
  const int n = ppd.grid->nbins();
  double below = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = ppd.probs[static_cast<size_t>(i)];
    if (p > 0.0 && below + p >= q) {
      const double frac = std::clamp((q - below) / p, 0.0, 1.0);
      return ppd.grid->edges[static_cast<size_t>(i)] + frac * ppd.grid->width(i);
    }
    below += p;
  }
  // Rounding left q marginally above the accumulated mass: top of the last
  // non-empty bucket.
  for (int i = n - 1; i >= 0; --i)
    if (ppd.probs[static_cast<size_t>(i)] > 0.0) return ppd.grid->edges[static_cast<size_t>(i) + 1];
  throw_numeric("PPD has no probability mass");
}

double ppd_exceed_prob(const DiscretePPD& ppd, double threshold) { return 1.0 - ppd_cdf(ppd, threshold); }

}  // namespace lcx::pfn
