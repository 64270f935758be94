// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace lcx {

/// Equal-weight Gaussian mixture; component s is N(means[s], variances[s]).
struct MixturePPD {
  std::vector<double> means;
  std::vector<double> variances;

  size_t size() const { return means.size(); }
  double mean() const;
};

double mixture_logpdf(const MixturePPD& ppd, double y);
double mixture_cdf(const MixturePPD& ppd, double y);
/// Bisection on the mixture CDF, 1e-8 tolerance in y.
double mixture_quantile(const MixturePPD& ppd, double q);
double mixture_exceed_prob(const MixturePPD& ppd, double threshold);

}  // namespace lcx
