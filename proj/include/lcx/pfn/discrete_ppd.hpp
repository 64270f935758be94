// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "lcx/pfn/bin_grid.hpp"

namespace lcx::pfn {

/// Piecewise-constant density on [0,1]: probs[i] is the mass of bucket i.
struct DiscretePPD {
  std::vector<double> probs;
  std::shared_ptr<const BinGrid> grid;
};

/// log(probs[bin] / width[bin]) at clamp(y, 1e-9, 1 - 1e-9).
double ppd_loglik(const DiscretePPD& ppd, double y);
/// Piecewise-linear CDF; 0 below 0 and 1 above 1.
double ppd_cdf(const DiscretePPD& ppd, double y);
/// Inverse of ppd_cdf for q in (0,1).
double ppd_quantile(const DiscretePPD& ppd, double q);
double ppd_exceed_prob(const DiscretePPD& ppd, double threshold);

}  // namespace lcx::pfn
