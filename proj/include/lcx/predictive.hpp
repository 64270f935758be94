// SPDX-License-Identifier: Apache-2.0
//
// Common view over the two PPD representations so evaluation and early
// stopping can run against either inference path.
#pragma once

#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "lcx/mixture_ppd.hpp"
#include "lcx/pfn/discrete_ppd.hpp"

namespace lcx {

using Predictive = std::variant<pfn::DiscretePPD, MixturePPD>;

double log_density(const Predictive& ppd, double y);
double quantile(const Predictive& ppd, double q);
double exceed_prob(const Predictive& ppd, double threshold);

/// Maps an observed normalized prefix y_1..y_T (T = prefix.size()) and a list
/// of 1-based query steps to one PPD per query.
using PpdProvider =
    std::function<std::vector<Predictive>(std::span<const double> prefix, std::span<const int> query_steps)>;

}  // namespace lcx
