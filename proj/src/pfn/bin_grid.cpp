// SPDX-License-Identifier: Apache-2.0
#include "lcx/pfn/bin_grid.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

#include "lcx/error.hpp"

namespace lcx::pfn {

namespace {
constexpr double kEdgeGap = 1e-9;
}

int BinGrid::bin_of(double y) const {
  const double v = std::clamp(y, 0.0, 1.0);
  const auto it = std::upper_bound(edges.begin(), edges.end(), v);
  const int idx = static_cast<int>(it - edges.begin()) - 1;
  return std::clamp(idx, 0, nbins() - 1);
}

void BinGrid::validate() const {
  if (edges.size() < 3) throw_numeric("bin grid needs at least two bins");
  if (edges.front() != 0.0 || edges.back() != 1.0) throw_numeric("bin grid must span [0,1]");
  for (size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw_numeric("bin edges must be strictly increasing");
}

BinGrid uniform_grid(int nbins) {
  if (nbins < 2) throw_config("nbins must be >= 2");
  BinGrid grid;
  grid.edges.resize(static_cast<size_t>(nbins) + 1);
  for (int i = 0; i <= nbins; ++i) grid.edges[static_cast<size_t>(i)] = static_cast<double>(i) / nbins;
  grid.edges.back() = 1.0;
  return grid;
}

BinGrid build_bins(std::vector<double> pooled, int nbins, BinBuildReport* report) {
  if (nbins < 2) throw_config("nbins must be >= 2");
  if (pooled.size() < static_cast<size_t>(nbins)) throw_numeric("too few pooled values to place bin edges");
  for (double& v : pooled) v = std::clamp(v, 0.0, 1.0);
  std::sort(pooled.begin(), pooled.end());

  BinGrid grid;
  grid.edges.assign(static_cast<size_t>(nbins) + 1, 0.0);
  const double last = static_cast<double>(pooled.size() - 1);
  for (int i = 1; i < nbins; ++i) {
    const double pos = last * static_cast<double>(i) / nbins;
    const auto lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, pooled.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    grid.edges[static_cast<size_t>(i)] = pooled[lo] + frac * (pooled[hi] - pooled[lo]);
  }
  grid.edges.back() = 1.0;

  std::vector<bool> moved(grid.edges.size(), false);
  for (size_t i = 1; i + 1 < grid.edges.size(); ++i) {
    if (grid.edges[i] <= grid.edges[i - 1]) {
      grid.edges[i] = grid.edges[i - 1] + kEdgeGap;
      moved[i] = true;
    }
  }
  for (size_t i = grid.edges.size() - 2; i >= 1; --i) {
    if (grid.edges[i] >= grid.edges[i + 1]) {
      grid.edges[i] = grid.edges[i + 1] - kEdgeGap;
      moved[i] = true;
    }
  }
  const int separated = static_cast<int>(std::count(moved.begin(), moved.end(), true));
  if (report) report->separated_edges = separated;
  if (separated > 0)
    std::cerr << "warning: separated " << separated << " coincident bin edges by " << kEdgeGap << "\n";
  if (separated * 100 > nbins)
    throw_numeric("degenerate bin grid: " + std::to_string(separated) + " of " + std::to_string(nbins) +
                  " edges required separation");
  grid.validate();
  return grid;
}

BinGrid build_bins_from_prior(Rng& rng, int n_draws, int m, int nbins, BinBuildReport* report) {
  // Counted in pooled values, not curves.
  if (n_draws < 1 || m < 1 || static_cast<long long>(n_draws) * m < 100LL * nbins)
    throw_config("building bins needs n_draws * m >= 100 * nbins pooled values");
  std::vector<double> pooled;
  pooled.reserve(static_cast<size_t>(n_draws) * static_cast<size_t>(m));
  for (int i = 0; i < n_draws; ++i) {
    const PriorSample s = sample_prior_curve(rng, m);
    pooled.insert(pooled.end(), s.y.begin(), s.y.end());
  }
  return build_bins(std::move(pooled), nbins, report);
}

}  // namespace lcx::pfn
