// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "lcx/prior.hpp"

namespace lcx::pfn {

inline constexpr int kDefaultBins = 1000;

/// Partition of [0,1] into nbins half-open buckets [edges[i], edges[i+1]).
struct BinGrid {
  std::vector<double> edges;

  int nbins() const { return static_cast<int>(edges.size()) - 1; }
  double width(int bin) const { return edges[static_cast<size_t>(bin) + 1] - edges[static_cast<size_t>(bin)]; }

  /// Bucket holding clamp(y, 0, 1); y = 1 belongs to the last bucket.
  int bin_of(double y) const;

  /// Throws a numeric Error unless edges run strictly increasing from 0 to 1.
  void validate() const;
};

BinGrid uniform_grid(int nbins);

struct BinBuildReport {
  int separated_edges = 0;
};

/// Interior edges at the i/nbins empirical quantiles of the pooled values
/// (clamped to [0,1]). Coincident edges are pushed apart by 1e-9; more than 1%
/// separated edges is a degenerate grid and throws.
BinGrid build_bins(std::vector<double> pooled, int nbins, BinBuildReport* report = nullptr);

/// Pools every y_t of n_draws prior curves of length m.
BinGrid build_bins_from_prior(Rng& rng, int n_draws, int m, int nbins = kDefaultBins,
                              BinBuildReport* report = nullptr);

}  // namespace lcx::pfn
