// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <span>
#include <vector>

#include "lcx/pfn/discrete_ppd.hpp"
#include "lcx/pfn/model.hpp"
#include "lcx/predictive.hpp"

namespace lcx::pfn {

/// A trained model plus its bucket grid. Immutable; predict() may be called
/// from several threads at once.
class Predictor {
 public:
  Predictor(ModelParams<float> params, BinGrid grid);

  const ModelConfig& config() const { return params_.config; }
  const BinGrid& grid() const { return *grid_; }
  const ModelParams<float>& params() const { return params_; }

  /// Observations y_1..y_T at steps 1..T (T = prefix.size() < m); one PPD per
  /// query step. Values are fed to the encoder unclipped.
  std::vector<DiscretePPD> predict(std::span<const double> prefix, std::span<const int> query_steps) const;

  /// Arbitrary (step, value) context pairs, in any order.
  std::vector<DiscretePPD> predict_pairs(std::span<const int> steps, std::span<const double> values,
                                         std::span<const int> query_steps) const;

  /// Several prefixes of equal length in one forward pass; result[i][j] is
  /// the PPD of prefix i at query j.
  std::vector<std::vector<DiscretePPD>> predict_batch(const std::vector<std::vector<double>>& prefixes,
                                                      std::span<const int> query_steps) const;

  PpdProvider provider() const;

 private:
  ModelParams<float> params_;
  std::shared_ptr<const BinGrid> grid_;
};

}  // namespace lcx::pfn
