// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "lcx/pfn/bin_grid.hpp"
#include "lcx/pfn/model.hpp"

namespace lcx::pfn {

struct TrainConfig {
  std::int64_t nb_data = 100000;  // total curves consumed
  int batch_size = 100;
  double lr = 1e-4;
  double warmup_fraction = 0.25;
  std::uint64_t seed = 0;
  bool materialize = false;  // draw all nb_data curves up front and walk them in order

  void validate() const;
  int steps() const { return static_cast<int>(nb_data / batch_size); }
};

/// Linear warmup to lr over the first warmup_fraction of steps, then cosine
/// decay towards zero.
double learning_rate_at(const TrainConfig& config, int step);

/// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8, no weight decay.
class Adam {
 public:
  explicit Adam(const ModelParams<float>& like);
  void step(ModelParams<float>& params, const ModelParams<float>& grad, double lr);
  int steps_taken() const { return t_; }

 private:
  ModelParams<float> m_, v_;
  int t_ = 0;
};

/// One training batch: `batch` fresh prior curves, context steps 1..cutoff and
/// query steps cutoff+1..m with their observations as targets.
TokenBatch make_training_batch(Rng& rng, int batch, int m, int cutoff);

/// Same layout from already-drawn curves (each of length m).
TokenBatch make_training_batch(const std::vector<std::vector<double>>& curves, int cutoff);

struct TrainResult {
  ModelParams<float> params;
  std::vector<double> losses;  // one per optimizer step
};

/// Called after every step with (step, loss, learning rate).
using TrainObserver = std::function<void(int, double, double)>;

/// Throws a numeric Error if the loss ever becomes non-finite.
TrainResult train(const ModelConfig& model, const BinGrid& grid, const TrainConfig& config,
                  const TrainObserver& observer = {});

/// Means of consecutive non-overlapping windows of `window` losses.
std::vector<double> windowed_means(const std::vector<double>& losses, int window);

}  // namespace lcx::pfn
