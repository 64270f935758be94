// SPDX-License-Identifier: Apache-2.0
#include "lcx/pfn/train.hpp"

#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <numbers>
#include <thread>

#include "lcx/error.hpp"

namespace lcx::pfn {

void TrainConfig::validate() const {
  if (nb_data < 1 || batch_size < 1) throw_config("nb_data and batch_size must be positive");
  if (nb_data % batch_size != 0) throw_config("nb_data must be divisible by batch_size");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw_config("lr must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw_config("warmup_fraction must lie in [0,1)");
}

double learning_rate_at(const TrainConfig& config, int step) {
  const int total = config.steps();
  const int warmup = static_cast<int>(std::floor(config.warmup_fraction * total));
  if (step < warmup) return config.lr * static_cast<double>(step + 1) / warmup;
  const double progress = static_cast<double>(step - warmup) / std::max(1, total - warmup);
  return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(const ModelParams<float>& like)
    : m_(ModelParams<float>::zeros(like.config)), v_(ModelParams<float>::zeros(like.config)) {}

void Adam::step(ModelParams<float>& params, const ModelParams<float>& grad, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  std::vector<std::span<float>> p, m, v;
  std::vector<std::span<const float>> g;
  params.visit([&p](std::string_view, std::span<float> s) { p.push_back(s); });
  m_.visit([&m](std::string_view, std::span<float> s) { m.push_back(s); });
  v_.visit([&v](std::string_view, std::span<float> s) { v.push_back(s); });
  grad.visit([&g](std::string_view, std::span<const float> s) { g.push_back(s); });
  const auto fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  const auto step_size = static_cast<float>(lr / c1);
  const auto inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const auto feps = static_cast<float>(eps);
  for (size_t k = 0; k < p.size(); ++k) {
    for (size_t i = 0; i < p[k].size(); ++i) {
      const float gi = g[k][i];
      m[k][i] = fb1 * m[k][i] + (1.0f - fb1) * gi;
      v[k][i] = fb2 * v[k][i] + (1.0f - fb2) * gi * gi;
      p[k][i] -= step_size * m[k][i] / (std::sqrt(v[k][i]) * inv_sqrt_c2 + feps);
    }
  }
}

TokenBatch make_training_batch(const std::vector<std::vector<double>>& curves, int cutoff) {
  if (curves.empty()) throw_config("empty training batch");
  const int m = static_cast<int>(curves.front().size());
  if (cutoff < 0 || cutoff >= m) throw_config("cutoff must lie in [0, m)");
  TokenBatch b;
  b.batch = static_cast<int>(curves.size());
  b.n_context = cutoff;
  b.n_query = m - cutoff;
  for (const auto& y : curves) {
    if (static_cast<int>(y.size()) != m) throw_config("training curves must share one length");
    for (int t = 1; t <= m; ++t) {
      if (t <= cutoff) {
        b.context_t.push_back(t);
        b.context_y.push_back(y[static_cast<size_t>(t - 1)]);
      } else {
        b.query_t.push_back(t);
        b.query_y.push_back(y[static_cast<size_t>(t - 1)]);
      }
    }
  }
  return b;
}

TokenBatch make_training_batch(Rng& rng, int batch, int m, int cutoff) {
  std::vector<std::vector<double>> curves;
  curves.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) curves.push_back(sample_prior_curve(rng, m).y);
  return make_training_batch(curves, cutoff);
}

namespace {

// Single-producer, single-consumer queue holding at most `capacity` batches.
class BatchQueue {
 public:
  explicit BatchQueue(size_t capacity) : capacity_(capacity) {}

  bool push(TokenBatch b) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return q_.size() < capacity_ || closed_; });
    if (closed_) return false;
    q_.push_back(std::move(b));
    not_empty_.notify_one();
    return true;
  }

  TokenBatch pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !q_.empty() || failure_; });
    if (failure_ && q_.empty()) std::rethrow_exception(failure_);
    TokenBatch b = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return b;
  }

  void fail(std::exception_ptr e) {
    std::lock_guard lock(mu_);
    failure_ = e;
    not_empty_.notify_all();
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_full_.notify_all();
  }

 private:
  size_t capacity_;
  std::deque<TokenBatch> q_;
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  bool closed_ = false;
  std::exception_ptr failure_;
};

}  // namespace

TrainResult train(const ModelConfig& model, const BinGrid& grid, const TrainConfig& config,
                  const TrainObserver& observer) {
  model.validate();
  config.validate();
  grid.validate();
  if (grid.nbins() != model.nbins) throw_config("bin grid does not match nbins");

  // Separate streams for initialization and data so either can change
  // without perturbing the other.
  std::seed_seq init_seq{config.seed, std::uint64_t{0x1}};
  std::seed_seq data_seq{config.seed, std::uint64_t{0x2}};
  Rng init_rng(init_seq);
  Rng data_rng(data_seq);

  TrainResult result{ModelParams<float>::initialized(model, init_rng), {}};
  const int steps = config.steps();
  result.losses.reserve(static_cast<size_t>(steps));

  std::vector<std::vector<double>> pool;
  if (config.materialize) {
    pool.reserve(static_cast<size_t>(config.nb_data));
    for (std::int64_t i = 0; i < config.nb_data; ++i) pool.push_back(sample_prior_curve(data_rng, model.m).y);
  }

  BatchQueue queue(2);
  std::thread producer([&] {
    try {
      std::uniform_int_distribution<int> cut(0, model.m - 1);
      for (int s = 0; s < steps; ++s) {
        const int cutoff = cut(data_rng);
        TokenBatch b;
        if (config.materialize) {
          const auto first = pool.begin() + static_cast<std::ptrdiff_t>(s) * config.batch_size;
          b = make_training_batch(std::vector<std::vector<double>>(first, first + config.batch_size), cutoff);
        } else {
          b = make_training_batch(data_rng, config.batch_size, model.m, cutoff);
        }
        if (!queue.push(std::move(b))) return;
      }
    } catch (...) {
      queue.fail(std::current_exception());
    }
  });

  Adam adam(result.params);
  ModelParams<float> grad = ModelParams<float>::zeros(model);
  try {
    for (int s = 0; s < steps; ++s) {
      const TokenBatch batch = queue.pop();
      const double loss = loss_and_gradient(result.params, grid, batch, grad);
      if (!std::isfinite(loss)) throw_numeric("training diverged at step " + std::to_string(s));
      const double lr = learning_rate_at(config, s);
      adam.step(result.params, grad, lr);
      result.losses.push_back(loss);
      if (observer) observer(s, loss, lr);
    }
  } catch (...) {
    queue.close();
    producer.join();
    throw;
  }
  queue.close();
  producer.join();
  return result;
}

std::vector<double> windowed_means(const std::vector<double>& losses, int window) {
  if (window < 1) throw_config("window must be >= 1");
  std::vector<double> out;
  for (size_t i = 0; i + static_cast<size_t>(window) <= losses.size(); i += static_cast<size_t>(window)) {
    double s = 0.0;
    for (size_t k = 0; k < static_cast<size_t>(window); ++k) s += losses[i + k];
    out.push_back(s / window);
  }
  return out;
}

}  // namespace lcx::pfn
