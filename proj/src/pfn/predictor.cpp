// SPDX-License-Identifier: Apache-2.0
#include "lcx/pfn/predictor.hpp"

#include "lcx/error.hpp"

namespace lcx::pfn {

namespace {

// Query rows are padded to a multiple of this many rows so that every real
// query passes through the same full-width matrix-product kernel, keeping a
// query's PPD bit-identical no matter which other queries share the call.
constexpr size_t kQueryBlock = 48;

std::vector<double> padded_queries(std::span<const int> query_steps) {
  if (query_steps.empty()) throw_config("need at least one query step");
  const size_t n = (query_steps.size() + kQueryBlock - 1) / kQueryBlock * kQueryBlock;
  std::vector<double> out(query_steps.begin(), query_steps.end());
  out.resize(n, static_cast<double>(query_steps.back()));
  return out;
}

}  // namespace

Predictor::Predictor(ModelParams<float> params, BinGrid grid)
    : params_(std::move(params)), grid_(std::make_shared<const BinGrid>(std::move(grid))) {
  params_.config.validate();
  grid_->validate();
  if (grid_->nbins() != params_.config.nbins) throw_config("bin grid does not match the model's bucket count");
}

std::vector<DiscretePPD> Predictor::predict(std::span<const double> prefix, std::span<const int> query_steps) const {
  std::vector<int> steps(prefix.size());
  for (size_t i = 0; i < steps.size(); ++i) steps[i] = static_cast<int>(i) + 1;
  return predict_pairs(steps, prefix, query_steps);
}

std::vector<DiscretePPD> Predictor::predict_pairs(std::span<const int> steps, std::span<const double> values,
                                                  std::span<const int> query_steps) const {
  if (steps.size() != values.size()) throw_config("context steps and values differ in length");
  TokenBatch batch;
  batch.batch = 1;
  batch.n_context = static_cast<int>(steps.size());
  batch.context_t.assign(steps.begin(), steps.end());
  batch.context_y.assign(values.begin(), values.end());
  batch.query_t = padded_queries(query_steps);
  batch.n_query = static_cast<int>(batch.query_t.size());
  auto probs = predict_probs(params_, batch);
  std::vector<DiscretePPD> out;
  out.reserve(query_steps.size());
  for (size_t j = 0; j < query_steps.size(); ++j) out.push_back(DiscretePPD{std::move(probs[j]), grid_});
  return out;
}

std::vector<std::vector<DiscretePPD>> Predictor::predict_batch(const std::vector<std::vector<double>>& prefixes,
                                                               std::span<const int> query_steps) const {
  if (prefixes.empty()) return {};
  const size_t T = prefixes.front().size();
  TokenBatch batch;
  batch.batch = static_cast<int>(prefixes.size());
  batch.n_context = static_cast<int>(T);
  const std::vector<double> queries = padded_queries(query_steps);
  batch.n_query = static_cast<int>(queries.size());
  for (const auto& pre : prefixes) {
    if (pre.size() != T) throw_config("batched prefixes must share one length");
    for (size_t i = 0; i < T; ++i) batch.context_t.push_back(static_cast<double>(i + 1));
    batch.context_y.insert(batch.context_y.end(), pre.begin(), pre.end());
    batch.query_t.insert(batch.query_t.end(), queries.begin(), queries.end());
  }
  auto probs = predict_probs(params_, batch);
  std::vector<std::vector<DiscretePPD>> out(prefixes.size());
  for (size_t i = 0; i < prefixes.size(); ++i)
    for (size_t j = 0; j < query_steps.size(); ++j)
      out[i].push_back(DiscretePPD{std::move(probs[i * queries.size() + j]), grid_});
  return out;
}

PpdProvider Predictor::provider() const {
  return [self = *this](std::span<const double> prefix, std::span<const int> query_steps) {
    auto ppds = self.predict(prefix, query_steps);
    return std::vector<Predictive>(std::make_move_iterator(ppds.begin()), std::make_move_iterator(ppds.end()));
  };
}

}  // namespace lcx::pfn
