// SPDX-License-Identifier: Apache-2.0
//
// Encoder-only transformer over (t, y) context tokens and t-only query tokens.
// Context tokens attend to every context token; a query token attends to the
// context tokens and to itself, never to another query. There is no
// positional encoding, so outputs are invariant to the order of the context.
//
// Forward and backward passes are written by hand against Eigen and templated
// on the scalar type: training runs in float, gradient checks in double.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lcx/pfn/bin_grid.hpp"
#include "lcx/prior.hpp"

namespace lcx::pfn {

struct ModelConfig {
  int nlayers = 6;
  int emsize = 128;
  int nheads = 4;
  int nhidden = 1024;
  int nbins = kDefaultBins;
  int m = kDefaultHorizon;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename S>
struct LayerParams {
  RowVector<S> norm1_gain, norm1_bias;
  Matrix<S> qkv_weight;  // emsize x 3*emsize, column blocks Q | K | V
  RowVector<S> qkv_bias;
  Matrix<S> out_weight;  // emsize x emsize
  RowVector<S> out_bias;
  RowVector<S> norm2_gain, norm2_bias;
  Matrix<S> ff1_weight;  // emsize x nhidden
  RowVector<S> ff1_bias;
  Matrix<S> ff2_weight;  // nhidden x emsize
  RowVector<S> ff2_bias;
};

template <typename S>
struct ModelParams {
  ModelConfig config;
  RowVector<S> t_enc_weight, t_enc_bias;  // step encoder, shared by all tokens
  RowVector<S> y_enc_weight, y_enc_bias;  // value encoder, context tokens only
  std::vector<LayerParams<S>> layers;
  RowVector<S> out_norm_gain, out_norm_bias;
  Matrix<S> head_weight;  // emsize x nbins
  RowVector<S> head_bias;

  /// All tensors shaped for `config` and filled with zeros (layer-norm gains too).
  static ModelParams zeros(const ModelConfig& config);
  /// Training initialization: residual-branch output projections start at
  /// zero so every block is the identity map at step 0.
  static ModelParams initialized(const ModelConfig& config, Rng& rng);

  /// Calls f(name, span) for every tensor in a fixed order.
  template <class F>
  void visit(F&& f);
  template <class F>
  void visit(F&& f) const;

  size_t parameter_count() const;

  template <typename T>
  ModelParams<T> cast() const;
};

/// B sequences that share one context length and one query count. Steps are
/// 1-based epochs; the model sees them as t / m.
struct TokenBatch {
  int batch = 0;
  int n_context = 0;
  int n_query = 0;
  std::vector<double> context_t;  // batch x n_context
  std::vector<double> context_y;  // batch x n_context
  std::vector<double> query_t;    // batch x n_query
  std::vector<double> query_y;    // batch x n_query, targets (training only)

  void validate(int m) const;
};

template <typename S>
struct ForwardCache;

/// Logits for every query token, (batch * n_query) x nbins, rows ordered by
/// sequence then query.
template <typename S>
Matrix<S> forward_logits(const ModelParams<S>& params, const TokenBatch& batch, ForwardCache<S>* cache = nullptr);

/// Mean cross entropy over all query tokens of the bin holding clamp(y,0,1).
template <typename S>
double cross_entropy_loss(const ModelParams<S>& params, const BinGrid& grid, const TokenBatch& batch);

/// Loss plus exact reverse-mode gradient; `grad` is overwritten.
template <typename S>
double loss_and_gradient(const ModelParams<S>& params, const BinGrid& grid, const TokenBatch& batch,
                         ModelParams<S>& grad);

/// Row-wise softmax of forward_logits, as probabilities in double.
template <typename S>
std::vector<std::vector<double>> predict_probs(const ModelParams<S>& params, const TokenBatch& batch);

// ---------------------------------------------------------------------------

template <typename S>
template <class F>
void ModelParams<S>::visit(F&& f) {
  auto v = [&f](std::string_view name, auto& t) { f(name, std::span<S>(t.data(), static_cast<size_t>(t.size()))); };
  v("t_encoder.weight", t_enc_weight);
  v("t_encoder.bias", t_enc_bias);
  v("y_encoder.weight", y_enc_weight);
  v("y_encoder.bias", y_enc_bias);
  for (size_t i = 0; i < layers.size(); ++i) {
    auto& L = layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    v(p + "norm1.gain", L.norm1_gain);
    v(p + "norm1.bias", L.norm1_bias);
    v(p + "attn.qkv.weight", L.qkv_weight);
    v(p + "attn.qkv.bias", L.qkv_bias);
    v(p + "attn.out.weight", L.out_weight);
    v(p + "attn.out.bias", L.out_bias);
    v(p + "norm2.gain", L.norm2_gain);
    v(p + "norm2.bias", L.norm2_bias);
    v(p + "ff1.weight", L.ff1_weight);
    v(p + "ff1.bias", L.ff1_bias);
    v(p + "ff2.weight", L.ff2_weight);
    v(p + "ff2.bias", L.ff2_bias);
  }
  v("out_norm.gain", out_norm_gain);
  v("out_norm.bias", out_norm_bias);
  v("head.weight", head_weight);
  v("head.bias", head_bias);
}

template <typename S>
template <class F>
void ModelParams<S>::visit(F&& f) const {
  const_cast<ModelParams<S>*>(this)->visit([&f](std::string_view name, std::span<S> values) {
    f(name, std::span<const S>(values.data(), values.size()));
  });
}

template <typename S>
template <typename T>
ModelParams<T> ModelParams<S>::cast() const {
  ModelParams<T> out = ModelParams<T>::zeros(config);
  std::vector<std::span<const S>> src;
  visit([&src](std::string_view, std::span<const S> values) { src.push_back(values); });
  size_t i = 0;
  out.visit([&](std::string_view, std::span<T> values) {
    for (size_t k = 0; k < values.size(); ++k) values[k] = static_cast<T>(src[i][k]);
    ++i;
  });
  return out;
}

}  // namespace lcx::pfn
