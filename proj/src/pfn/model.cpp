// SPDX-License-Identifier: Apache-2.0
#include "lcx/pfn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "lcx/error.hpp"

namespace lcx::pfn {

namespace {

template <typename S>
using ColVector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

constexpr double kLayerNormEps = 1e-5;

// Aligned to the widest SIMD packet so row alignment is the same in every call.
template <typename S>
using ProbBuffer = std::vector<S, Eigen::aligned_allocator<S>>;

}  // namespace

// Activations of one token stream (context rows or query rows) in one layer.
template <typename S>
struct StreamCache {
  Matrix<S> ln1_xhat, h1;
  ColVector<S> ln1_rstd;
  Matrix<S> qkv, ctx;
  Matrix<S> ln2_xhat, h2;
  ColVector<S> ln2_rstd;
  Matrix<S> u, g;  // pre- and post-activation of the feed-forward hidden layer
};

// Context and query rows live in separate matrices: a query's arithmetic then
// never depends on how many other queries share the call.
template <typename S>
struct ForwardCache {
  struct Layer {
    StreamCache<S> c, q;
    ProbBuffer<S> probs;  // attention probabilities, layout described at StridedMap
  };
  int batch = 0, nt = 0, nq = 0;
  std::vector<S> ctx_t, ctx_y, query_t;  // encoder inputs, t already scaled by 1/m
  std::vector<Layer> layers;
  Matrix<S> out_xhat, out_z;
  ColVector<S> out_rstd;
};

void ModelConfig::validate() const {
  if (nlayers < 1) throw_config("nlayers must be >= 1");
  if (emsize < 1 || nheads < 1) throw_config("emsize and nheads must be positive");
  if (emsize % nheads != 0) throw_config("emsize must be divisible by nheads");
  if (nhidden < 1) throw_config("nhidden must be >= 1");
  if (nbins < 2) throw_config("nbins must be >= 2");
  if (m < 1) throw_config("m must be >= 1");
}

void TokenBatch::validate(int m) const {
  if (batch < 1) throw_config("token batch: batch must be >= 1");
  if (n_context < 0 || n_context >= m) throw_config("token batch: need 0 <= context length < m");
  if (n_query < 1) throw_config("token batch: need at least one query");
  const auto nc = static_cast<size_t>(batch) * static_cast<size_t>(n_context);
  const auto nqs = static_cast<size_t>(batch) * static_cast<size_t>(n_query);
  if (context_t.size() != nc || context_y.size() != nc) throw_config("token batch: context arrays have wrong size");
  if (query_t.size() != nqs) throw_config("token batch: query array has wrong size");
  if (!query_y.empty() && query_y.size() != nqs) throw_config("token batch: target array has wrong size");
  auto step_ok = [m](double t) { return std::isfinite(t) && t >= 1.0 && t <= m; };
  if (!std::all_of(context_t.begin(), context_t.end(), step_ok) || !std::all_of(query_t.begin(), query_t.end(), step_ok))
    throw_config("token batch: steps must lie in [1, m]");
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(context_y.begin(), context_y.end(), finite)) throw_config("token batch: non-finite context value");
}

template <typename S>
ModelParams<S> ModelParams<S>::zeros(const ModelConfig& config) {
  config.validate();
  const int E = config.emsize, H = config.nhidden;
  ModelParams p;
  p.config = config;
  p.t_enc_weight = RowVector<S>::Zero(E);
  p.t_enc_bias = RowVector<S>::Zero(E);
  p.y_enc_weight = RowVector<S>::Zero(E);
  p.y_enc_bias = RowVector<S>::Zero(E);
  p.layers.resize(static_cast<size_t>(config.nlayers));
  for (auto& L : p.layers) {
    L.norm1_gain = RowVector<S>::Zero(E);
    L.norm1_bias = RowVector<S>::Zero(E);
    L.qkv_weight = Matrix<S>::Zero(E, 3 * E);
    L.qkv_bias = RowVector<S>::Zero(3 * E);
    L.out_weight = Matrix<S>::Zero(E, E);
    L.out_bias = RowVector<S>::Zero(E);
    L.norm2_gain = RowVector<S>::Zero(E);
    L.norm2_bias = RowVector<S>::Zero(E);
    L.ff1_weight = Matrix<S>::Zero(E, H);
    L.ff1_bias = RowVector<S>::Zero(H);
    L.ff2_weight = Matrix<S>::Zero(H, E);
    L.ff2_bias = RowVector<S>::Zero(E);
  }
  p.out_norm_gain = RowVector<S>::Zero(E);
  p.out_norm_bias = RowVector<S>::Zero(E);
  p.head_weight = Matrix<S>::Zero(E, config.nbins);
  p.head_bias = RowVector<S>::Zero(config.nbins);
  return p;
}

template <typename S>
ModelParams<S> ModelParams<S>::initialized(const ModelConfig& config, Rng& rng) {
  ModelParams p = zeros(config);
  const int E = config.emsize;
  auto fill_uniform = [&rng](auto& t, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<S>(u(rng));
  };
  // Single-input linear encoders: fan-in 1.
  fill_uniform(p.t_enc_weight, 1.0);
  fill_uniform(p.t_enc_bias, 1.0);
  fill_uniform(p.y_enc_weight, 1.0);
  fill_uniform(p.y_enc_bias, 1.0);
  const double xavier = std::sqrt(6.0 / (E + 3.0 * E));
  const double fan_in = 1.0 / std::sqrt(static_cast<double>(E));
  for (auto& L : p.layers) {
    L.norm1_gain.setOnes();
    L.norm2_gain.setOnes();
    fill_uniform(L.qkv_weight, xavier);
    fill_uniform(L.ff1_weight, fan_in);
    fill_uniform(L.ff1_bias, fan_in);
    // out_weight, ff2_weight and their biases stay zero.
  }
  p.out_norm_gain.setOnes();
  // Head stays zero: the untrained model predicts the uniform bucket distribution.
  return p;
}

template <typename S>
size_t ModelParams<S>::parameter_count() const {
  size_t n = 0;
  visit([&n](std::string_view, std::span<const S> v) { n += v.size(); });
  return n;
}

namespace {

// Row statistics use plain sequential loops: vectorized reductions peel
// differently depending on each row's address alignment, which would make a
// row's result depend on where it sits in the matrix.
template <typename S>
void layer_norm(const Matrix<S>& x, const RowVector<S>& gain, const RowVector<S>& bias, Matrix<S>& out,
                Matrix<S>& xhat, ColVector<S>& rstd) {
  const Eigen::Index n = x.rows(), E = x.cols();
  xhat.resize(n, E);
  out.resize(n, E);
  rstd.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S* xr = x.data() + r * E;
    S sum = 0;
    for (Eigen::Index k = 0; k < E; ++k) sum += xr[k];
    const S mean = sum / static_cast<S>(E);
    S sq = 0;
    for (Eigen::Index k = 0; k < E; ++k) sq += (xr[k] - mean) * (xr[k] - mean);
    const S rs = S(1) / std::sqrt(sq / static_cast<S>(E) + static_cast<S>(kLayerNormEps));
    rstd(r) = rs;
    xhat.row(r) = (x.row(r).array() - mean) * rs;
    out.row(r) = xhat.row(r).cwiseProduct(gain) + bias;
  }
}

// Returns dx; accumulates dgain / dbias.
template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S>& dy, const Matrix<S>& xhat, const ColVector<S>& rstd,
                              const RowVector<S>& gain, RowVector<S>& dgain, RowVector<S>& dbias) {
  dgain += dy.cwiseProduct(xhat).colwise().sum();
  dbias += dy.colwise().sum();
  Matrix<S> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const RowVector<S> dxhat = dy.row(r).cwiseProduct(gain);
    const S m1 = dxhat.mean();
    const S m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
    dx.row(r) = rstd(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
  }
  return dx;
}

// Attention probabilities: per (sequence, head) a context block nt x ld(nt)
// and a query block nq x ld(nt+1). Row strides are padded to 64 bytes so every
// row of a block has the same alignment and hence the same reduction order.
template <typename S>
using StridedMap = Eigen::Map<Matrix<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstStridedMap = Eigen::Map<const Matrix<S>, 0, Eigen::OuterStride<>>;

template <typename S>
Eigen::Index padded_ld(Eigen::Index cols) {
  constexpr Eigen::Index lanes = 64 / static_cast<Eigen::Index>(sizeof(S));
  return std::max<Eigen::Index>(1, (cols + lanes - 1) / lanes * lanes);
}

template <typename S>
void softmax_rows(StridedMap<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluC = 0.044715;

// tanh-approximated GELU and its derivative, evaluated with Eigen's packet
// tanh over whole matrices.
template <typename S>
Matrix<S> gelu(const Matrix<S>& u) {
  const auto a = u.array();
  const auto th = (static_cast<S>(kGeluK) * (a + static_cast<S>(kGeluC) * a.cube())).tanh();
  return (S(0.5) * a * (S(1) + th)).matrix();
}

template <typename S>
Matrix<S> gelu_grad(const Matrix<S>& u) {
  const auto a = u.array();
  const S k = static_cast<S>(kGeluK), c = static_cast<S>(kGeluC);
  const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> th = (k * (a + c * a.cube())).tanh();
  return (S(0.5) * (S(1) + th) + S(0.5) * a * (S(1) - th.square()) * k * (S(1) + S(3) * c * a.square())).matrix();
}

struct Dims {
  int B, nt, nq, E, nh, d;
  template <typename S>
  size_t context_block() const {
    return static_cast<size_t>(nt) * static_cast<size_t>(padded_ld<S>(nt));
  }
  template <typename S>
  size_t per_head() const {
    return context_block<S>() + static_cast<size_t>(nq) * static_cast<size_t>(padded_ld<S>(nt + 1));
  }
};

template <typename S>
void attention_forward(const Dims& D, const Matrix<S>& qkv_c, const Matrix<S>& qkv_q, ProbBuffer<S>& probs,
                       Matrix<S>& ctx_c, Matrix<S>& ctx_q) {
  const S scale = S(1) / std::sqrt(static_cast<S>(D.d));
  const size_t per = D.template per_head<S>();
  probs.assign(static_cast<size_t>(D.B) * D.nh * per, S(0));
  ctx_c.resize(qkv_c.rows(), D.E);
  ctx_q.resize(qkv_q.rows(), D.E);
  for (int b = 0; b < D.B; ++b) {
    const Eigen::Index rc = static_cast<Eigen::Index>(b) * D.nt, rq = static_cast<Eigen::Index>(b) * D.nq;
    for (int h = 0; h < D.nh; ++h) {
      const Eigen::Index cq = h * D.d, ck = D.E + h * D.d, cv = 2 * D.E + h * D.d;
      S* base = probs.data() + (static_cast<size_t>(b) * D.nh + h) * per;
      StridedMap<S> Pc(base, D.nt, D.nt, Eigen::OuterStride<>(padded_ld<S>(D.nt)));
      StridedMap<S> Pq(base + D.template context_block<S>(), D.nq, D.nt + 1,
                       Eigen::OuterStride<>(padded_ld<S>(D.nt + 1)));
      const auto Qq = qkv_q.block(rq, cq, D.nq, D.d);
      const auto Kq = qkv_q.block(rq, ck, D.nq, D.d);
      const auto Vq = qkv_q.block(rq, cv, D.nq, D.d);
      auto out_q = ctx_q.block(rq, cq, D.nq, D.d);
      if (D.nt > 0) {
        const auto Qc = qkv_c.block(rc, cq, D.nt, D.d);
        const auto Kc = qkv_c.block(rc, ck, D.nt, D.d);
        const auto Vc = qkv_c.block(rc, cv, D.nt, D.d);
        Pc.noalias() = scale * (Qc * Kc.transpose());
        softmax_rows(Pc);
        ctx_c.block(rc, cq, D.nt, D.d).noalias() = Pc * Vc;
        Pq.leftCols(D.nt).noalias() = scale * (Qq * Kc.transpose());
      }
      for (Eigen::Index i = 0; i < D.nq; ++i) {
        S dot = 0;
        for (Eigen::Index k = 0; k < D.d; ++k) dot += Qq(i, k) * Kq(i, k);
        Pq(i, D.nt) = scale * dot;
      }
      softmax_rows(Pq);
      out_q = Pq.col(D.nt).asDiagonal() * Vq;
      if (D.nt > 0) out_q.noalias() += Pq.leftCols(D.nt) * qkv_c.block(rc, cv, D.nt, D.d);
    }
  }
}

template <typename S>
void attention_backward(const Dims& D, const Matrix<S>& qkv_c, const Matrix<S>& qkv_q, const ProbBuffer<S>& probs,
                        const Matrix<S>& dctx_c, const Matrix<S>& dctx_q, Matrix<S>& dqkv_c, Matrix<S>& dqkv_q) {
  const S scale = S(1) / std::sqrt(static_cast<S>(D.d));
  const size_t per = D.template per_head<S>();
  dqkv_c.setZero(qkv_c.rows(), 3 * D.E);
  dqkv_q.setZero(qkv_q.rows(), 3 * D.E);
  Matrix<S> dP, dPq;
  ColVector<S> r, dps;
  for (int b = 0; b < D.B; ++b) {
    const Eigen::Index rc = static_cast<Eigen::Index>(b) * D.nt, rq = static_cast<Eigen::Index>(b) * D.nq;
    for (int h = 0; h < D.nh; ++h) {
      const Eigen::Index cq = h * D.d, ck = D.E + h * D.d, cv = 2 * D.E + h * D.d;
      const S* base = probs.data() + (static_cast<size_t>(b) * D.nh + h) * per;
      ConstStridedMap<S> Pc(base, D.nt, D.nt, Eigen::OuterStride<>(padded_ld<S>(D.nt)));
      ConstStridedMap<S> Pq(base + D.template context_block<S>(), D.nq, D.nt + 1,
                            Eigen::OuterStride<>(padded_ld<S>(D.nt + 1)));
      const auto Qc = qkv_c.block(rc, cq, D.nt, D.d);
      const auto Kc = qkv_c.block(rc, ck, D.nt, D.d);
      const auto Vc = qkv_c.block(rc, cv, D.nt, D.d);
      const auto Qq = qkv_q.block(rq, cq, D.nq, D.d);
      const auto Kq = qkv_q.block(rq, ck, D.nq, D.d);
      const auto Vq = qkv_q.block(rq, cv, D.nq, D.d);
      const auto dCc = dctx_c.block(rc, cq, D.nt, D.d);
      const auto dCq = dctx_q.block(rq, cq, D.nq, D.d);
      auto dQc = dqkv_c.block(rc, cq, D.nt, D.d);
      auto dKc = dqkv_c.block(rc, ck, D.nt, D.d);
      auto dVc = dqkv_c.block(rc, cv, D.nt, D.d);
      auto dQq = dqkv_q.block(rq, cq, D.nq, D.d);
      auto dKq = dqkv_q.block(rq, ck, D.nq, D.d);
      auto dVq = dqkv_q.block(rq, cv, D.nq, D.d);

      // Query rows: softmax over [context keys | own key].
      const auto pself = Pq.col(D.nt);
      dps = dCq.cwiseProduct(Vq).rowwise().sum();
      dVq = pself.asDiagonal() * dCq;
      r = pself.cwiseProduct(dps);
      if (D.nt > 0) {
        const auto Pqc = Pq.leftCols(D.nt);
        dPq.noalias() = dCq * Vc.transpose();
        dVc.noalias() += Pqc.transpose() * dCq;
        r += Pqc.cwiseProduct(dPq).rowwise().sum();
        dPq = Pqc.cwiseProduct(dPq - r.replicate(1, D.nt));  // now dS for the context columns
        dQq.noalias() = scale * (dPq * Kc);
        dKc.noalias() += scale * (dPq.transpose() * Qq);
      }
      const ColVector<S> dss = scale * pself.cwiseProduct(dps - r);
      dQq += dss.asDiagonal() * Kq;
      dKq = dss.asDiagonal() * Qq;

      if (D.nt > 0) {
        dP.noalias() = dCc * Vc.transpose();
        dVc.noalias() += Pc.transpose() * dCc;
        const ColVector<S> rc_sum = Pc.cwiseProduct(dP).rowwise().sum();
        dP = Pc.cwiseProduct(dP - rc_sum.replicate(1, D.nt));
        dQc.noalias() = scale * (dP * Kc);
        dKc.noalias() += scale * (dP.transpose() * Qc);
      }
    }
  }
}

template <typename S>
void pre_attention(const LayerParams<S>& L, const Matrix<S>& x, StreamCache<S>& K) {
  layer_norm(x, L.norm1_gain, L.norm1_bias, K.h1, K.ln1_xhat, K.ln1_rstd);
  K.qkv.noalias() = K.h1 * L.qkv_weight;
  K.qkv.rowwise() += L.qkv_bias;
}

template <typename S>
void post_attention(const LayerParams<S>& L, Matrix<S>& x, StreamCache<S>& K, Matrix<S>& tmp) {
  tmp.noalias() = K.ctx * L.out_weight;
  tmp.rowwise() += L.out_bias;
  x += tmp;
  layer_norm(x, L.norm2_gain, L.norm2_bias, K.h2, K.ln2_xhat, K.ln2_rstd);
  K.u.noalias() = K.h2 * L.ff1_weight;
  K.u.rowwise() += L.ff1_bias;
  K.g = gelu(K.u);
  tmp.noalias() = K.g * L.ff2_weight;
  tmp.rowwise() += L.ff2_bias;
  x += tmp;
}

// dx enters as the gradient at the block output and leaves as the gradient
// after the attention residual; returns the gradient at the attention output.
template <typename S>
Matrix<S> post_attention_backward(const LayerParams<S>& L, LayerParams<S>& GL, const StreamCache<S>& K,
                                  Matrix<S>& dx) {
  GL.ff2_weight.noalias() += K.g.transpose() * dx;
  GL.ff2_bias += dx.colwise().sum();
  Matrix<S> dbig = dx * L.ff2_weight.transpose();
  dbig = dbig.cwiseProduct(gelu_grad(K.u));
  GL.ff1_weight.noalias() += K.h2.transpose() * dbig;
  GL.ff1_bias += dbig.colwise().sum();
  const Matrix<S> dh = dbig * L.ff1_weight.transpose();
  dx += layer_norm_backward(dh, K.ln2_xhat, K.ln2_rstd, L.norm2_gain, GL.norm2_gain, GL.norm2_bias);
  GL.out_weight.noalias() += K.ctx.transpose() * dx;
  GL.out_bias += dx.colwise().sum();
  return dx * L.out_weight.transpose();
}

template <typename S>
void pre_attention_backward(const LayerParams<S>& L, LayerParams<S>& GL, const StreamCache<S>& K,
                            const Matrix<S>& dqkv, Matrix<S>& dx) {
  GL.qkv_weight.noalias() += K.h1.transpose() * dqkv;
  GL.qkv_bias += dqkv.colwise().sum();
  const Matrix<S> dh = dqkv * L.qkv_weight.transpose();
  dx += layer_norm_backward(dh, K.ln1_xhat, K.ln1_rstd, L.norm1_gain, GL.norm1_gain, GL.norm1_bias);
}

template <typename S>
Matrix<S> forward_impl(const ModelParams<S>& P, const TokenBatch& batch, ForwardCache<S>& C) {
  batch.validate(P.config.m);
  const auto& cfg = P.config;
  const Dims D{batch.batch, batch.n_context, batch.n_query, cfg.emsize, cfg.nheads, cfg.emsize / cfg.nheads};
  const auto nc = static_cast<Eigen::Index>(D.B) * D.nt, nq = static_cast<Eigen::Index>(D.B) * D.nq;
  const S inv_m = S(1) / static_cast<S>(cfg.m);

  C.batch = D.B;
  C.nt = D.nt;
  C.nq = D.nq;
  C.ctx_t.resize(static_cast<size_t>(nc));
  C.ctx_y.resize(static_cast<size_t>(nc));
  C.query_t.resize(static_cast<size_t>(nq));
  std::vector<size_t> order(static_cast<size_t>(D.nt));
  for (int b = 0; b < D.B; ++b) {
    // Context tokens are laid out in (t, y) order so that floating-point
    // reductions over keys do not depend on the caller's ordering.
    const size_t c0 = static_cast<size_t>(b) * D.nt;
    std::iota(order.begin(), order.end(), c0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t c) {
      return std::pair(batch.context_t[a], batch.context_y[a]) < std::pair(batch.context_t[c], batch.context_y[c]);
    });
    for (int i = 0; i < D.nt; ++i) {
      C.ctx_t[c0 + i] = static_cast<S>(batch.context_t[order[static_cast<size_t>(i)]]) * inv_m;
      C.ctx_y[c0 + i] = static_cast<S>(batch.context_y[order[static_cast<size_t>(i)]]);
    }
  }
  for (Eigen::Index i = 0; i < nq; ++i) C.query_t[static_cast<size_t>(i)] = static_cast<S>(batch.query_t[static_cast<size_t>(i)]) * inv_m;

  Matrix<S> xc(nc, D.E), xq(nq, D.E);
  for (Eigen::Index i = 0; i < nc; ++i)
    xc.row(i) = C.ctx_t[static_cast<size_t>(i)] * P.t_enc_weight + P.t_enc_bias +
                C.ctx_y[static_cast<size_t>(i)] * P.y_enc_weight + P.y_enc_bias;
  for (Eigen::Index i = 0; i < nq; ++i) xq.row(i) = C.query_t[static_cast<size_t>(i)] * P.t_enc_weight + P.t_enc_bias;

  C.layers.resize(P.layers.size());
  Matrix<S> tmp;
  for (size_t l = 0; l < P.layers.size(); ++l) {
    const auto& L = P.layers[l];
    auto& K = C.layers[l];
    pre_attention(L, xc, K.c);
    pre_attention(L, xq, K.q);
    attention_forward(D, K.c.qkv, K.q.qkv, K.probs, K.c.ctx, K.q.ctx);
    // Context rows of the last block feed nothing downstream.
    if (l + 1 < P.layers.size()) post_attention(L, xc, K.c, tmp);
    post_attention(L, xq, K.q, tmp);
  }

  layer_norm(xq, P.out_norm_gain, P.out_norm_bias, C.out_z, C.out_xhat, C.out_rstd);
  Matrix<S> logits = C.out_z * P.head_weight;
  logits.rowwise() += P.head_bias;
  return logits;
}

template <typename S>
void backward_impl(const ModelParams<S>& P, const ForwardCache<S>& C, const Matrix<S>& dlogits, ModelParams<S>& G) {
  const auto& cfg = P.config;
  const Dims D{C.batch, C.nt, C.nq, cfg.emsize, cfg.nheads, cfg.emsize / cfg.nheads};
  const auto nc = static_cast<Eigen::Index>(D.B) * D.nt;

  G.head_weight.noalias() += C.out_z.transpose() * dlogits;
  G.head_bias += dlogits.colwise().sum();
  const Matrix<S> dz = dlogits * P.head_weight.transpose();
  Matrix<S> dxq = layer_norm_backward(dz, C.out_xhat, C.out_rstd, P.out_norm_gain, G.out_norm_gain, G.out_norm_bias);
  Matrix<S> dxc = Matrix<S>::Zero(nc, D.E);

  Matrix<S> dqkv_c, dqkv_q;
  for (size_t li = P.layers.size(); li-- > 0;) {
    const auto& L = P.layers[li];
    const auto& K = C.layers[li];
    auto& GL = G.layers[li];
    const Matrix<S> dctx_c =
        li + 1 < P.layers.size() ? post_attention_backward(L, GL, K.c, dxc) : Matrix<S>::Zero(nc, D.E);
    const Matrix<S> dctx_q = post_attention_backward(L, GL, K.q, dxq);
    attention_backward(D, K.c.qkv, K.q.qkv, K.probs, dctx_c, dctx_q, dqkv_c, dqkv_q);
    pre_attention_backward(L, GL, K.c, dqkv_c, dxc);
    pre_attention_backward(L, GL, K.q, dqkv_q, dxq);
  }

  for (Eigen::Index i = 0; i < nc; ++i) {
    const auto g = dxc.row(i);
    G.t_enc_weight += C.ctx_t[static_cast<size_t>(i)] * g;
    G.t_enc_bias += g;
    G.y_enc_weight += C.ctx_y[static_cast<size_t>(i)] * g;
    G.y_enc_bias += g;
  }
  for (Eigen::Index i = 0; i < dxq.rows(); ++i) {
    const auto g = dxq.row(i);
    G.t_enc_weight += C.query_t[static_cast<size_t>(i)] * g;
    G.t_enc_bias += g;
  }
}

// Mean cross entropy; fills dlogits when non-null.
template <typename S>
double cross_entropy(const Matrix<S>& logits, const BinGrid& grid, const TokenBatch& batch, Matrix<S>* dlogits) {
  if (batch.query_y.size() != static_cast<size_t>(logits.rows())) throw_config("token batch: missing targets");
  if (grid.nbins() != logits.cols()) throw_config("bin grid does not match the model's bucket count");
  const auto n = logits.rows();
  double total = 0.0;
  if (dlogits) dlogits->resize(n, logits.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const int target = grid.bin_of(batch.query_y[static_cast<size_t>(r)]);
    const auto row = logits.row(r).template cast<double>();
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    total += lse - row(target);
    if (dlogits) {
      auto dr = dlogits->row(r);
      dr = ((row.array() - lse).exp() / static_cast<double>(n)).matrix().template cast<S>();
      dr(target) -= static_cast<S>(1.0 / static_cast<double>(n));
    }
  }
  return total / static_cast<double>(n);
}

}  // namespace

template <typename S>
Matrix<S> forward_logits(const ModelParams<S>& params, const TokenBatch& batch, ForwardCache<S>* cache) {
  if (cache) return forward_impl(params, batch, *cache);
  ForwardCache<S> local;
  return forward_impl(params, batch, local);
}

template <typename S>
double cross_entropy_loss(const ModelParams<S>& params, const BinGrid& grid, const TokenBatch& batch) {
  return cross_entropy(forward_logits(params, batch), grid, batch, static_cast<Matrix<S>*>(nullptr));
}

template <typename S>
double loss_and_gradient(const ModelParams<S>& params, const BinGrid& grid, const TokenBatch& batch,
                         ModelParams<S>& grad) {
  ForwardCache<S> cache;
  const Matrix<S> logits = forward_impl(params, batch, cache);
  Matrix<S> dlogits;
  const double loss = cross_entropy(logits, grid, batch, &dlogits);
  std::vector<size_t> want, have;
  params.visit([&want](std::string_view, std::span<const S> v) { want.push_back(v.size()); });
  grad.visit([&have](std::string_view, std::span<const S> v) { have.push_back(v.size()); });
  if (!(grad.config == params.config) || want != have) grad = ModelParams<S>::zeros(params.config);
  grad.visit([](std::string_view, std::span<S> v) { std::fill(v.begin(), v.end(), S(0)); });
  backward_impl(params, cache, dlogits, grad);
  return loss;
}

template <typename S>
std::vector<std::vector<double>> predict_probs(const ModelParams<S>& params, const TokenBatch& batch) {
  const Matrix<S> logits = forward_logits(params, batch);
  std::vector<std::vector<double>> out(static_cast<size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Eigen::RowVectorXd row = logits.row(r).template cast<double>();
    const double mx = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - mx).exp().matrix();
    const double s = e.sum();
    auto& p = out[static_cast<size_t>(r)];
    p.resize(static_cast<size_t>(row.size()));
    for (Eigen::Index k = 0; k < row.size(); ++k) p[static_cast<size_t>(k)] = e(k) / s;
  }
  return out;
}

#define LCX_INSTANTIATE(S)                                                                                       \
  template struct ForwardCache<S>;                                                                               \
  template struct ModelParams<S>;                                                                                \
  template Matrix<S> forward_logits<S>(const ModelParams<S>&, const TokenBatch&, ForwardCache<S>*);             \
  template double cross_entropy_loss<S>(const ModelParams<S>&, const BinGrid&, const TokenBatch&);              \
  template double loss_and_gradient<S>(const ModelParams<S>&, const BinGrid&, const TokenBatch&, ModelParams<S>&); \
  template std::vector<std::vector<double>> predict_probs<S>(const ModelParams<S>&, const TokenBatch&);

LCX_INSTANTIATE(float)
LCX_INSTANTIATE(double)

#undef LCX_INSTANTIATE

}  // namespace lcx::pfn
