#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pneumo/adapters.hpp"
#include "pneumo/errors.hpp"
#include "pneumo/matrix.hpp"
#include "pneumo/rng.hpp"
#include "pneumo/tape.hpp"

namespace pneumo {

/// The information-emitter attention mask over d source tokens followed by
/// m diagnosis tokens: every key column belonging to a diagnosis token is
/// -inf, so information flows from source tokens to diagnosis tokens only,
/// and diagnosis tokens never see each other.
struct EmitterMask {
  std::size_t d = 0;
  std::size_t m = 0;
  Matrix mask;  // (d+m) x (d+m), entries in {0, -inf}

  std::size_t total() const { return d + m; }
};

inline EmitterMask build_mask(std::size_t d, std::size_t m) {
  if (d == 0) throw DimensionError("build_mask: need at least one source token");
  EmitterMask em;
  em.d = d;
  em.m = m;
  em.mask = Matrix(d + m, d + m);
  for (std::size_t i = 0; i < d + m; ++i)
    for (std::size_t j = d; j < d + m; ++j) em.mask(i, j) = kNegInf;
  return em;
}

/// Plain self-attention over the same token layout (emitter-off ablation).
inline EmitterMask build_unmasked(std::size_t d, std::size_t m) {
  if (d == 0) throw DimensionError("build_unmasked: need at least one source token");
  EmitterMask em;
  em.d = d;
  em.m = m;
  em.mask = Matrix(d + m, d + m);
  return em;
}

/// Denominator convention for the attention scores. Head-dim is the standard
/// scaled dot product; token-count is the literal d' reading, kept as a
/// fidelity switch.
enum class AttnScale { kHeadDim, kTokenCount };

/// Frozen weights of one transformer block: per-head attention projections,
/// output projection, SiLU feed-forward, two layer-norm pairs. Stand-ins for
/// pretrained weights, reproducible from the seed.
struct BlockWeights {
  std::vector<Param> w_q;  // per head: n' x (n'/H)
  std::vector<Param> w_k;
  std::vector<Param> w_v;
  Param w_o;    // n' x n'
  Param w_ff1;  // n' x 4n'
  Param w_ff2;  // 4n' x n'
  Param ln1_gain, ln1_bias;  // 1 x n'
  Param ln2_gain, ln2_bias;

  std::size_t heads() const { return w_q.size(); }
  std::size_t width() const { return w_o.value.rows(); }
  std::size_t head_dim() const { return width() / heads(); }

  static BlockWeights init(std::size_t n_prime, std::size_t heads, Rng& rng) {
    if (heads == 0 || n_prime % heads != 0)
      throw ConfigError("block: width " + std::to_string(n_prime) +
                        " not divisible by heads " + std::to_string(heads));
    const std::size_t hd = n_prime / heads;
    BlockWeights w;
    for (std::size_t h = 0; h < heads; ++h) {
      w.w_q.emplace_back(init_uniform(n_prime, hd, n_prime, rng), false);
      w.w_k.emplace_back(init_uniform(n_prime, hd, n_prime, rng), false);
      w.w_v.emplace_back(init_uniform(n_prime, hd, n_prime, rng), false);
    }
    w.w_o = Param(init_uniform(n_prime, n_prime, n_prime, rng), false);
    w.w_ff1 = Param(init_uniform(n_prime, 4 * n_prime, n_prime, rng), false);
    w.w_ff2 = Param(init_uniform(4 * n_prime, n_prime, 4 * n_prime, rng), false);
    Matrix g1(1, n_prime), b1(1, n_prime), g2(1, n_prime), b2(1, n_prime);
    for (std::size_t j = 0; j < n_prime; ++j) {
      g1(0, j) = rng.uniform(0.8, 1.2);
      b1(0, j) = rng.uniform(-0.1, 0.1);
      g2(0, j) = rng.uniform(0.8, 1.2);
      b2(0, j) = rng.uniform(-0.1, 0.1);
    }
    w.ln1_gain = Param(std::move(g1), false);
    w.ln1_bias = Param(std::move(b1), false);
    w.ln2_gain = Param(std::move(g2), false);
    w.ln2_bias = Param(std::move(b2), false);
    return w;
  }
};

inline double attn_scale_value(AttnScale mode, const BlockWeights& w,
                               std::size_t d_prime) {
  return mode == AttnScale::kHeadDim
             ? std::sqrt(static_cast<double>(w.head_dim()))
             : std::sqrt(static_cast<double>(d_prime));
}

/// Masked multi-head attention before the output projection: per head,
/// softmax(Q K^T / scale + mask) V, heads concatenated.
inline Tape::Var masked_attention_pre_proj(Tape& t, Tape::Var y, BlockWeights& w,
                                           const EmitterMask& mask,
                                           AttnScale scale_mode) {
  if (t.cols(y) != w.width())
    throw DimensionError("masked_mha: tokens " + t.value(y).shape_str() +
                         " vs block width " + std::to_string(w.width()));
  if (t.rows(y) != mask.total())
    throw DimensionError("masked_mha: tokens " + t.value(y).shape_str() +
                         " vs mask " + mask.mask.shape_str());
  const double inv_scale = 1.0 / attn_scale_value(scale_mode, w, mask.total());
  std::vector<Tape::Var> heads;
  heads.reserve(w.heads());
  for (std::size_t h = 0; h < w.heads(); ++h) {
    Tape::Var q = t.matmul(y, t.param(w.w_q[h]));
    Tape::Var k = t.matmul(y, t.param(w.w_k[h]));
    Tape::Var v = t.matmul(y, t.param(w.w_v[h]));
    Tape::Var scores = t.scale(t.matmul(q, t.transpose(k)), inv_scale);
    Tape::Var weights = t.masked_softmax_rows(scores, mask.mask);
    heads.push_back(t.matmul(weights, v));
  }
  return t.concat_cols(heads);
}

inline Tape::Var masked_mha(Tape& t, Tape::Var y, BlockWeights& w,
                            const EmitterMask& mask, AttnScale scale_mode) {
  return t.matmul(masked_attention_pre_proj(t, y, w, mask, scale_mode),
                  t.param(w.w_o));
}

/// The decomposed form of the emitter attention, computed with straight
/// loops and kept deliberately independent of the tape path: source rows
/// self-attend over source keys only, diagnosis rows cross-attend over
/// source keys only. Used as the oracle for the masked attention.
struct DecomposedAttn {
  Matrix attn_s;  // d x n', heads concatenated
  Matrix attn_c;  // m x n'
};

inline DecomposedAttn attn_decomposed(const Matrix& y, const BlockWeights& w,
                                      std::size_t d, AttnScale scale_mode) {
  if (y.cols() != w.width())
    throw DimensionError("attn_decomposed: tokens " + y.shape_str() +
                         " vs block width " + std::to_string(w.width()));
  if (d == 0 || d > y.rows())
    throw DimensionError("attn_decomposed: source count " + std::to_string(d) +
                         " out of range for " + y.shape_str());
  const std::size_t d_prime = y.rows();
  const std::size_t m = d_prime - d;
  const std::size_t hd = w.head_dim();
  const double scale = attn_scale_value(scale_mode, w, d_prime);

  DecomposedAttn out;
  out.attn_s = Matrix(d, w.width());
  out.attn_c = Matrix(m, w.width());

  std::vector<double> q(hd), key(hd), val_row(hd), weights(d);
  for (std::size_t h = 0; h < w.heads(); ++h) {
    const Matrix& wq = w.w_q[h].value;
    const Matrix& wk = w.w_k[h].value;
    const Matrix& wv = w.w_v[h].value;
    // K_s and V_s come from source rows only.
    Matrix ks(d, hd), vs(d, hd);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t c = 0; c < hd; ++c) {
        double ak = 0.0, av = 0.0;
        for (std::size_t r = 0; r < y.cols(); ++r) {
          ak += y(i, r) * wk(r, c);
          av += y(i, r) * wv(r, c);
        }
        ks(i, c) = ak;
        vs(i, c) = av;
      }
    for (std::size_t i = 0; i < d_prime; ++i) {
      for (std::size_t c = 0; c < hd; ++c) {
        double a = 0.0;
        for (std::size_t r = 0; r < y.cols(); ++r) a += y(i, r) * wq(r, c);
        q[c] = a;
      }
      double mx = kNegInf;
      for (std::size_t j = 0; j < d; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < hd; ++c) s += q[c] * ks(j, c);
        weights[j] = s / scale;
        mx = std::fmax(mx, weights[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        weights[j] = std::exp(weights[j] - mx);
        denom += weights[j];
      }
      for (std::size_t j = 0; j < d; ++j) weights[j] /= denom;
      Matrix& dst = i < d ? out.attn_s : out.attn_c;
      const std::size_t row = i < d ? i : i - d;
      for (std::size_t c = 0; c < hd; ++c) {
        double a = 0.0;
        for (std::size_t j = 0; j < d; ++j) a += weights[j] * vs(j, c);
        dst(row, h * hd + c) = a;
      }
    }
  }
  return out;
}

/// Pre-norm residual block: y + mha(adapter(ln(y))), then + ff(ln(.)).
/// The optional adapter is the block's only trainable piece.
inline Tape::Var block_forward(Tape& t, Tape::Var y, BlockWeights& w,
                               AdapterParams* adapter, const EmitterMask& mask,
                               AttnScale scale_mode, double ln_eps) {
  Tape::Var a = t.layer_norm(y, t.param(w.ln1_gain), t.param(w.ln1_bias), ln_eps);
  if (adapter) a = adapter_forward(t, a, *adapter);
  y = t.add(y, masked_mha(t, a, w, mask, scale_mode));
  Tape::Var f = t.layer_norm(y, t.param(w.ln2_gain), t.param(w.ln2_bias), ln_eps);
  Tape::Var ff = t.matmul(t.activation(t.matmul(f, t.param(w.w_ff1)), Act::kSilu),
                          t.param(w.w_ff2));
  return t.add(y, ff);
}

/// One stack layer: frozen block weights plus an optional trainable adapter.
struct StackLayer {
  BlockWeights weights;
  std::optional<AdapterParams> adapter;
};

inline Tape::Var stack_forward(Tape& t, Tape::Var y, std::vector<StackLayer>& stack,
                               const EmitterMask& mask, AttnScale scale_mode,
                               double ln_eps) {
  if (stack.empty()) throw ConfigError("stack_forward: empty stack");
  for (StackLayer& layer : stack)
    y = block_forward(t, y, layer.weights,
                      layer.adapter ? &*layer.adapter : nullptr, mask, scale_mode,
                      ln_eps);
  return y;
}

/// Post-softmax attention weights of each head for one block input, computed
/// off-tape. Inspection only.
inline std::vector<Matrix> block_attention_weights(const Matrix& y_block_input,
                                                   const BlockWeights& w,
                                                   const EmitterMask& mask,
                                                   AttnScale scale_mode,
                                                   double ln_eps,
                                                   const AdapterParams* adapter) {
  Tape t;
  Tape::Var yv = t.input(y_block_input);
  Tape::Var a = t.layer_norm(yv, t.input(w.ln1_gain.value), t.input(w.ln1_bias.value),
                             ln_eps);
  Matrix after = t.value(a);
  if (adapter) {
    Matrix mid = matmul(after, adapter->down.value);
    for (std::size_t i = 0; i < mid.size(); ++i)
      mid.data()[i] = silu(mid.data()[i]);
    add_inplace(after, matmul(mid, adapter->up.value));
  }
  const double scale = attn_scale_value(scale_mode, w, mask.total());
  std::vector<Matrix> weights;
  for (std::size_t h = 0; h < w.heads(); ++h) {
    Matrix q = matmul(after, w.w_q[h].value);
    Matrix k = matmul(after, w.w_k[h].value);
    Matrix scores(q.rows(), k.rows());
    matmul_nt_accum(scores, q, k);
    scale_inplace(scores, 1.0 / scale);
    Matrix soft(scores.rows(), scores.cols());
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      double mx = kNegInf;
      for (std::size_t j = 0; j < scores.cols(); ++j)
        if (mask.mask(i, j) == 0.0) mx = std::fmax(mx, scores(i, j));
      double denom = 0.0;
      for (std::size_t j = 0; j < scores.cols(); ++j) {
        if (mask.mask(i, j) == 0.0) {
          soft(i, j) = std::exp(scores(i, j) - mx);
          denom += soft(i, j);
        }
      }
      for (std::size_t j = 0; j < scores.cols(); ++j) soft(i, j) /= denom;
    }
    weights.push_back(std::move(soft));
  }
  return weights;
}

}  // namespace pneumo
