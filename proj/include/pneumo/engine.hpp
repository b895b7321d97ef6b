#pragma once

#include <algorithm>
#include <cstddef>

#include "pneumo/errors.hpp"
#include "pneumo/matrix.hpp"
#include "pneumo/rng.hpp"
#include "pneumo/tape.hpp"

namespace pneumo {

/// Which axis of the engine's logit map the softmax normalizes.
/// Column (the default) makes every diagnosis token a convex combination of
/// the source tokens; row is the alternative reading, kept for ablations.
enum class SoftmaxAxis { kColumn, kRow };

/// Two-layer ReLU MLP mapping source tokens to per-token mixing logits.
/// Hidden width is the token width divided by 12, floored at 1.
struct EngineParams {
  Param w1;  // n x h
  Param b1;  // 1 x h
  Param w2;  // h x m
  Param b2;  // 1 x m

  static std::size_t hidden_width(std::size_t n) {
    return std::max<std::size_t>(1, n / 12);
  }

  static EngineParams init(std::size_t n, std::size_t m, Rng& rng) {
    if (n == 0 || m == 0)
      throw DimensionError("engine: token width and diagnosis count must be >= 1");
    const std::size_t h = hidden_width(n);
    EngineParams p;
    p.w1 = Param(init_uniform(n, h, n, rng));
    p.b1 = Param(Matrix(1, h));
    p.w2 = Param(init_uniform(h, m, h, rng));
    p.b2 = Param(Matrix(1, m));
    return p;
  }

  std::size_t diag_tokens() const { return w2.value.cols(); }
};

struct EngineOut {
  Tape::Var context_map;  // d x m, softmax-normalized mixing weights
  Tape::Var diag_tokens;  // m x n
};

/// Contextual multi-token engine: logits = relu(x*w1 + b1)*w2 + b2, the
/// context map is the softmax of the logits over the chosen axis, and the
/// diagnosis tokens are context_map^T * x.
inline EngineOut engine_forward(Tape& t, Tape::Var x, EngineParams& p,
                                SoftmaxAxis axis = SoftmaxAxis::kColumn) {
  if (t.cols(x) == 0 || t.rows(x) == 0)
    throw DimensionError("engine_forward: empty source tokens " +
                         t.value(x).shape_str());
  Tape::Var h = t.activation(t.add_row(t.matmul(x, t.param(p.w1)), t.param(p.b1)),
                             Act::kRelu);
  Tape::Var logits = t.add_row(t.matmul(h, t.param(p.w2)), t.param(p.b2));
  Tape::Var map;
  if (axis == SoftmaxAxis::kColumn) {
    map = t.transpose(t.softmax_rows(t.transpose(logits)));
  } else {
    map = t.softmax_rows(logits);
  }
  Tape::Var xhat = t.matmul(t.transpose(map), x);
  return EngineOut{map, xhat};
}

/// CoOp-style ablation baseline: m learnable token rows shared by every
/// sample.
struct FixedPromptParams {
  Param tokens;  // m x n

  static FixedPromptParams init(std::size_t m, std::size_t n, Rng& rng) {
    FixedPromptParams p;
    p.tokens = Param(init_uniform(m, n, n, rng));
    return p;
  }
};

inline Tape::Var fixed_prompt_forward(Tape& t, FixedPromptParams& p) {
  return t.param(p.tokens);
}

/// CoCoOp-style ablation baseline: fixed tokens plus a shared offset computed
/// from the mean-pooled source tokens through a one-layer map. The offset map
/// starts at zero, so training begins from the fixed-prompt behavior.
struct CocoopStyleParams {
  Param tokens;  // m x n
  Param w_off;   // n x n
  Param b_off;   // 1 x n

  static CocoopStyleParams init(std::size_t m, std::size_t n, Rng& rng) {
    CocoopStyleParams p;
    p.tokens = Param(init_uniform(m, n, n, rng));
    p.w_off = Param(Matrix(n, n));
    p.b_off = Param(Matrix(1, n));
    return p;
  }
};

inline Tape::Var conditional_prompt_forward(Tape& t, Tape::Var x,
                                            CocoopStyleParams& p) {
  if (t.cols(x) == 0 || t.rows(x) == 0)
    throw DimensionError("conditional_prompt_forward: empty source tokens " +
                         t.value(x).shape_str());
  Tape::Var pooled = t.mean_rows(x, 0, t.rows(x));
  Tape::Var offset = t.add(t.matmul(pooled, t.param(p.w_off)), t.param(p.b_off));
  return t.add_row(t.param(p.tokens), offset);
}

}  // namespace pneumo
