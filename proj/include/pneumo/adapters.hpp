#pragma once

#include <algorithm>
#include <cstddef>

#include "pneumo/matrix.hpp"
#include "pneumo/rng.hpp"
#include "pneumo/tape.hpp"

namespace pneumo {

/// Residual bottleneck adapter. The up-projection starts at zero, so a fresh
/// adapter is the identity and the frozen backbone's behavior is the training
/// starting point.
struct AdapterParams {
  Param down;  // width x r
  Param up;    // r x width

  static AdapterParams init(std::size_t width, std::size_t r, Rng& rng) {
    AdapterParams p;
    p.down = Param(init_uniform(width, r, width, rng));
    p.up = Param(Matrix(r, width));
    return p;
  }

  std::size_t bottleneck() const { return down.value.cols(); }
};

/// x + silu(x * down) * up
inline Tape::Var adapter_forward(Tape& t, Tape::Var x, AdapterParams& p) {
  Tape::Var mid = t.activation(t.matmul(x, t.param(p.down)), Act::kSilu);
  return t.add(x, t.matmul(mid, t.param(p.up)));
}

/// Visual neck: per-token Linear-SiLU-Linear from encoder width n to stack
/// width n'. The hidden width defaults to 128 but is clamped to 4*n' so a
/// narrow toy stack never gets a bottleneck wider than itself.
struct NeckParams {
  Param w1;  // n x hidden
  Param b1;  // 1 x hidden
  Param w2;  // hidden x n'
  Param b2;  // 1 x n'

  static std::size_t clamp_hidden(std::size_t requested, std::size_t n_prime) {
    return std::min(requested, 4 * n_prime);
  }

  static NeckParams init(std::size_t n, std::size_t hidden, std::size_t n_prime,
                         Rng& rng) {
    NeckParams p;
    p.w1 = Param(init_uniform(n, hidden, n, rng));
    p.b1 = Param(Matrix(1, hidden));
    p.w2 = Param(init_uniform(hidden, n_prime, hidden, rng));
    p.b2 = Param(Matrix(1, n_prime));
    return p;
  }
};

inline Tape::Var neck_forward(Tape& t, Tape::Var x_cat, NeckParams& p) {
  Tape::Var h = t.activation(
      t.add_row(t.matmul(x_cat, t.param(p.w1)), t.param(p.b1)), Act::kSilu);
  return t.add_row(t.matmul(h, t.param(p.w2)), t.param(p.b2));
}

}  // namespace pneumo
