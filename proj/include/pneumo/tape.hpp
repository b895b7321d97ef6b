#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pneumo/errors.hpp"
#include "pneumo/matrix.hpp"

namespace pneumo {

/// A matrix-valued parameter: value, gradient accumulator, freeze flag.
/// Frozen params never receive gradient and are never touched by the
/// optimizer; their value stays bit-identical across training.
struct Param {
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Param() = default;
  explicit Param(Matrix v, bool trainable_ = true)
      : value(std::move(v)),
        grad(value.rows(), value.cols()),
        trainable(trainable_) {}

  void zero_grad() { grad.fill(0.0); }
};

/// A parameter plus its declaration-order name ("engine.w1", "stack.0.adapter.down").
struct NamedParam {
  std::string name;
  Param* param = nullptr;
};

enum class Act { kRelu, kSilu, kSigmoid };

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double silu(double x) { return x * sigmoid(x); }

inline double activation_value(double x, Act kind) {
  switch (kind) {
    case Act::kRelu: return x > 0.0 ? x : 0.0;
    case Act::kSilu: return silu(x);
    case Act::kSigmoid: return sigmoid(x);
  }
  return 0.0;
}

inline double activation_derivative(double x, Act kind) {
  switch (kind) {
    case Act::kRelu: return x > 0.0 ? 1.0 : 0.0;
    case Act::kSilu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Act::kSigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

/// Numerically stable binary cross-entropy from a raw logit.
inline double bce_from_logit(double logit, double label) {
  return std::fmax(logit, 0.0) - logit * label + std::log1p(std::exp(-std::fabs(logit)));
}

/// Reverse-mode tape over Matrix operations. Ops are recorded in execution
/// order; backward() replays them in reverse and deposits gradients into the
/// trainable Params that influenced the scalar root. Single-owner: one tape
/// serves one forward/backward pass on one thread.
class Tape {
 public:
  struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  /// Registers a parameter leaf. Repeated registration of the same Param
  /// returns the same node so gradient contributions accumulate correctly.
  Var param(Param& p) {
    auto it = leaf_lookup_.find(&p);
    if (it != leaf_lookup_.end()) return Var{it->second};
    int idx = push(p.value, p.trainable);
    leaves_.emplace_back(&p, idx);
    leaf_lookup_.emplace(&p, idx);
    return Var{idx};
  }

  /// A constant input; never receives gradient.
  Var input(Matrix m) { return Var{push(std::move(m), false)}; }

  const Matrix& value(Var v) const { return slots_[v.idx].value; }
  const Matrix& grad(Var v) const { return slots_[v.idx].grad; }
  std::size_t rows(Var v) const { return slots_[v.idx].value.rows(); }
  std::size_t cols(Var v) const { return slots_[v.idx].value.cols(); }
  double scalar(Var v) const { return slots_[v.idx].value(0, 0); }

  Var matmul(Var a, Var b) {
    Matrix out;
    matmul_into(out, val(a), val(b));
    return record_binary(std::move(out), a, b, [this](int ai, int bi, int oi) {
      const Matrix& go = slots_[oi].grad;
      if (slots_[ai].needs_grad) matmul_nt_accum(slots_[ai].grad, go, slots_[bi].value);
      if (slots_[bi].needs_grad) matmul_tn_accum(slots_[bi].grad, slots_[ai].value, go);
    });
  }

  Var transpose(Var a) {
    Matrix out = pneumo::transpose(val(a));
    return record_unary(std::move(out), a, [this](int ai, int oi) {
      const Matrix& go = slots_[oi].grad;
      Matrix& ga = slots_[ai].grad;
      for (std::size_t i = 0; i < go.rows(); ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) ga(j, i) += go(i, j);
    });
  }

  Var add(Var a, Var b) {
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    detail::require(av.same_shape(bv),
                    "add: " + av.shape_str() + " vs " + bv.shape_str());
    Matrix out = av;
    add_inplace(out, bv);
    return record_binary(std::move(out), a, b, [this](int ai, int bi, int oi) {
      const Matrix& go = slots_[oi].grad;
      if (slots_[ai].needs_grad) add_inplace(slots_[ai].grad, go);
      if (slots_[bi].needs_grad) add_inplace(slots_[bi].grad, go);
    });
  }

  /// a + row broadcast over every row of a; row must be 1 x a.cols().
  Var add_row(Var a, Var row) {
    const Matrix& av = val(a);
    const Matrix& rv = val(row);
    detail::require(rv.rows() == 1 && rv.cols() == av.cols(),
                    "add_row: " + av.shape_str() + " vs " + rv.shape_str());
    Matrix out = av;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv(0, j);
    return record_binary(std::move(out), a, row, [this](int ai, int ri, int oi) {
      const Matrix& go = slots_[oi].grad;
      if (slots_[ai].needs_grad) add_inplace(slots_[ai].grad, go);
      if (slots_[ri].needs_grad) {
        Matrix& gr = slots_[ri].grad;
        for (std::size_t i = 0; i < go.rows(); ++i)
          for (std::size_t j = 0; j < go.cols(); ++j) gr(0, j) += go(i, j);
      }
    });
  }

  Var scale(Var a, double s) {
    Matrix out = val(a);
    scale_inplace(out, s);
    return record_unary(std::move(out), a, [this, s](int ai, int oi) {
      axpy_inplace(slots_[ai].grad, s, slots_[oi].grad);
    });
  }

  Var activation(Var a, Act kind) {
    const Matrix& av = val(a);
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.size(); ++i)
      out.data()[i] = activation_value(av.data()[i], kind);
    return record_unary(std::move(out), a, [this, kind](int ai, int oi) {
      const Matrix& go = slots_[oi].grad;
      const Matrix& x = slots_[ai].value;
      Matrix& ga = slots_[ai].grad;
      for (std::size_t i = 0; i < x.size(); ++i)
        ga.data()[i] += go.data()[i] * activation_derivative(x.data()[i], kind);
    });
  }

  /// Per-row standardization (population variance) then affine with gain/bias
  /// rows of width x.cols().
  Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Matrix& xv = val(x);
    const Matrix& gv = val(gain);
    const Matrix& bv = val(bias);
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    detail::require(gv.rows() == 1 && gv.cols() == xv.cols(),
                    "layer_norm gain: " + gv.shape_str() + " vs x " + xv.shape_str());
    detail::require(bv.rows() == 1 && bv.cols() == xv.cols(),
                    "layer_norm bias: " + bv.shape_str() + " vs x " + xv.shape_str());
    const std::size_t n = xv.cols();
    Matrix xhat(xv.rows(), n);
    std::vector<double> inv_std(xv.rows());
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      const double* xr = xv.row(i);
      double mean = 0.0;
      for (std::size_t j = 0; j < n; ++j) mean += xr[j];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double c = xr[j] - mean;
        var += c * c;
      }
      var /= static_cast<double>(n);
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[i] = inv;
      double* hr = xhat.row(i);
      for (std::size_t j = 0; j < n; ++j) hr[j] = (xr[j] - mean) * inv;
    }
    Matrix out(xv.rows(), n);
    for (std::size_t i = 0; i < xv.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) = xhat(i, j) * gv(0, j) + bv(0, j);

    int oi = push(std::move(out), slots_[x.idx].needs_grad ||
                                      slots_[gain.idx].needs_grad ||
                                      slots_[bias.idx].needs_grad);
    if (slots_[oi].needs_grad) {
      backsteps_.push_back([this, xi = x.idx, gi = gain.idx, bi = bias.idx, oi,
                            xhat = std::move(xhat), inv_std = std::move(inv_std)] {
        const Matrix& go = slots_[oi].grad;
        const Matrix& gainv = slots_[gi].value;
        const std::size_t n = go.cols();
        if (slots_[bi].needs_grad) {
          Matrix& gb = slots_[bi].grad;
          for (std::size_t i = 0; i < go.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j) gb(0, j) += go(i, j);
        }
        if (slots_[gi].needs_grad) {
          Matrix& gg = slots_[gi].grad;
          for (std::size_t i = 0; i < go.rows(); ++i)
            for (std::size_t j = 0; j < n; ++j) gg(0, j) += go(i, j) * xhat(i, j);
        }
        if (slots_[xi].needs_grad) {
          Matrix& gx = slots_[xi].grad;
          for (std::size_t i = 0; i < go.rows(); ++i) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double d = go(i, j) * gainv(0, j);
              sum_d += d;
              sum_dx += d * xhat(i, j);
            }
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const double d = go(i, j) * gainv(0, j);
              gx(i, j) += inv_std[i] * (d - inv_n * sum_d - xhat(i, j) * inv_n * sum_dx);
            }
          }
        }
      });
    }
    return Var{oi};
  }

  /// Softmax over each row.
  Var softmax_rows(Var a) { return masked_softmax_impl(a, nullptr); }

  /// Softmax per row restricted to entries whose mask is 0; entries at -inf
  /// get exactly zero weight. A row with every entry masked is an error.
  Var masked_softmax_rows(Var a, const Matrix& mask) {
    const Matrix& av = val(a);
    detail::require(av.same_shape(mask), "masked_softmax: logits " + av.shape_str() +
                                             " vs mask " + mask.shape_str());
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const double v = mask.data()[i];
      if (!(v == 0.0 || v == kNegInf))
        throw ConfigError("masked_softmax: mask entries must be 0 or -inf");
    }
    return masked_softmax_impl(a, &mask);
  }

  Var concat_rows(Var a, Var b) {
    const Matrix& av = val(a);
    const Matrix& bv = val(b);
    detail::require(av.cols() == bv.cols(), "concat_rows: " + av.shape_str() +
                                                " vs " + bv.shape_str());
    Matrix out(av.rows() + bv.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i)
      for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j);
    for (std::size_t i = 0; i < bv.rows(); ++i)
      for (std::size_t j = 0; j < bv.cols(); ++j) out(av.rows() + i, j) = bv(i, j);
    return record_binary(std::move(out), a, b, [this](int ai, int bi, int oi) {
      const Matrix& go = slots_[oi].grad;
      const std::size_t ra = slots_[ai].value.rows();
      if (slots_[ai].needs_grad) {
        Matrix& ga = slots_[ai].grad;
        for (std::size_t i = 0; i < ga.rows(); ++i)
          for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += go(i, j);
      }
      if (slots_[bi].needs_grad) {
        Matrix& gb = slots_[bi].grad;
        for (std::size_t i = 0; i < gb.rows(); ++i)
          for (std::size_t j = 0; j < gb.cols(); ++j) gb(i, j) += go(ra + i, j);
      }
    });
  }

  /// Concatenates same-height blocks side by side (attention heads).
  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    const std::size_t r = val(parts[0]).rows();
    std::size_t total = 0;
    bool ng = false;
    for (Var p : parts) {
      detail::require(val(p).rows() == r, "concat_cols: row mismatch " +
                                              val(p).shape_str());
      total += val(p).cols();
      ng = ng || slots_[p.idx].needs_grad;
    }
    Matrix out(r, total);
    std::size_t off = 0;
    for (Var p : parts) {
      const Matrix& pv = val(p);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
      off += pv.cols();
    }
    int oi = push(std::move(out), ng);
    if (ng) {
      std::vector<int> idxs;
      idxs.reserve(parts.size());
      for (Var p : parts) idxs.push_back(p.idx);
      backsteps_.push_back([this, idxs = std::move(idxs), oi] {
        const Matrix& go = slots_[oi].grad;
        std::size_t off = 0;
        for (int pi : idxs) {
          const std::size_t w = slots_[pi].value.cols();
          if (slots_[pi].needs_grad) {
            Matrix& gp = slots_[pi].grad;
            for (std::size_t i = 0; i < gp.rows(); ++i)
              for (std::size_t j = 0; j < w; ++j) gp(i, j) += go(i, off + j);
          }
          off += w;
        }
      });
    }
    return Var{oi};
  }

  /// Mean of rows [r0, r1) as a 1 x cols row.
  Var mean_rows(Var a, std::size_t r0, std::size_t r1) {
    const Matrix& av = val(a);
    detail::require(r0 < r1 && r1 <= av.rows(),
                    "mean_rows: range [" + std::to_string(r0) + "," +
                        std::to_string(r1) + ") on " + av.shape_str());
    const double inv = 1.0 / static_cast<double>(r1 - r0);
    Matrix out(1, av.cols());
    for (std::size_t i = r0; i < r1; ++i)
      for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
    scale_inplace(out, inv);
    return record_unary(std::move(out), a, [this, r0, r1, inv](int ai, int oi) {
      const Matrix& go = slots_[oi].grad;
      Matrix& ga = slots_[ai].grad;
      for (std::size_t i = r0; i < r1; ++i)
        for (std::size_t j = 0; j < go.cols(); ++j) ga(i, j) += inv * go(0, j);
    });
  }

  /// Scalar sum of a elementwise-weighted by w. Handy for gradient checks.
  Var weighted_sum(Var a, Matrix w) {
    const Matrix& av = val(a);
    detail::require(av.same_shape(w), "weighted_sum: " + av.shape_str() + " vs " +
                                          w.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av.data()[i] * w.data()[i];
    Matrix out(1, 1);
    out(0, 0) = acc;
    int oi = push(std::move(out), slots_[a.idx].needs_grad);
    if (slots_[oi].needs_grad) {
      backsteps_.push_back([this, ai = a.idx, oi, w = std::move(w)] {
        const double g = slots_[oi].grad(0, 0);
        Matrix& ga = slots_[ai].grad;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g * w.data()[i];
      });
    }
    return Var{oi};
  }

  Var sum(Var a) {
    const Matrix& av = val(a);
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) acc += av.data()[i];
    Matrix out(1, 1);
    out(0, 0) = acc;
    return record_unary(std::move(out), a, [this](int ai, int oi) {
      const double g = slots_[oi].grad(0, 0);
      Matrix& ga = slots_[ai].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
    });
  }

  /// Binary cross-entropy from a 1x1 logit, in log-sum-exp form.
  Var bce_with_logit(Var logit, double label) {
    const Matrix& lv = val(logit);
    detail::require(lv.rows() == 1 && lv.cols() == 1,
                    "bce_with_logit: logit must be 1x1, got " + lv.shape_str());
    Matrix out(1, 1);
    out(0, 0) = bce_from_logit(lv(0, 0), label);
    return record_unary(std::move(out), logit, [this, label](int ai, int oi) {
      const double z = slots_[ai].value(0, 0);
      slots_[ai].grad(0, 0) += slots_[oi].grad(0, 0) * (sigmoid(z) - label);
    });
  }

  /// Replays the recorded ops in reverse from a 1x1 root and accumulates
  /// d(root)/d(param) into every trainable leaf's grad. One shot per tape.
  void backward(Var root, double seed = 1.0) {
    const Matrix& rv = val(root);
    detail::require(rv.rows() == 1 && rv.cols() == 1,
                    "backward: root must be 1x1, got " + rv.shape_str());
    if (backward_done_) throw Error("backward: tape already replayed");
    backward_done_ = true;
    for (Slot& s : slots_)
      if (s.needs_grad) s.grad = Matrix(s.value.rows(), s.value.cols());
    if (!slots_[root.idx].needs_grad) return;
    slots_[root.idx].grad(0, 0) = seed;
    for (auto it = backsteps_.rbegin(); it != backsteps_.rend(); ++it) (*it)();
    for (auto& [p, idx] : leaves_)
      if (p->trainable) add_inplace(p->grad, slots_[idx].grad);
  }

  std::size_t node_count() const { return slots_.size(); }

 private:
  struct Slot {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
  };

  const Matrix& val(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.idx) >= slots_.size())
      throw Error("tape: invalid variable");
    return slots_[v.idx].value;
  }

  int push(Matrix value, bool needs_grad) {
    slots_.push_back(Slot{std::move(value), Matrix(), needs_grad});
    return static_cast<int>(slots_.size()) - 1;
  }

  template <typename F>
  Var record_unary(Matrix out, Var a, F&& back) {
    int oi = push(std::move(out), slots_[a.idx].needs_grad);
    if (slots_[oi].needs_grad)
      backsteps_.push_back(
          [this, ai = a.idx, oi, back = std::forward<F>(back)] { back(ai, oi); });
    return Var{oi};
  }

  template <typename F>
  Var record_binary(Matrix out, Var a, Var b, F&& back) {
    int oi = push(std::move(out),
                  slots_[a.idx].needs_grad || slots_[b.idx].needs_grad);
    if (slots_[oi].needs_grad)
      backsteps_.push_back([this, ai = a.idx, bi = b.idx, oi,
                            back = std::forward<F>(back)] { back(ai, bi, oi); });
    return Var{oi};
  }

  Var masked_softmax_impl(Var a, const Matrix* mask) {
    const Matrix& av = val(a);
    Matrix out(av.rows(), av.cols());
    for (std::size_t i = 0; i < av.rows(); ++i) {
      double mx = kNegInf;
      for (std::size_t j = 0; j < av.cols(); ++j)
        if (!mask || (*mask)(i, j) == 0.0) mx = std::fmax(mx, av(i, j));
      if (mx == kNegInf)
        throw DegenerateRowError("masked_softmax: row " + std::to_string(i) +
                                 " has every entry masked");
      double denom = 0.0;
      for (std::size_t j = 0; j < av.cols(); ++j) {
        if (!mask || (*mask)(i, j) == 0.0) {
          const double e = std::exp(av(i, j) - mx);
          out(i, j) = e;
          denom += e;
        } else {
          out(i, j) = 0.0;
        }
      }
      const double inv = 1.0 / denom;
      for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) *= inv;
    }
    return record_unary(std::move(out), a, [this](int ai, int oi) {
      const Matrix& p = slots_[oi].value;
      const Matrix& go = slots_[oi].grad;
      Matrix& ga = slots_[ai].grad;
      for (std::size_t i = 0; i < p.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) dot += go(i, j) * p(i, j);
        for (std::size_t j = 0; j < p.cols(); ++j)
          ga(i, j) += p(i, j) * (go(i, j) - dot);
      }
    });
  }

  std::vector<Slot> slots_;
  std::vector<std::function<void()>> backsteps_;
  std::vector<std::pair<Param*, int>> leaves_;
  std::unordered_map<const Param*, int> leaf_lookup_;
  bool backward_done_ = false;
};

}  // namespace pneumo
