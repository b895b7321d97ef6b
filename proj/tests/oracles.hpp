// Independent reference computations for the test suites. Everything here is
// written as plain index loops so it shares no code path with the library
// implementations it checks.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pneumo/matrix.hpp"
#include "pneumo/rng.hpp"

namespace oracles {

using pneumo::Matrix;

inline Matrix loop_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

/// AUC as the pairwise probability that a positive outscores a negative,
/// ties counting one half. O(P*N).
inline double pairwise_auc(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  double wins = 0.0;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  for (int l : labels) neg += l ? 0 : 1;
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Scalar AdamW reference: decay-first update, bias-corrected moments.
struct ScalarAdamW {
  double beta1, beta2, eps, wd;
  double m = 0.0, v = 0.0;
  std::size_t t = 0;

  double step(double theta, double g, double lr) {
    ++t;
    theta *= 1.0 - lr * wd;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(beta1, double(t)));
    const double v_hat = v / (1.0 - std::pow(beta2, double(t)));
    return theta - lr * m_hat / (std::sqrt(v_hat) + eps);
  }
};

/// Per-head masked attention, straight loops: softmax((q k^T)/scale + mask) v
/// with -inf mask entries excluded, then heads side by side.
inline Matrix loop_masked_attention(const Matrix& y,
                                    const std::vector<Matrix>& w_q,
                                    const std::vector<Matrix>& w_k,
                                    const std::vector<Matrix>& w_v,
                                    const Matrix& mask, double scale) {
  const std::size_t heads = w_q.size();
  const std::size_t hd = w_q[0].cols();
  const std::size_t dp = y.rows();
  Matrix out(dp, heads * hd);
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix q = loop_matmul(y, w_q[h]);
    Matrix k = loop_matmul(y, w_k[h]);
    Matrix v = loop_matmul(y, w_v[h]);
    for (std::size_t i = 0; i < dp; ++i) {
      std::vector<double> s(dp, -1.0 / 0.0);
      double mx = -1.0 / 0.0;
      for (std::size_t j = 0; j < dp; ++j) {
        if (mask(i, j) != 0.0) continue;
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) acc += q(i, c) * k(j, c);
        s[j] = acc / scale;
        if (s[j] > mx) mx = s[j];
      }
      double denom = 0.0;
      std::vector<double> w(dp, 0.0);
      for (std::size_t j = 0; j < dp; ++j) {
        if (mask(i, j) != 0.0) continue;
        w[j] = std::exp(s[j] - mx);
        denom += w[j];
      }
      for (std::size_t c = 0; c < hd; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dp; ++j) acc += (w[j] / denom) * v(j, c);
        out(i, h * hd + c) = acc;
      }
    }
  }
  return out;
}

/// Least-squares linear probe fit on features (plus intercept) by normal
/// equations with partial-pivot elimination; returns scores w^T x + b.
inline std::vector<double> linear_probe_scores(
    const std::vector<std::vector<double>>& features, const std::vector<int>& labels) {
  const std::size_t n = features.size();
  const std::size_t d = features[0].size() + 1;  // + intercept
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> x(d, 1.0);
    for (std::size_t j = 0; j + 1 < d; ++j) x[j] = features[s][j];
    const double target = labels[s] ? 1.0 : -1.0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) a[i][j] += x[i] * x[j];
      a[i][d] += x[i] * target;
    }
  }
  for (std::size_t i = 0; i < d; ++i) a[i][i] += 1e-8;  // ridge for safety
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col || a[col][col] == 0.0) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t j = col; j <= d; ++j) a[r][j] -= f * a[col][j];
    }
  }
  std::vector<double> w(d);
  for (std::size_t i = 0; i < d; ++i) w[i] = a[i][d] / a[i][i];
  std::vector<double> scores(n);
  for (std::size_t s = 0; s < n; ++s) {
    double acc = w[d - 1];
    for (std::size_t j = 0; j + 1 < d; ++j) acc += w[j] * features[s][j];
    scores[s] = acc;
  }
  return scores;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, pneumo::Rng& rng,
                            double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

}  // namespace oracles
