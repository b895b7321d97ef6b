#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "pneumo/errors.hpp"

namespace pneumo {

/// Binary classification metrics at a fixed threshold plus ROC AUC.
/// AUC and avg are absent when the label set is single-class (AUC undefined);
/// the threshold metrics are still filled in.
struct MetricsReport {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double accuracy = 0.0;
  std::optional<double> auc;
  std::optional<double> avg;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Area under the ROC curve by trapezoidal integration with tied scores
/// collapsed into single ROC steps; equals the probability that a random
/// positive outscores a random negative, ties counting one half.
inline double auc_trapezoidal(const std::vector<double>& scores,
                              const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw DimensionError("auc: scores and labels differ in length");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) (l ? pos : neg)++;
  if (pos == 0 || neg == 0)
    throw Error("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double area = 0.0;
  double tp_prev = 0.0, fp_prev = 0.0, tp_cur = 0.0, fp_cur = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]])
        tp_cur += 1.0;
      else
        fp_cur += 1.0;
      ++i;
    }
    area += (fp_cur - fp_prev) * (tp_cur + tp_prev) * 0.5;
    tp_prev = tp_cur;
    fp_prev = fp_cur;
  }
  return area / (static_cast<double>(pos) * static_cast<double>(neg));
}

/// Confusion-matrix metrics at `threshold` (score >= threshold predicts
/// positive) plus AUC when both classes are present.
inline MetricsReport compute_metrics(const std::vector<double>& scores,
                                     const std::vector<int>& labels,
                                     double threshold = 0.5) {
  if (scores.size() != labels.size())
    throw DimensionError("compute_metrics: scores and labels differ in length");
  if (scores.empty()) throw DimensionError("compute_metrics: empty input");

  MetricsReport r;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i]) {
      (predicted ? r.tp : r.fn)++;
    } else {
      (predicted ? r.fp : r.tn)++;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.sensitivity = (r.tp + r.fn) ? double(r.tp) / double(r.tp + r.fn) : nan;
  r.specificity = (r.tn + r.fp) ? double(r.tn) / double(r.tn + r.fp) : nan;
  r.accuracy = double(r.tp + r.tn) / double(scores.size());
  if (r.tp + r.fn > 0 && r.tn + r.fp > 0) {
    r.auc = auc_trapezoidal(scores, labels);
    r.avg = (r.sensitivity + r.specificity + r.accuracy + *r.auc) / 4.0;
  }
  return r;
}

}  // namespace pneumo
