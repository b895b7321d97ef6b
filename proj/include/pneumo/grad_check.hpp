#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pneumo/errors.hpp"
#include "pneumo/tape.hpp"

namespace pneumo {

/// Outcome of a finite-difference gradient check.
struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  /// Frozen params must come out of the tape pass with grad exactly zero.
  bool frozen_grads_zero = true;
  bool aborted = false;
  std::string diagnostic;

  bool passed(double tol) const {
    return !aborted && frozen_grads_zero && max_rel_err < tol;
  }
};

/// Central-difference check of tape gradients for every trainable entry.
///
/// scalar_fn(true) must run a fresh tape forward+backward and leave the
/// gradient in each Param's grad field; scalar_fn(false) must evaluate the
/// same scalar without touching grads. The numeric side re-runs only the
/// forward pass, so it is independent of the backward code it validates.
///
/// Relative error uses a guarded denominator max(|analytic|, |numeric|, 1e-2)
/// so that finite-difference noise on near-zero gradients does not swamp the
/// comparison while real missing-gradient bugs still surface.
inline GradCheckReport grad_check(const std::function<double(bool)>& scalar_fn,
                                  const std::vector<NamedParam>& params,
                                  double h) {
  if (!(h >= 1e-7 && h <= 1e-3))
    throw ConfigError("grad_check: h must lie in [1e-7, 1e-3]");

  GradCheckReport report;
  for (const NamedParam& np : params) np.param->zero_grad();

  const double loss = scalar_fn(true);
  if (!std::isfinite(loss)) {
    report.aborted = true;
    report.diagnostic = "non-finite loss " + std::to_string(loss) +
                        " from the unperturbed forward pass";
    return report;
  }

  for (const NamedParam& np : params) {
    Param& p = *np.param;
    if (!p.trainable) {
      if (max_abs(p.grad) != 0.0) report.frozen_grads_zero = false;
      continue;
    }
    for (std::size_t r = 0; r < p.value.rows(); ++r) {
      for (std::size_t c = 0; c < p.value.cols(); ++c) {
        const double saved = p.value(r, c);
        p.value(r, c) = saved + h;
        const double f_plus = scalar_fn(false);
        p.value(r, c) = saved - h;
        const double f_minus = scalar_fn(false);
        p.value(r, c) = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
          report.aborted = true;
          report.diagnostic = "non-finite loss while perturbing " + np.name + "(" +
                              std::to_string(r) + "," + std::to_string(c) + ")";
          return report;
        }
        const double numeric = (f_plus - f_minus) / (2.0 * h);
        const double analytic = p.grad(r, c);
        const double denom =
            std::fmax(std::fmax(std::fabs(analytic), std::fabs(numeric)), 1e-2);
        const double rel = std::fabs(analytic - numeric) / denom;
        ++report.entries_checked;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_param = np.name;
          report.worst_row = r;
          report.worst_col = c;
          report.worst_analytic = analytic;
          report.worst_numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace pneumo
