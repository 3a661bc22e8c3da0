#include "lprox/alm.hpp"

#include <cmath>

namespace lprox {

void AlmState::validate() const {
  if (!(multiplier >= 0.0) || !std::isfinite(multiplier)) throw ParameterError("multiplier", "must be finite and >= 0");
  if (!(penalty > 0.0)) throw ParameterError("penalty", "must be positive");
  if (!(growth > 1.0)) throw ParameterError("growth", "must exceed 1");
  if (!(penalty_max > 0.0)) throw ParameterError("penalty_max", "must be positive");
  if (penalty > penalty_max) throw ParameterError("penalty", "must not exceed penalty_max");
  if (!(inner_step > 0.0)) throw ParameterError("inner_step", "must be positive");
  if (max_inner < 1) throw ParameterError("max_inner", "must be >= 1");
  if (max_outer < 1) throw ParameterError("max_outer", "must be >= 1");
  if (!(tolerance > 0.0)) throw ParameterError("tolerance", "must be positive");
}

AlmResult alm_project(const Vec& anchor, const SmoothViolation& g, AlmState state) {
  state.validate();
  if (!anchor.allFinite()) throw NumericError("alm_project: non-finite anchor");

  AlmReport report;
  report.penalty = state.penalty;
  report.multiplier = state.multiplier;
  const double g0 = g.value(anchor);
  if (!std::isfinite(g0)) throw NumericError("alm_project: violation not finite at anchor");
  if (g0 < state.tolerance) {
    report.violation = g0;
    report.converged = true;
    return {anchor, report};
  }

  double lam = state.multiplier;
  double mu = state.penalty;
  auto objective = [&](const Vec& y, double gy) {
    return 0.5 * (y - anchor).squaredNorm() + lam * gy + 0.5 * mu * gy * gy;
  };

  Vec y = anchor;
  double gy = g0;
  for (int outer = 1; outer <= state.max_outer; ++outer) {
    // Inner loop: gradient steps on the augmented objective. The step starts
    // at inner_step and is adapted by Armijo backtracking, since a fixed step
    // is unstable once mu grows past 2 / inner_step.
    double step = state.inner_step;
    double f = objective(y, gy);
    for (int inner = 0; inner < state.max_inner; ++inner) {
      const Vec grad = (y - anchor) + (lam + mu * gy) * g.gradient(y);
      const double gn2 = grad.squaredNorm();
      if (gn2 <= 1e-30) break;
      ++report.inner_iterations;
      double s = step;
      Vec cand;
      double gc = 0.0, fc = 0.0;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        cand = y - s * grad;
        gc = g.value(cand);
        fc = objective(cand, gc);
        if (fc <= f - 1e-4 * s * gn2) {
          accepted = true;
          break;
        }
        s *= 0.5;
      }
      if (!accepted) break;
      y = cand;
      gy = gc;
      f = fc;
      step = 2.0 * s;
    }
    if (!y.allFinite()) throw NumericError("alm_project: iterate became non-finite");

    report.outer_iterations = outer;
    report.violation = gy;
    report.distance = (y - anchor).norm();
    if (gy < state.tolerance) {
      report.penalty = mu;
      report.multiplier = lam;
      report.converged = true;
      return {y, report};
    }
    lam += mu * gy;
    mu = std::min(state.growth * mu, state.penalty_max);
    report.penalty = mu;
    report.multiplier = lam;
  }
  throw AlmError("alm_project: outer iteration cap reached with violation " + std::to_string(gy), report, y);
}

}  // namespace lprox
