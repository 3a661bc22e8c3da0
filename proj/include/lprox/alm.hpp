#pragma once

#include "lprox/constraints.hpp"

namespace lprox {

struct AlmState {
  double multiplier = 0.0;  // lambda_alm
  double penalty = 1.0;     // mu
  double growth = 2.0;      // alpha
  double penalty_max = 1e4;
  double inner_step = 1e-2;  // initial step for the line search
  int max_inner = 200;
  int max_outer = 50;
  double tolerance = 1e-6;  // delta

  void validate() const;
};

struct AlmReport {
  int outer_iterations = 0;
  int inner_iterations = 0;  // summed over outer iterations
  double violation = 0.0;
  double distance = 0.0;  // |y - anchor|, unsquared
  double penalty = 0.0;
  double multiplier = 0.0;
  bool converged = false;
};

struct AlmError : ConvergenceError {
  AlmError(const std::string& what, AlmReport report, Vec best)
      : ConvergenceError(what, report.violation, report.outer_iterations),
        report(report),
        best(std::move(best)) {}
  AlmReport report;
  Vec best;
};

struct AlmResult {
  Vec y;
  AlmReport report;
};

/// Minimizes |y - anchor| subject to g(y) = 0 by the augmented Lagrangian
///   0.5 |y - anchor|^2 + lambda g(y) + (mu / 2) g(y)^2.
/// Throws AlmError (with the last iterate) when the outer cap is hit.
AlmResult alm_project(const Vec& anchor, const SmoothViolation& g, AlmState state = {});

}  // namespace lprox
