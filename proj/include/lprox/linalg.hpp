#pragma once

#include "lprox/common.hpp"

#include <functional>
#include <vector>

namespace lprox {

/// Dominant eigenpair of a symmetric PSD operator by power iteration.
struct PowerResult {
  double eigenvalue = 0.0;
  Vec vector;
  int iterations = 0;
};

/// Stops when the eigen-residual falls below tol * lambda. Throws
/// ConvergenceError after max_iter iterations.
PowerResult power_iteration(const std::function<Vec(const Vec&)>& op, Vec start, double tol,
                            int max_iter = 10000);

/// Leading `count` eigenpairs of a symmetric PSD matrix, power iteration with
/// deflation.
std::vector<PowerResult> top_eigenpairs(const Mat& sym, int count, Rng& rng, double tol = 1e-10);

}  // namespace lprox
