#include "lprox/linalg.hpp"

#include <cmath>

namespace lprox {

PowerResult power_iteration(const std::function<Vec(const Vec&)>& op, Vec start, double tol, int max_iter) {
  if (start.norm() == 0.0) start.setOnes();
  Vec v = start.normalized();
  PowerResult r;
  double prev = -1.0;
  for (int it = 1; it <= max_iter; ++it) {
    Vec w = op(v);
    const double lambda = v.dot(w);
    const double wn = w.norm();
    r.iterations = it;
    if (wn == 0.0) {
      r.eigenvalue = 0.0;
      r.vector = v;
      return r;
    }
    const double residual = (w - lambda * v).norm();
    const bool settled = prev >= 0.0 && std::abs(lambda - prev) <= tol * std::max(lambda, 1e-300);
    if (residual <= tol * std::max(lambda, 1e-300) || (settled && residual <= std::sqrt(tol) * lambda)) {
      r.eigenvalue = lambda;
      r.vector = v;
      return r;
    }
    prev = lambda;
    v = w / wn;
  }
  throw ConvergenceError("power iteration did not converge", prev, max_iter);
}

std::vector<PowerResult> top_eigenpairs(const Mat& sym, int count, Rng& rng, double tol) {
  if (sym.rows() != sym.cols()) throw ShapeError("top_eigenpairs: matrix must be square");
  if (count > sym.rows()) throw ParameterError("count", "more eigenpairs requested than the dimension");
  std::vector<PowerResult> out;
  Mat deflated = sym;
  for (int k = 0; k < count; ++k) {
    Vec start = rng.normal_vec(sym.rows());
    for (const auto& prev : out) start -= prev.vector.dot(start) * prev.vector;
    auto op = [&](const Vec& v) -> Vec {
      Vec w = deflated * v;
      // Keep the iterate orthogonal to already-extracted directions.
      for (const auto& prev : out) w -= prev.vector.dot(w) * prev.vector;
      return w;
    };
    const double scale = sym.norm();
    PowerResult r;
    if (deflated.norm() > 1e-13 * scale) r = power_iteration(op, start, tol);
    if (r.eigenvalue <= 0.0) {
      // Null direction: any unit vector orthogonal to the previous ones.
      Vec v = start;
      for (const auto& prev : out) v -= prev.vector.dot(v) * prev.vector;
      r.vector = v.normalized();
      r.eigenvalue = 0.0;
    }
    deflated -= r.eigenvalue * r.vector * r.vector.transpose();
    out.push_back(r);
  }
  return out;
}

}  // namespace lprox
