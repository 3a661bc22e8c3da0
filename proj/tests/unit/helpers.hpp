#pragma once

#include "lprox/common.hpp"

#include <doctest.h>

#include <functional>

namespace testing {

using lprox::Mat;
using lprox::Vec;

inline Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

/// Central-difference gradient of a scalar function.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h = 1e-5) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

/// Central-difference Jacobian of a vector function.
inline Mat fd_jacobian(const std::function<Vec(const Vec&)>& f, const Vec& x, double h = 1e-6) {
  const Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec a = x, b = x;
    a[i] += h;
    b[i] -= h;
    j.col(i) = (f(a) - f(b)) / (2 * h);
  }
  return j;
}

inline double rel_err(const Vec& a, const Vec& b) {
  const double scale = std::max(b.norm(), 1e-12);
  return (a - b).norm() / scale;
}

inline Mat random_spd(int d, lprox::Rng& rng, double floor = 0.2) {
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = rng.normal();
  Mat s = a * a.transpose() / d + floor * Mat::Identity(d, d);
  return 0.5 * (s + s.transpose());
}

}  // namespace testing
