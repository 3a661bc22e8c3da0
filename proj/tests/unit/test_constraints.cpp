#include "helpers.hpp"

#include "lprox/constraints.hpp"

#include <algorithm>
#include <cmath>

using namespace lprox;
using namespace testing;

namespace {

// Infimum of sum |y - x| over y in [-1,1]^n with exactly k strictly negative
// entries, by enumerating every k-subset.
double brute_force_porosity_cost(const Vec& x, int k) {
  const int n = static_cast<int>(x.size());
  double best = INFINITY;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    double cost = 0;
    for (int i = 0; i < n; ++i) {
      const bool neg = mask & (1u << i);
      if (neg && x[i] >= 0) cost += x[i];
      if (!neg && x[i] < 0) cost += -x[i];
    }
    best = std::min(best, cost);
  }
  return best;
}

}  // namespace

TEST_SUITE("constraints") {

TEST_CASE("violation examples") {
  CHECK(violation(ConstraintSpec::halfspace(v2(1, 0), 1), v2(0.5, 7)) == 0.0);
  CHECK(violation(ConstraintSpec::halfspace(v2(1, 0), 1), v2(3, 7)) == 2.0);
  CHECK(violation(ConstraintSpec::l2_ball(Vec::Zero(2), 1), v2(3, 4)) == 4.0);
  const ImageGrid g = ImageGrid::from_rows({{0.5, -0.3}, {0.2, -0.9}});
  CHECK(violation(ConstraintSpec::porosity_grid(2, 2, 2), g.values) == 0.0);
  CHECK(violation(ConstraintSpec::porosity_grid(2, 2, 4), g.values) == 2.0);
  CHECK_THROWS_AS(violation(ConstraintSpec::l2_ball(Vec::Zero(2), 1), v2(NAN, 0)), NumericError);
  CHECK(violation(ConstraintSpec::box(v2(-1, -1), v2(1, 1)), v2(4, 0)) == 3.0);
}

TEST_CASE("porosity counts strictly negative pixels") {
  CHECK(porosity(ImageGrid::from_rows({{-1, -1}, {-1, -1}})) == 4);
  CHECK(porosity(ImageGrid::from_rows({{1, 1}, {1, 1}})) == 0);
  CHECK(porosity(ImageGrid::from_rows({{0.5, -0.3}, {0.2, -0.9}})) == 2);
  CHECK(porosity(ImageGrid::from_rows({{0.0, -0.0}})) == 0);
  CHECK(porosity_target_from_fraction(0.3, 256) == 77);
  CHECK(porosity_target_from_fraction(0.5, 256) == 128);
  CHECK(porosity_target_from_fraction(0.5, 3) == 2);
}

TEST_CASE("project_porosity examples") {
  const double tau = 1e-3;
  const Vec x = vec({0.4, -0.2, 0.1, -0.8});
  const Vec y = project_porosity(x, 3, tau);
  CHECK(y == vec({0.4, -0.2, -tau, -0.8}));
  CHECK((y - x).lpNorm<1>() == doctest::Approx(0.1 + tau).epsilon(1e-12));
  CHECK(project_porosity(x, 2, tau) == x);
  const Vec flipped = project_porosity(Vec::Constant(6, 0.7), 6, tau);
  CHECK(flipped == Vec::Constant(6, -tau));
  const Vec lifted = project_porosity(vec({-0.5, -0.01, 0.3}), 1, tau);
  CHECK(lifted == vec({-0.5, 0.0, 0.3}));
  CHECK_THROWS_AS(project_porosity(x, 5, tau), ParameterError);
  CHECK_THROWS_AS(project_porosity(x, -1, tau), ParameterError);
  CHECK_THROWS_AS(project_porosity(x, 2, 0.0), ParameterError);
  CHECK_THROWS_AS(project_porosity(x, 2, 0.02), ParameterError);
}

TEST_CASE("project_porosity ties resolve by row-major index") {
  const Vec y = project_porosity(Vec::Constant(4, 0.5), 2, 1e-3);
  CHECK(y == vec({-1e-3, -1e-3, 0.5, 0.5}));
  const Vec z = project_porosity(Vec::Constant(4, -0.5), 1, 1e-3);
  CHECK(z == vec({0.0, 0.0, 0.0, -0.5}));
}

TEST_CASE("project_porosity is optimal on small grids") {
  Rng rng(42);
  const double tau = 1e-3;
  for (int n = 1; n <= 9; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      Vec x(n);
      for (int i = 0; i < n; ++i) x[i] = 2 * rng.uniform() - 1;
      for (int k = 0; k <= n; ++k) {
        const Vec y = project_porosity(x, k, tau);
        CHECK(porosity(y) == k);
        CHECK(y.cwiseAbs().maxCoeff() <= 1.0);
        const double ours = (y - x).lpNorm<1>();
        const double oracle = brute_force_porosity_cost(x, k);
        const int flips = static_cast<int>((y.array() != x.array()).count());
        CHECK(ours - oracle >= -1e-12);
        CHECK(ours - oracle <= tau * flips + 1e-12);
        const Vec again = project_porosity(y, k, tau);
        CHECK(porosity(again) == k);
      }
    }
  }
}

TEST_CASE("closed-form projections") {
  CHECK(project_closed_form(ConstraintSpec::l2_ball(Vec::Zero(2), 1), v2(3, 4)) == v2(0.6, 0.8));
  CHECK(project_closed_form(ConstraintSpec::halfspace(v2(0, 1), 0), v2(2, 5)) == v2(2, 0));
  CHECK(project_closed_form(ConstraintSpec::box(v2(-1, -1), v2(1, 1)), v2(2, -3)) == v2(1, -1));
  CHECK_THROWS_AS(project_closed_form(ConstraintSpec::porosity_grid(2, 2, 1), Vec::Zero(4)), UnsupportedKindError);
  CHECK_THROWS_AS(ConstraintSpec::halfspace(v2(0, 0), 1), ParameterError);
  CHECK_THROWS_AS(ConstraintSpec::l2_ball(Vec::Zero(2), -1), ParameterError);
}

TEST_CASE("projection properties on convex kinds") {
  Rng rng(7);
  const double delta = 1e-6;
  std::vector<ConstraintSpec> specs = {
      ConstraintSpec::halfspace(rng.normal_vec(3), rng.normal()),
      ConstraintSpec::l2_ball(rng.normal_vec(3), 0.5 + rng.uniform()),
      ConstraintSpec::box(-Vec::Constant(3, 0.5), Vec::Constant(3, 1.5)),
  };
  for (const auto& s : specs) {
    for (int k = 0; k < 1000; ++k) {
      const Vec x = 3 * rng.normal_vec(3);
      const Vec y = 3 * rng.normal_vec(3);
      const Vec px = project_closed_form(s, x);
      const Vec py = project_closed_form(s, y);
      CHECK((px - py).norm() <= (x - y).norm() + 1e-12);
      CHECK(violation(s, px) <= delta * 1e-3);
      CHECK(project_closed_form(s, px) == px);
    }
  }
}

TEST_CASE("prox of indicators and smooth penalties") {
  const ConstraintSpec ball = ConstraintSpec::l2_ball(Vec::Zero(2), 1);
  for (double lam : {1e-3, 1.0, 1e3}) CHECK(prox(ball, v2(3, 4), lam) == v2(0.6, 0.8));
  const ConstraintSpec quad = ConstraintSpec::custom_g(quadratic_violation(2));
  CHECK((prox(quad, v2(2, 2), 1.0) - v2(1, 1)).norm() < 1e-8);
  const ConstraintSpec zero = ConstraintSpec::custom_g(zero_violation());
  CHECK(prox(zero, v2(2, -5), 0.7) == v2(2, -5));
  CHECK_THROWS_AS(prox(quad, v2(1, 1), 0.0), ParameterError);
}

TEST_CASE("prox distance is monotone in lambda for smooth g") {
  const ConstraintSpec quad = ConstraintSpec::custom_g(quadratic_violation(3));
  const Vec x = vec({1.0, -2.0, 0.5});
  double prev = -1.0;
  for (double lam : {1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2}) {
    const Vec y = prox(quad, x, lam);
    // Closed form x / (1 + lambda).
    CHECK((y - x / (1 + lam)).norm() < 1e-7);
    const double d = (y - x).norm();
    CHECK(d > prev);
    prev = d;
  }
  CHECK((prox(quad, x, 1e-9) - x).norm() < 1e-8);
}

TEST_CASE("prox reports non-convergence with the residual") {
  // |a.y - b| has its minimizer on the kink, where the gradient never vanishes.
  const ConstraintSpec plane = ConstraintSpec::custom_g(hyperplane_violation(v2(1, 0), 0));
  try {
    prox(plane, v2(5, 1), 100.0);
    FAIL("expected a convergence error");
  } catch (const ConvergenceError& e) {
    CHECK(e.residual > 1e-8);
  }
}

TEST_CASE("fit_centroid_model on synthetic clouds") {
  // Axis-aligned 2-D features with distinct variances.
  Mat a(2, 4), b(2, 4);
  a << 4, -2, 1, 1, 0.5, 0.5, -0.5, -0.5;
  b << 1, -3, -1, -1, 0.4, 0.4, -0.4, -0.4;
  const CentroidModel m = fit_centroid_model(a, b);
  CHECK(std::abs(std::abs(m.axes(0, 0)) - 1) < 1e-6);
  CHECK(std::abs(m.axes(1, 0)) < 1e-6);
  CHECK(std::abs(std::abs(m.axes(1, 1)) - 1) < 1e-6);
  CHECK((m.axes.transpose() * m.axes - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-9);

  // Clouds at (+-5, 0) mirrored so the pooled mean is exactly 0.
  Rng rng(3);
  Mat pos(2, 50), neg(2, 50);
  for (int i = 0; i < 50; ++i) {
    const Vec u = 0.3 * rng.normal_vec(2);
    pos.col(i) = v2(5, 0) + u;
    neg.col(i) = v2(-5, 0) - u;
  }
  const CentroidModel c = fit_centroid_model(pos, neg, 0.5);
  const Vec mp = pos.rowwise().mean();
  CHECK(std::abs(c.target_centroid.norm() - mp.norm()) < 1e-9);
  CHECK((c.target_centroid + c.forbidden_centroid).norm() < 1e-9);
  CHECK(c.centroid_gap() == doctest::Approx(2 * mp.norm()).epsilon(1e-9));
  CHECK(centroid_trigger(c, v2(-5, 0)));
  CHECK_FALSE(centroid_trigger(c, v2(5, 0)));
  CHECK(centroid_trigger(c, -0.1 * mp));
  CHECK_FALSE(centroid_trigger(c, 0.1 * mp));
}

TEST_CASE("centroid_trigger is strict at the boundary") {
  CentroidModel m;
  m.feature_mean = Vec::Zero(2);
  m.axes = Mat::Identity(2, 2);
  m.target_centroid = Eigen::Vector2d(2, 0);
  m.forbidden_centroid = Eigen::Vector2d(-2, 0);
  m.trigger = 0.5;
  CHECK_FALSE(centroid_trigger(m, v2(0, 0)));
  CHECK(centroid_trigger(m, v2(-0.5, 0)));
  CHECK(centroid_trigger(m, v2(-2, 0)));
}

TEST_CASE("fit_centroid_model degeneracies") {
  Mat same(2, 2);
  same << 1, 1, 2, 2;
  CHECK_THROWS_AS(fit_centroid_model(same, same), DegeneracyError);
  Mat a(2, 2), b(2, 2);
  a << 1, -1, 0, 0;
  b << -1, 1, 0, 0;
  CHECK_THROWS_AS(fit_centroid_model(a, b), DegeneracyError);
  CHECK_THROWS_AS(fit_centroid_model(a.leftCols(1), b), ParameterError);
  CHECK_THROWS_AS(fit_centroid_model(a, b, 1.5), ParameterError);
}

TEST_CASE("violation gradients match finite differences away from kinks") {
  Rng rng(11);
  const ConstraintSpec hs = ConstraintSpec::custom_g(halfspace_violation(v2(1, 2), 0.5));
  const ConstraintSpec bl = ConstraintSpec::custom_g(ball_violation(v2(0, 1), 0.7));
  for (int k = 0; k < 100; ++k) {
    const Vec x = 2 * rng.normal_vec(2);
    for (const auto* s : {&hs, &bl}) {
      if (violation(*s, x) < 1e-3) continue;
      const Vec fd = fd_gradient([&](const Vec& y) { return violation(*s, y); }, x);
      CHECK((violation_gradient(*s, x) - fd).norm() < 1e-6);
    }
  }
}

}
