#include "helpers.hpp"

#include "lprox/dpo.hpp"

#include <cmath>

using namespace lprox;
using namespace testing;

namespace {

DpoConfig make_cfg(double nu, int m, std::uint64_t seed, Vec target = {}) {
  DpoConfig c;
  c.nu = nu;
  c.samples = m;
  c.seed = seed;
  c.target = std::move(target);
  return c;
}

Mat row(const Vec& a) { return a.transpose(); }

}  // namespace

TEST_SUITE("dpo") {

TEST_CASE("smoothed_value of a constant is the constant") {
  const Vec c = vec({0.3, -1.7, 1e5});
  const Simulator sim = constant_simulator(c, 3);
  for (int m : {1, 7, 10, 64}) {
    for (double nu : {1e-3, 0.1, 5.0}) CHECK(smoothed_value(sim, vec({1, 2, 3}), make_cfg(nu, m, 9)) == c);
  }
}

TEST_CASE("smoothed_value of a linear map") {
  const Vec a = vec({1.0, -2.0, 0.5});
  const Vec x = vec({0.2, 0.4, -1.0});
  const double nu = 0.1;
  const int m = 10000;
  const Vec v = smoothed_value(linear_simulator(row(a)), x, make_cfg(nu, m, 1));
  CHECK(std::abs(v[0] - a.dot(x)) <= 3 * nu * a.norm() / std::sqrt(m));
}

TEST_CASE("config preconditions") {
  const Simulator sim = quadratic_simulator(2);
  CHECK_THROWS_AS(smoothed_value(sim, v2(0, 0), make_cfg(0.0, 1, 0)), ParameterError);
  CHECK_THROWS_AS(smoothed_value(sim, v2(0, 0), make_cfg(-1.0, 1, 0)), ParameterError);
  CHECK_THROWS_AS(smoothed_grad(sim, v2(0, 0), make_cfg(0.1, 0, 0)), ParameterError);
  CHECK_THROWS_AS(dpo_loss_grad(sim, v2(0, 0), make_cfg(0.1, 4, 0, v2(1, 1))), ParameterError);
}

TEST_CASE("non-finite responses carry the perturbation index") {
  Simulator bad{"bad", 1, 1, 1.0, true, [](const Vec& x) -> Vec {
                  return Vec::Constant(1, x[0] > 0.5 ? NAN : x[0]);
                }};
  // x far below the threshold except for the large perturbations.
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    try {
      smoothed_value(bad, Vec::Constant(1, 0.0), make_cfg(0.4, 10, seed));
    } catch (const SimulatorError& e) {
      CHECK(e.perturbation >= 0);
      CHECK(e.perturbation < 10);
      ++hits;
    }
  }
  CHECK(hits > 0);
  Simulator nan_always = bad;
  nan_always.fn = [](const Vec&) { return Vec::Constant(1, NAN); };
  try {
    smoothed_value(nan_always, Vec::Zero(1), make_cfg(0.1, 3, 0));
    FAIL("expected SimulatorError");
  } catch (const SimulatorError& e) {
    CHECK(e.perturbation == 0);
  }
}

TEST_CASE("smoothed_grad of a constant is exactly zero with the baseline") {
  const Simulator sim = constant_simulator(vec({2.5, -1.0}), 3);
  for (int m : {1, 5, 100}) CHECK(smoothed_grad(sim, vec({1, 0, -1}), make_cfg(0.1, m, 4)).isZero(0.0));
}

TEST_CASE("smoothed_grad of a linear map") {
  const Vec a = vec({1.0, -2.0, 0.5});
  const Mat j = smoothed_grad(linear_simulator(row(a)), Vec::Zero(3), make_cfg(0.1, 1000, 5));
  const double rel = (j.row(0).transpose() - a).cwiseAbs().mean() / a.cwiseAbs().mean();
  CHECK(rel < 0.1);
}

TEST_CASE("smoothed_grad of the squared norm") {
  const Mat j = smoothed_grad(quadratic_simulator(2), v2(1, 0), make_cfg(0.05, 10000, 6));
  CHECK((j.row(0).transpose() - v2(2, 0)).norm() / 2.0 < 0.1);
}

TEST_CASE("absorb_nu drops the 1/nu factor") {
  const Simulator sim = linear_simulator(row(vec({1.0, 2.0})));
  DpoConfig c = make_cfg(0.25, 50, 8);
  const Mat plain = smoothed_grad(sim, v2(0, 0), c);
  c.absorb_nu = true;
  const Mat absorbed = smoothed_grad(sim, v2(0, 0), c);
  CHECK((plain * 0.25 - absorbed).norm() < 1e-12 * plain.norm());
}

TEST_CASE("unbiasedness over 50 seeds") {
  // Hotelling T^2 of the seed-mean against the analytic gradient, 99% level:
  // (p (n-1) / (n-p)) F_{p,n-p}(0.99) with p=2, n=50 is about 10.4.
  const Vec a = vec({1.5, -0.5});
  const Simulator sim = linear_simulator(row(a));
  const int n = 50;
  Mat draws(2, n);
  for (int s = 0; s < n; ++s) draws.col(s) = smoothed_grad(sim, v2(0.3, -0.2), make_cfg(0.1, 10, 100 + s)).row(0).transpose();
  const Vec mean = draws.rowwise().mean();
  const Mat centered = draws.colwise() - mean;
  const Mat cov = centered * centered.transpose() / (n - 1);
  const Vec diff = mean - a;
  const double t2 = n * diff.dot(cov.ldlt().solve(diff));
  CHECK(t2 < 10.4);
}

TEST_CASE("baseline does not move the expectation") {
  const Vec a = vec({1.0, 2.0, -1.0});
  const Simulator sim = linear_simulator(row(a));
  const Vec x = vec({0.5, 0.5, 0.5});
  const int n = 50;
  Mat diffs(3, n);
  for (int s = 0; s < n; ++s) {
    DpoConfig c = make_cfg(0.1, 10, 500 + s);
    const Mat with = smoothed_grad(sim, x, c);
    c.baseline = false;
    const Mat without = smoothed_grad(sim, x, c);
    diffs.col(s) = (with - without).row(0).transpose();
  }
  const Vec mean = diffs.rowwise().mean();
  for (int i = 0; i < 3; ++i) {
    const double sd = std::sqrt((diffs.row(i).array() - mean[i]).square().sum() / (n - 1));
    CHECK(std::abs(mean[i]) <= 3 * sd / std::sqrt(n));
  }
}

TEST_CASE("estimates are deterministic in the seed") {
  const Simulator sim = saturating_simulator(Mat::Random(2, 3), 1.0);
  const Vec x = vec({0.1, -0.3, 0.7});
  const DpoConfig c = make_cfg(0.1, 10, 77, v2(0.2, 0.1));
  CHECK(smoothed_grad(sim, x, c) == smoothed_grad(sim, x, c));
  CHECK(smoothed_value(sim, x, c) == smoothed_value(sim, x, c));
  CHECK(dpo_loss_grad(sim, x, c) == dpo_loss_grad(sim, x, c));
  DpoConfig other = c;
  other.seed = 78;
  CHECK(smoothed_grad(sim, x, c) != smoothed_grad(sim, x, other));
}

TEST_CASE("dpo_loss_grad vanishes on target") {
  const Mat a = (Mat(2, 3) << 1, 0, 2, -1, 1, 0).finished();
  const Vec x = vec({0.3, -0.1, 0.2});
  const double nu = 0.01;
  const int m = 10;
  const Vec g = dpo_loss_grad(linear_simulator(a), x, make_cfg(nu, m, 3, a * x));
  // Residual noise is nu A eps_bar; three standard deviations through |A|_F^2.
  CHECK(g.norm() < 3 * a.squaredNorm() * nu * std::sqrt(3.0 / m));
}

TEST_CASE("dpo_loss_grad matches the least-squares gradient") {
  const Mat a = (Mat(2, 3) << 1, 0, 2, -1, 1, 0).finished();
  const Vec xs = vec({0.5, 0.5, -0.5});
  const Vec x = vec({1.5, -1.0, 0.5});
  const Vec g = dpo_loss_grad(linear_simulator(a), x, make_cfg(0.1, 20000, 12, a * xs));
  const Vec truth = a.transpose() * (a * x - a * xs);
  CHECK((g - truth).norm() / truth.norm() < 0.05);
  CHECK(g.dot(x - xs) > 0);
}

TEST_CASE("literal mode returns the bare residual") {
  const Simulator sim = linear_simulator(Mat::Identity(2, 2) * 2.0);
  DpoConfig c = make_cfg(0.1, 10, 3, v2(1, 1));
  c.mode = DpoGradMode::literal;
  CHECK(dpo_loss_grad(sim, v2(1, 2), c) == smoothed_value(sim, v2(1, 2), c) - v2(1, 1));
  const Simulator wide = linear_simulator(Mat::Ones(1, 2));
  c.target = Vec::Zero(1);
  CHECK_THROWS_AS(dpo_loss_grad(wide, v2(1, 2), c), ParameterError);
  CHECK(dpo_grad_mode_from_string(to_string(DpoGradMode::literal)) == DpoGradMode::literal);
  CHECK_THROWS_AS(dpo_grad_mode_from_string("sideways"), ConfigError);
}

TEST_CASE("design_loop converges on an identity simulator") {
  Rng rng(19);
  const Mat w = rng.normal_vec(8).reshaped(4, 2);
  const DecoderMap dec = DecoderMap::linear(w, Vec::Zero(4));
  const Vec zstar = v2(0.7, -0.4);
  DpoConfig c = make_cfg(0.05, 200, 21, dec.decode(zstar));
  const double step = 0.5 / w.squaredNorm();
  const DesignResult r = design_loop(v2(-1, 1), dec, linear_simulator(Mat::Identity(4, 4)), c, 200, step, 1e-4);
  CHECK(r.steps_taken <= 200);
  bool strictly = true;
  for (std::size_t k = 1; k < r.mse.size(); ++k) strictly = strictly && r.mse[k] < r.mse[k - 1];
  CHECK(strictly);
  CHECK(r.mse.back() < 1e-4);
}

TEST_CASE("design_loop stops at the tolerance and rejects zero steps") {
  const DecoderMap dec = DecoderMap::identity(2);
  const DpoConfig c = make_cfg(0.05, 50, 2, v2(1, 1));
  const Simulator sim = linear_simulator(Mat::Identity(2, 2));
  const DesignResult r = design_loop(v2(0, 0), dec, sim, c, 500, 0.5, 1e-3);
  CHECK(r.steps_taken < 500);
  CHECK(r.mse.back() < 1e-3);
  CHECK_THROWS_AS(design_loop(v2(0, 0), dec, sim, c, 0, 0.5), ParameterError);
}

TEST_CASE("design_loop divergence reports the step") {
  const DecoderMap dec = DecoderMap::identity(2);
  const DpoConfig c = make_cfg(0.05, 10, 2, Vec::Constant(1, 1.0));
  try {
    design_loop(v2(3, 3), dec, quadratic_simulator(2), c, 100, 1e150);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.index >= 1);
  } catch (const SimulatorError&) {
    // Overflowing inputs can surface as a non-finite response first.
  }
}

TEST_CASE("design_loop on the quadratic suite is monotone within 5%") {
  // Stops at 1e-4, where the nu^2-scale smoothing noise starts to dominate.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const Vec z0 = rng.normal_vec(3);
    const DpoConfig c = make_cfg(0.05, 10, seed, Vec::Constant(1, 1.0));
    const DesignResult r = design_loop(z0, DecoderMap::identity(3), quadratic_simulator(3), c, 30, 0.005, 1e-4);
    for (std::size_t k = 2; k < r.mse.size(); ++k) CHECK(r.mse[k] <= 1.05 * r.mse[k - 1] + 1e-12);
  }
}

TEST_CASE("process simulator round-trips decimal text") {
  const Simulator sim =
      process_simulator({LPROX_ECHO_SIM}, 2, 2);
  CHECK(sim.evaluate(v2(0.1, 0.2)) == v2(0.2, 0.1 + 0.2));
  CHECK(sim.evaluate(v2(-3, 1e-300)) == v2(-6, -3));
  const Vec v = smoothed_value(sim, v2(1, 1), make_cfg(0.1, 5, 0));
  CHECK(v.allFinite());
  const Simulator dead = process_simulator({"/bin/true"}, 2, 2);
  CHECK_THROWS_AS(dead.evaluate(v2(1, 1)), SimulatorError);
}

}
