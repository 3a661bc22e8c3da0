#include "helpers.hpp"

#include "lprox/schedule.hpp"
#include "lprox/score.hpp"
#include "lprox/serialize.hpp"

#include <cmath>

using namespace lprox;
using namespace testing;

TEST_SUITE("schedule_score") {

TEST_CASE("make_schedule interpolates geometrically") {
  const NoiseSchedule s = make_schedule(2, 1.0, 0.01, 0.1, 0.1, 1);
  REQUIRE(s.abar.size() == 3);
  CHECK(s.abar[0] == 1.0);
  CHECK(s.abar[1] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(s.abar[2] == 0.01);
  REQUIRE(s.gamma.size() == 2);
  CHECK(s.gamma[0] == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(s.gamma[1] == doctest::Approx(0.1).epsilon(1e-14));

  const NoiseSchedule one = make_schedule(1, 1.0, 0.04, 0.2, 0.1, 3);
  CHECK(one.abar == std::vector<double>{1.0, 0.04});
  CHECK(one.gamma.size() == 1);
  CHECK(one.inner_steps == 3);
}

TEST_CASE("make_schedule matches an independent geometric oracle") {
  const int T = 7;
  const NoiseSchedule s = make_schedule(T, 1.0, 0.002, 0.3, 0.01, 2);
  for (int t = 0; t <= T; ++t) {
    const double expect = std::exp(std::log(0.002) * t / T);
    CHECK(s.abar[static_cast<std::size_t>(t)] == doctest::Approx(expect).epsilon(1e-12));
  }
  for (int t = 1; t <= T; ++t) {
    const double expect = 0.01 * std::exp(std::log(30.0) * (t - 1) / (T - 1));
    CHECK(s.step_size(t) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(s.gamma_min() == 0.01);
  CHECK(s.gamma_max() == 0.3);
}

TEST_CASE("make_schedule rejects bad ranges naming the field") {
  auto field_of = [](auto&& fn) -> std::string {
    try {
      fn();
    } catch (const ParameterError& e) {
      return e.field;
    }
    return "";
  };
  CHECK(field_of([] { make_schedule(3, 1.0, 0.01, 0.1, 0.2, 1); }) == "gamma_max");
  CHECK(field_of([] { make_schedule(0, 1.0, 0.01, 0.1, 0.1, 1); }) == "T");
  CHECK(field_of([] { make_schedule(3, 1.0, 0.01, 0.1, 0.1, 0); }) == "inner_steps");
  CHECK(field_of([] { make_schedule(3, 1.0, 1.5, 0.1, 0.1, 1); }) == "abar_end");
  CHECK(field_of([] { make_schedule(3, 0.9, 0.01, 0.1, 0.1, 1); }) == "abar_start");
  CHECK(field_of([] { make_schedule(3, 1.0, 0.2, 0.1, 0.1, 1); }) == "abar_end");
}

TEST_CASE("generated schedules satisfy the invariants") {
  Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    const int T = 1 + static_cast<int>(rng.uniform() * 40);
    const double end = 1e-4 + rng.uniform() * 0.049;
    const double gmin = 1e-4 + rng.uniform() * 0.1;
    const double gmax = gmin * (1.0 + 10 * rng.uniform());
    const NoiseSchedule s = make_schedule(T, 1.0, end, gmax, gmin, 1);
    CHECK_NOTHROW(s.validate());
    for (int t = 1; t <= T; ++t) {
      CHECK(s.abar[static_cast<std::size_t>(t)] <= s.abar[static_cast<std::size_t>(t - 1)]);
      CHECK(s.step_size(t) > 0.0);
      if (t > 1) CHECK(s.step_size(t) >= s.step_size(t - 1));
    }
  }
}

TEST_CASE("forward_noise endpoints") {
  NoiseSchedule s;
  s.T = 2;
  s.abar = {1.0, 0.0, 0.0};
  s.gamma = {0.1, 0.1};
  const Vec x0 = vec({1.5, -2.0, 0.25});
  Rng a(9);
  CHECK(forward_noise(x0, 0, s, a) == x0);
  Rng b(9), c(9);
  const Vec noisy = forward_noise(x0, 1, s, b);
  CHECK(noisy == c.normal_vec(3));
  Rng d(1);
  CHECK_THROWS_AS(forward_noise(x0, 3, s, d), IndexError);
  CHECK_THROWS_AS(forward_noise(x0, -1, s, d), IndexError);
}

TEST_CASE("forward_noise statistics") {
  NoiseSchedule s;
  s.T = 1;
  s.abar = {1.0, 0.5};
  s.gamma = {0.1};
  const int n = 100000;
  Rng rng(123);
  // Variance at x0 = 0.
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double v = forward_noise(Vec::Zero(1), 1, s, rng)[0];
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1);
  CHECK(std::abs(var - 0.5) < 3 * 0.5 * std::sqrt(2.0 / (n - 1)));
  // Mean at x0 != 0.
  const Vec x0 = vec({2.0, -1.0});
  Vec acc = Vec::Zero(2);
  for (int i = 0; i < n; ++i) acc += forward_noise(x0, 1, s, rng);
  const Vec m = acc / n;
  const double se = std::sqrt(0.5 / n);
  for (int i = 0; i < 2; ++i) CHECK(std::abs(m[i] - std::sqrt(0.5) * x0[i]) < 4 * se);
}

TEST_CASE("analytic scores: simple closed forms") {
  ScoreField f = ScoreField::linear_gaussian(Mat::Identity(2, 2), Vec::Zero(2));
  f.bind_schedule(make_schedule(3, 1.0, 0.01, 0.1, 0.1, 1));
  CHECK(f.score(v2(1, 2), 0) == v2(-1, -2));

  Mat cov = Mat::Identity(2, 2) * 0.3;
  ScoreField m = ScoreField::gaussian_mixture({{0.5, v2(2, 1), cov}, {0.5, v2(-2, -1), cov}});
  m.bind_schedule(make_schedule(3, 1.0, 0.01, 0.1, 0.1, 1));
  for (int t = 0; t <= 3; ++t) CHECK(m.score(Vec::Zero(2), t).norm() < 1e-15);
  CHECK_THROWS_AS(m.score(Vec::Zero(3), 0), ShapeError);
}

TEST_CASE("single Gaussian level marginal matches the convolution formula") {
  Rng rng(2);
  const Mat cov = random_spd(3, rng);
  const Vec mu = rng.normal_vec(3);
  ScoreField f = ScoreField::gaussian_mixture({{1.0, mu, cov}});
  const NoiseSchedule s = make_schedule(5, 1.0, 0.01, 0.1, 0.1, 1);
  f.bind_schedule(s);
  for (int t = 0; t <= 5; ++t) {
    const double a = s.abar[static_cast<std::size_t>(t)];
    const Mat c = a * cov + (1 - a) * Mat::Identity(3, 3);
    const Vec x = rng.normal_vec(3);
    const Vec expect = -c.inverse() * (x - std::sqrt(a) * mu);
    CHECK(rel_err(f.score(x, t), expect) < 1e-12);
  }
}

TEST_CASE("analytic scores agree with finite differences of the log-density") {
  Rng rng(77);
  const NoiseSchedule s = make_schedule(6, 1.0, 0.01, 0.1, 0.1, 1);
  std::vector<ScoreField> fields;
  fields.push_back(ScoreField::gaussian_mixture(
      {{0.3, rng.normal_vec(3), random_spd(3, rng)}, {0.7, rng.normal_vec(3) * 2, random_spd(3, rng)}}));
  Mat factor(3, 3);
  factor << 1.0, 0.2, 0.0, 0.0, 0.7, 0.1, 0.3, 0.0, 1.2;
  fields.push_back(ScoreField::linear_gaussian(factor, rng.normal_vec(3)));
  for (auto& f : fields) {
    f.bind_schedule(s);
    for (int k = 0; k < 100; ++k) {
      const int t = static_cast<int>(rng.uniform() * 7) % 7;
      const Vec x = 1.5 * rng.normal_vec(3);
      const Vec fd = fd_gradient([&](const Vec& y) { return f.log_density(y, t); }, x);
      CHECK(rel_err(f.score(x, t), fd) < 1e-4);
    }
  }
}

TEST_CASE("mixture validation") {
  const Mat eye = Mat::Identity(2, 2);
  CHECK_THROWS_AS(ScoreField::gaussian_mixture({{0.5, v2(0, 0), eye}, {0.4, v2(1, 1), eye}}), ParameterError);
  CHECK_THROWS_AS(ScoreField::gaussian_mixture({{1.0, v2(0, 0), Mat::Zero(2, 2)}}), ParameterError);
  Mat asym = eye;
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(ScoreField::gaussian_mixture({{1.0, v2(0, 0), asym}}), ParameterError);
  CHECK_THROWS_AS(ScoreField::gaussian_mixture({{-1.0, v2(0, 0), eye}, {2.0, v2(0, 0), eye}}), ParameterError);
}

TEST_CASE("dsm_loss: perfect predictor, zero model and sign") {
  NoiseSchedule s;
  s.T = 1;
  s.abar = {1.0, 0.5};
  s.gamma = {0.1};
  const Mat zeros = Mat::Zero(1, 20000);
  // x0 = 0 so x_t = sqrt(1 - abar) eps and the target -eps/sqrt(1 - abar) is -x_t/(1 - abar).
  ScoreFn perfect = [&](const Vec& x, int t) -> Vec { return -x / (1.0 - s.abar[static_cast<std::size_t>(t)]); };
  Rng rng(4);
  CHECK(dsm_loss(perfect, zeros, s, rng) < 1e-20);

  ScoreFn zero = [](const Vec& x, int) -> Vec { return Vec::Zero(x.size()); };
  Rng rng2(4);
  const double loss = dsm_loss(zero, zeros, s, rng2, 1);
  // E[eps^2] / (1 - abar) = 2; per-sample variance 8.
  CHECK(std::abs(loss - 2.0) < 3 * std::sqrt(8.0 / 20000));

  Rng rng3(8);
  ScoreFn junk = [](const Vec& x, int) -> Vec { return 3.0 * x.array().sin().matrix(); };
  CHECK(dsm_loss(junk, Mat::Random(2, 50), s, rng3) >= 0.0);
  CHECK_THROWS_AS(dsm_loss(zero, Mat(1, 0), s, rng3), ParameterError);
}

TEST_CASE("train_score learns the standard normal score") {
  const NoiseSchedule s = make_schedule(10, 1.0, 0.01, 0.1, 0.1, 1);
  Rng rng(31);
  Mat data(2, 2000);
  for (int i = 0; i < data.cols(); ++i) data.col(i) = rng.normal_vec(2);
  MlpScoreConfig cfg;
  cfg.epochs = 150;
  cfg.seed = 6;
  const TrainResult res = train_score(data, cfg, s);
  REQUIRE(res.epoch_loss.size() == 150);
  CHECK(res.epoch_loss.back() <= res.epoch_loss.front());
  // N(0, I) stays N(0, I) at every level, so the analytic score is -x.
  double num = 0, den = 0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      const Vec x = v2(-2 + i, -2 + j);
      num += (res.field.score(x, 1) + x).squaredNorm();
      den += x.squaredNorm();
    }
  CHECK(std::sqrt(num / den) < 0.25);

  const TrainResult again = train_score(data, cfg, s);
  CHECK(again.field.mlp_params().w1 == res.field.mlp_params().w1);
  CHECK(again.field.mlp_params().b3 == res.field.mlp_params().b3);
  CHECK(again.epoch_loss == res.epoch_loss);
}

TEST_CASE("train_score with zero epochs returns the initial network") {
  const NoiseSchedule s = make_schedule(4, 1.0, 0.01, 0.1, 0.1, 1);
  MlpScoreConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 3;
  Rng rng(1);
  Mat data(2, 10);
  for (int i = 0; i < 10; ++i) data.col(i) = rng.normal_vec(2);
  const TrainResult res = train_score(data, cfg, s);
  const MlpParams init = init_mlp(2, cfg);
  CHECK(res.epoch_loss.empty());
  CHECK(res.field.mlp_params().w1 == init.w1);
  CHECK(res.field.mlp_params().w3 == init.w3);
}

TEST_CASE("train_score reports divergence with the epoch index") {
  const NoiseSchedule s = make_schedule(4, 1.0, 0.01, 0.1, 0.1, 1);
  MlpScoreConfig cfg;
  cfg.learning_rate = 1e200;
  cfg.epochs = 50;
  Rng rng(1);
  Mat data = 1e3 * Mat::Random(2, 64);
  try {
    train_score(data, cfg, s);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.index >= 1);
  }
}

TEST_CASE("score documents round-trip") {
  Rng rng(12);
  ScoreField mix = ScoreField::gaussian_mixture(
      {{0.25, rng.normal_vec(3), random_spd(3, rng)}, {0.75, rng.normal_vec(3), random_spd(3, rng)}});
  const Json doc = score_to_json(mix);
  const ScoreField back = score_from_json(Json::parse(doc.dump()));
  CHECK(back.components()[1].cov == mix.components()[1].cov);
  CHECK(back.components()[0].mean == mix.components()[0].mean);
  CHECK(back.components()[0].weight == mix.components()[0].weight);

  MlpScoreConfig cfg;
  cfg.seed = 2;
  const ScoreField net = ScoreField::mlp(init_mlp(3, cfg));
  const ScoreField net2 = score_from_json(Json::parse(score_to_json(net).dump()));
  CHECK((net2.mlp_params().w2 - net.mlp_params().w2).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((net2.mlp_params().b1 - net.mlp_params().b1).cwiseAbs().maxCoeff() <= 1e-12);
}

}
