#include "lprox/schedule.hpp"

#include <algorithm>
#include <cmath>

namespace lprox {

Vec to_vec(const std::vector<double>& xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  for (std::size_t i = 0; i < xs.size(); ++i) v[static_cast<Eigen::Index>(i)] = xs[i];
  return v;
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

double NoiseSchedule::step_size(int t) const {
  if (t < 1 || t > T) throw IndexError("step size level " + std::to_string(t) + " outside 1.." + std::to_string(T));
  return gamma[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::gamma_min() const {
  return gamma.empty() ? 0.0 : *std::min_element(gamma.begin(), gamma.end());
}

double NoiseSchedule::gamma_max() const {
  return gamma.empty() ? 0.0 : *std::max_element(gamma.begin(), gamma.end());
}

void NoiseSchedule::validate() const {
  if (T < 0) throw ParameterError("T", "must be non-negative");
  if (inner_steps < 1) throw ParameterError("inner_steps", "must be >= 1");
  if (abar.size() != static_cast<std::size_t>(T) + 1)
    throw ParameterError("abar", "expected T+1 entries");
  if (gamma.size() != static_cast<std::size_t>(T)) throw ParameterError("gamma", "expected T entries");
  if (std::abs(abar[0] - 1.0) > 1e-12) throw ParameterError("abar_start", "abar[0] must equal 1");
  for (int t = 0; t <= T; ++t) {
    const double a = abar[static_cast<std::size_t>(t)];
    if (!(a > 0.0 && a <= 1.0)) throw ParameterError("abar", "entries must lie in (0, 1]");
    if (t > 0 && a > abar[static_cast<std::size_t>(t - 1)])
      throw ParameterError("abar", "must be non-increasing in t");
  }
  if (T >= 1 && abar[static_cast<std::size_t>(T)] > 0.05)
    throw ParameterError("abar_end", "abar[T] must be <= 0.05");
  for (int t = 1; t <= T; ++t) {
    const double g = gamma[static_cast<std::size_t>(t - 1)];
    if (!(g > 0.0) || !std::isfinite(g)) throw ParameterError("gamma", "step sizes must be positive");
    if (t > 1 && g < gamma[static_cast<std::size_t>(t - 2)])
      throw ParameterError("gamma", "must not increase toward t = 0");
  }
}

NoiseSchedule make_schedule(int T, double abar_start, double abar_end, double gamma_max,
                            double gamma_min, int inner_steps) {
  if (T < 1) throw ParameterError("T", "must be >= 1");
  if (inner_steps < 1) throw ParameterError("inner_steps", "must be >= 1");
  if (!(abar_start > 0.0 && abar_start <= 1.0)) throw ParameterError("abar_start", "must lie in (0, 1]");
  if (!(abar_end > 0.0 && abar_end < abar_start))
    throw ParameterError("abar_end", "must lie in (0, abar_start)");
  if (!(gamma_min > 0.0)) throw ParameterError("gamma_min", "must be positive");
  if (!(gamma_max >= gamma_min)) throw ParameterError("gamma_max", "must be >= gamma_min");

  NoiseSchedule s;
  s.T = T;
  s.inner_steps = inner_steps;
  s.abar.resize(static_cast<std::size_t>(T) + 1);
  const double ratio = abar_end / abar_start;
  for (int t = 0; t <= T; ++t)
    s.abar[static_cast<std::size_t>(t)] = abar_start * std::pow(ratio, static_cast<double>(t) / T);
  s.abar[0] = abar_start;
  s.abar[static_cast<std::size_t>(T)] = abar_end;

  s.gamma.resize(static_cast<std::size_t>(T));
  const double gratio = gamma_max / gamma_min;
  for (int t = 1; t <= T; ++t) {
    const double frac = T == 1 ? 1.0 : static_cast<double>(t - 1) / (T - 1);
    s.gamma[static_cast<std::size_t>(t - 1)] = gamma_min * std::pow(gratio, frac);
  }
  s.gamma.back() = gamma_max;
  s.gamma.front() = T == 1 ? gamma_max : gamma_min;
  s.validate();
  return s;
}

Vec forward_noise(const Vec& x0, int t, const NoiseSchedule& schedule, Rng& rng) {
  if (t < 0 || t > schedule.T)
    throw IndexError("level " + std::to_string(t) + " outside 0.." + std::to_string(schedule.T));
  const double a = schedule.abar[static_cast<std::size_t>(t)];
  Vec eps = rng.normal_vec(x0.size());
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * eps;
}

}  // namespace lprox
