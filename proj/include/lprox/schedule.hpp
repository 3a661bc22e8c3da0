#pragma once

#include "lprox/common.hpp"

namespace lprox {

/// Annealing levels t = 0..T. `abar[t]` is the signal fraction at level t
/// (abar[0] = 1 is clean data); `gamma[t-1]` is the Langevin step size used
/// while annealing level t, for t = 1..T.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> abar{1.0};
  std::vector<double> gamma;
  int inner_steps = 1;

  double step_size(int t) const;  // gamma at level t (1-based)
  double gamma_min() const;
  double gamma_max() const;

  /// Throws ParameterError naming the first violated invariant.
  void validate() const;
};

/// Geometric interpolation of abar from abar_start (t=0) to abar_end (t=T)
/// and of gamma from gamma_max (t=T) down to gamma_min (t=1).
NoiseSchedule make_schedule(int T, double abar_start, double abar_end, double gamma_max,
                            double gamma_min, int inner_steps);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps with eps drawn from `rng`.
Vec forward_noise(const Vec& x0, int t, const NoiseSchedule& schedule, Rng& rng);

}  // namespace lprox
