#pragma once

#include "lprox/constraints.hpp"
#include "lprox/decoder.hpp"
#include "lprox/sampler.hpp"
#include "lprox/schedule.hpp"

#include <string>
#include <vector>

namespace lprox {

struct BoundRecord {
  int t = 0;  // level of the later iterate
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  bool holds = true;   // slack >= -1e-9
};

struct BoundReport {
  std::string name;
  std::vector<BoundRecord> records;
  double G = 0.0;
  double ell = 0.0;
  double beta = 1.0;
  double L = 1.0;
  double beta_prime = 0.0;
  bool precondition_ok = true;  // gamma_t <= beta / (2 G^2) for every t
  std::string advisory;
  // Cumulative drift check (fidelity only).
  bool has_cumulative = false;
  double cumulative_lhs = 0.0;
  double cumulative_rhs = 0.0;
  bool cumulative_holds = true;

  int holding() const;
  double fraction_holding() const;  // 1 when there are no records
};

inline constexpr double kBoundSlackTolerance = 1e-9;

/// Checks dist^2(D(z'_t)) <= (1 - 2 beta' gamma_{t+1}) dist^2(D(z'_{t+1})) +
/// gamma_{t+1}^2 G^2 over consecutive pre-correction iterates of a trace.
/// G is the largest score norm in the trace unless `G_override` > 0.
BoundReport check_feasibility_contraction(const SampleTrace& trace, const ConstraintSpec& constraint,
                                          const DecoderMap& decoder, double beta, double G_override = 0.0);

/// Transitions given directly: dist[k] and gamma[k] listed from level T down
/// to level 1, dist[k] the pre-correction distance at that level.
BoundReport check_feasibility_contraction(const std::vector<int>& levels, const std::vector<double>& dist,
                                          const std::vector<double>& gamma, double G, double ell, double beta,
                                          double L);

/// Smallest number of levels after which the contraction guarantees
/// dist^2 <= eps: ceil(log(dist_T^2 / eps) / (2 beta' gamma_min)); 0 when
/// dist_T^2 <= eps.
int feasibility_level_bound(double dist_T, double eps, double beta_prime, double gamma_min);

/// kl[t] for t = 0..T; checks kl[t-1] <= kl[t] + gamma_t G^2 and the
/// cumulative kl[0] <= kl[T] + sum gamma_t G^2.
BoundReport check_fidelity_drift(const std::vector<double>& kl, const NoiseSchedule& schedule, double G);

struct GaussianFit {
  Vec mean;
  Mat cov;
  long count = 0;
};

/// Sample mean and unbiased covariance (one sample per column).
GaussianFit fit_gaussian(const Mat& samples);
GaussianFit fit_gaussian(const std::vector<Vec>& samples);

/// KL(a || b) in closed form.
double gaussian_kl(const GaussianFit& a, const GaussianFit& b);
/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
double frechet_distance(const GaussianFit& a, const GaussianFit& b);

/// Symmetric PSD square root by eigen-decomposition (negative eigenvalues
/// above -1e-10 relative clip to 0; below that a NumericError).
Mat psd_sqrt(const Mat& m);

}  // namespace lprox
