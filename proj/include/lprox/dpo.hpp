#pragma once

#include "lprox/common.hpp"
#include "lprox/decoder.hpp"

#include <functional>
#include <memory>
#include <mutex>
#include <string>

namespace lprox {

/// Opaque response map phi: ambient -> response. Deterministic; may be
/// non-differentiable.
struct Simulator {
  std::string name;
  int input_dim = 0;  // 0 accepts any dimension
  int response_dim = 0;
  double cost_hint = 1.0;  // relative cost of one evaluation
  bool thread_safe = true;
  std::function<Vec(const Vec&)> fn;

  Vec evaluate(const Vec& x) const;
};

/// phi(x) = A x.
Simulator linear_simulator(const Mat& a);
/// phi(x) = scale * tanh(A x / scale), elementwise.
Simulator saturating_simulator(const Mat& a, double scale);
/// phi_i = u_i for u_i >= 0, slope * u_i otherwise, u = A x (kinked at 0).
Simulator piecewise_simulator(const Mat& a, double slope = 0.25);
/// phi(x) = |x|^2 (scalar response).
Simulator quadratic_simulator(int dim);
/// Constant response c.
Simulator constant_simulator(const Vec& c, int input_dim = 0);
/// Spawns `argv` once and exchanges one line of space-separated decimals per
/// evaluation over its stdin/stdout. Calls are serialized.
Simulator process_simulator(const std::vector<std::string>& argv, int input_dim, int response_dim);

enum class DpoGradMode { chain_rule, literal };

std::string to_string(DpoGradMode mode);
DpoGradMode dpo_grad_mode_from_string(const std::string& name);

struct DpoConfig {
  double nu = 0.1;
  int samples = 10;  // M
  std::uint64_t seed = 0;
  Vec target;
  /// Fold the 1/nu factor of the gradient estimator into the step size.
  bool absorb_nu = false;
  bool baseline = true;
  DpoGradMode mode = DpoGradMode::chain_rule;

  void validate() const;
};

/// (1/M) sum_m phi(x + nu eps_m).
Vec smoothed_value(const Simulator& sim, const Vec& x, const DpoConfig& cfg);
/// (1/(M nu)) sum_m (phi(x + nu eps_m) - phi(x)) eps_m^T, response_dim x dim.
/// Without the baseline the phi(x) term is dropped; with absorb_nu the 1/nu is.
Mat smoothed_grad(const Simulator& sim, const Vec& x, const DpoConfig& cfg);

struct SmoothedEstimate {
  Vec value;
  Mat jacobian;
};
/// Both estimates from a single set of M perturbations.
SmoothedEstimate smoothed_estimate(const Simulator& sim, const Vec& x, const DpoConfig& cfg);

/// chain_rule: J^T (phi_bar - target); literal: phi_bar - target (requires
/// response_dim == dim).
Vec dpo_loss_grad(const Simulator& sim, const Vec& x, const DpoConfig& cfg);

/// Mean squared tracking error of phi(x) against the target.
double tracking_mse(const Simulator& sim, const Vec& x, const Vec& target);

struct DesignResult {
  Vec z;
  std::vector<double> mse;  // mse[k] after k steps (mse[0] at the input)
  int steps_taken = 0;
};

/// z <- z - step_size * vjp(D, z, dpo_loss_grad(D(z))) for `steps` steps or
/// until the tracking MSE drops below `tolerance`. Step k uses the
/// perturbation stream derive_seed(cfg.seed, k).
DesignResult design_loop(const Vec& z0, const DecoderMap& decoder, const Simulator& sim, const DpoConfig& cfg,
                         int steps, double step_size, double tolerance = 0.0);

}  // namespace lprox
