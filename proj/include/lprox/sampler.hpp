#pragma once

#include "lprox/alm.hpp"
#include "lprox/constraints.hpp"
#include "lprox/decoder.hpp"
#include "lprox/dpo.hpp"
#include "lprox/schedule.hpp"
#include "lprox/score.hpp"

#include <memory>
#include <optional>
#include <string>

namespace lprox {

enum class SamplerMode { unconstrained, projected_ambient, proximal_latent };
enum class InnerSolver { closed_form, alm, dpo };
enum class RecordMode { full, levels, final_only };
enum class Phase { langevin, correction };

std::string to_string(SamplerMode mode);
std::string to_string(InnerSolver solver);
std::string to_string(RecordMode mode);
std::string to_string(Phase phase);
SamplerMode sampler_mode_from_string(const std::string& name);
InnerSolver inner_solver_from_string(const std::string& name);
RecordMode record_mode_from_string(const std::string& name);

/// Simulator-driven correction: minimizes the tracking loss of phi(D(z))
/// against cfg.target; the correction stops once the tracking MSE is below
/// the tolerance.
struct DpoCorrection {
  std::shared_ptr<const Simulator> simulator;
  DpoConfig config;
  double tolerance = 1e-3;
  double lambda = 1.0;  // weight of the (1/lambda)|x - anchor|^2 / 2 pull
};

struct SamplerConfig {
  NoiseSchedule schedule;
  std::shared_ptr<const ScoreField> score;  // must be bound to `schedule`
  std::optional<DecoderMap> decoder;        // absent: identity on the score space
  std::optional<ConstraintSpec> constraint;
  SamplerMode mode = SamplerMode::unconstrained;
  InnerSolver solver = InnerSolver::closed_form;
  /// Correction step; defaults to 0.5 / ell^2 with ell the decoder bound.
  std::optional<double> lr;
  int inner_cap = 500;
  bool final_projection = true;
  /// Correct after every Langevin step instead of once per level.
  bool correct_every_step = false;
  AlmState alm;
  std::optional<DpoCorrection> dpo;
  RecordMode record = RecordMode::full;
  /// Zero the Langevin noise (testing the drift alone).
  bool drift_only = false;
  std::uint64_t seed = 0;

  void validate() const;
  int latent_dim() const;
  double resolved_lr() const;
};

struct TraceRow {
  int level = 0;  // annealing level t (T..1)
  int step = 0;   // Langevin step within the level, or correction iteration
  Phase phase = Phase::langevin;
  Vec z;
  Vec x;
  double violation = 0.0;
  double distance = 0.0;
  double gamma = 0.0;
  int iterations = 0;       // correction iterations used so far in this level
  double score_norm = 0.0;  // |s(z, t-1)| at the Langevin step
  bool level_end = false;   // last row of this level
};

/// Per-level summary (always recorded, independent of RecordMode).
struct LevelRecord {
  int level = 0;
  double gamma = 0.0;
  Vec pre_latent;          // z'_t after the Langevin steps, before correction
  double pre_distance = 0.0;
  Vec post_latent;         // after correction
  double post_distance = 0.0;
  int corrections = 0;
  double max_score_norm = 0.0;
  bool shortfall = false;  // correction hit the cap while still infeasible
};

struct SampleTrace {
  std::uint64_t root_seed = 0;
  std::uint64_t chain_index = 0;
  std::uint64_t chain_seed = 0;
  Vec initial_latent;
  double initial_distance = 0.0;
  std::vector<TraceRow> rows;
  std::vector<LevelRecord> levels;  // in sampling order, level T first
  Vec final_latent;
  Vec final_ambient;  // after the optional final projection
  double final_violation = 0.0;
  bool final_projected = false;
  int shortfalls = 0;
  double max_score_norm = 0.0;
  long langevin_steps = 0;
  long correction_steps = 0;
};

/// z + gamma s(z, t) + sqrt(2 gamma) eps.
Vec langevin_step(const Vec& z, const ScoreField& score, int t, double gamma, Rng& rng, bool drift_only = false);

SampleTrace sample_unconstrained(const SamplerConfig& cfg, Rng& rng);
SampleTrace sample_projected_ambient(const SamplerConfig& cfg, Rng& rng);
SampleTrace sample_proximal_latent(const SamplerConfig& cfg, Rng& rng);
/// Dispatches on cfg.mode.
SampleTrace sample(const SamplerConfig& cfg, Rng& rng);
/// Seeds a chain from derive_seed(cfg.seed, chain) and records the lineage.
SampleTrace sample_chain(const SamplerConfig& cfg, std::uint64_t chain);

/// Project D(z0) with the constraint's exact projection.
Vec finalize_with_projection(const Vec& z0, const DecoderMap& decoder, const ConstraintSpec& constraint);

}  // namespace lprox
