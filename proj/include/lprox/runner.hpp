#pragma once

#include "lprox/config.hpp"
#include "lprox/diagnostics.hpp"

#include <string>
#include <vector>

namespace lprox {

inline constexpr const char* kVersion = "lprox 0.1.0";

enum ExitCode { kExitOk = 0, kExitAcceptance = 2, kExitConfig = 3, kExitDivergence = 4 };

struct ChainResult {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  bool diverged = false;
  SampleTrace trace;
};

struct RunOutcome {
  Json manifest;
  std::string output_dir;
  bool checks_passed = true;
  bool diverged = false;
  int exit_code = kExitOk;
  std::vector<ChainResult> chains;  // sampling experiments only
};

/// Runs `n` chains of the sampler on a pool of `threads` workers. Chain k is
/// seeded with derive_seed(cfg.seed, k); results come back in chain order.
std::vector<ChainResult> run_chains(const SamplerConfig& cfg, int n, int threads);

inline constexpr const char* kMetricsHeader =
    "chain,row,level,step,phase,gamma,violation,distance,score_norm,iterations,latent";

/// Metrics rows of one chain (no header), %.17g formatting.
std::string format_metrics(const SampleTrace& trace, std::uint64_t chain);

/// Executes a sampling, design or training experiment and writes metrics,
/// samples, diagnostics and the manifest under cfg.output.
RunOutcome run_experiment(const RunConfig& cfg);

/// Binary PGM; v in [-1, 1] maps to floor((v + 1) / 2 * 255 + 0.5).
void render_grid(const ImageGrid& grid, const std::string& path);
unsigned char grid_byte(double v);

/// Draws `n` samples (columns) from an analytic score field's base density.
Mat sample_analytic(const ScoreField& field, int n, Rng& rng);

std::string format_vector(const Vec& v, char sep = ' ');

}  // namespace lprox
