#pragma once

#include "lprox/common.hpp"
#include "lprox/schedule.hpp"

#include <functional>
#include <optional>
#include <string>

namespace lprox {

enum class ScoreKind { gaussian_mixture, linear_gaussian, mlp };

std::string to_string(ScoreKind kind);
ScoreKind score_kind_from_string(const std::string& name);

struct GaussianComponent {
  double weight = 1.0;
  Vec mean;
  Mat cov;
};

enum class Activation { tanh, sigmoid };

/// Two-hidden-layer network. Input is [x; sigma_t], output o, score o / sigma_t.
struct MlpParams {
  Activation activation = Activation::tanh;
  Mat w1, w2, w3;
  Vec b1, b2, b3;

  int dim() const { return static_cast<int>(w3.rows()); }
};

/// Source of s(x, t) ~ grad log q_t(x).
///
/// Analytic kinds evaluate the data mixture convolved with the forward noise
/// at level t in closed form: component means scale by sqrt(abar_t) and
/// covariances become abar_t * Sigma + (1 - abar_t) * I. A field must be bound
/// to a schedule before level-indexed evaluation.
class ScoreField {
 public:
  static ScoreField gaussian_mixture(std::vector<GaussianComponent> components);
  /// Single Gaussian N(offset, factor * factor^T).
  static ScoreField linear_gaussian(const Mat& factor, const Vec& offset);
  static ScoreField mlp(MlpParams params);

  ScoreKind kind() const { return kind_; }
  int dim() const { return dim_; }
  bool analytic() const { return kind_ != ScoreKind::mlp; }

  void bind_schedule(const NoiseSchedule& schedule);
  bool bound() const { return !abar_.empty(); }
  const std::vector<double>& abar() const { return abar_; }
  double abar_at(int t) const;

  Vec score(const Vec& x, int t) const;
  /// Closed-form log-density of the level-t marginal (analytic kinds only).
  double log_density(const Vec& x, int t) const;

  /// Score at an arbitrary signal fraction, bypassing the bound schedule.
  Vec score_at_abar(const Vec& x, double abar) const;
  double log_density_at_abar(const Vec& x, double abar) const;

  /// Base (t = 0) components; for linear_gaussian a single component.
  const std::vector<GaussianComponent>& components() const { return components_; }
  const Mat& linear_factor() const { return factor_; }
  const MlpParams& mlp_params() const { return mlp_; }

  /// Mixture moments of the level-t marginal as a list of components.
  std::vector<GaussianComponent> level_components(int t) const;

 private:
  struct LevelCache {
    std::vector<Vec> means;
    std::vector<Eigen::LLT<Mat>> chol;
    std::vector<double> log_norm;  // log weight - 0.5 log det(2 pi C)
  };

  void validate_components() const;
  LevelCache make_cache(double abar) const;
  Vec mixture_score(const Vec& x, const LevelCache& cache) const;
  double mixture_log_density(const Vec& x, const LevelCache& cache) const;
  Vec mlp_score(const Vec& x, double sigma) const;
  double mlp_sigma(int t) const;

  ScoreKind kind_ = ScoreKind::gaussian_mixture;
  int dim_ = 0;
  std::vector<GaussianComponent> components_;
  Mat factor_;
  MlpParams mlp_;
  std::vector<double> abar_;
  std::vector<LevelCache> caches_;
};

using ScoreFn = std::function<Vec(const Vec& x, int t)>;

/// Denoising score-matching loss: mean over samples (columns of `batch`) and
/// coordinates of (s(x_t, t) + eps / sqrt(1 - abar_t))^2, with t uniform on
/// 1..T unless `fixed_t` is given.
double dsm_loss(const ScoreFn& model, const Mat& batch, const NoiseSchedule& schedule, Rng& rng,
                std::optional<int> fixed_t = std::nullopt);
double dsm_loss(const ScoreField& field, const Mat& batch, const NoiseSchedule& schedule, Rng& rng,
                std::optional<int> fixed_t = std::nullopt);

struct MlpScoreConfig {
  int hidden1 = 32;
  int hidden2 = 32;
  Activation activation = Activation::tanh;
  double learning_rate = 1e-2;
  int epochs = 200;
  int batch_size = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  ScoreField field;
  std::vector<double> epoch_loss;
};

/// Randomly initialized network (deterministic in cfg.seed).
MlpParams init_mlp(int dim, const MlpScoreConfig& cfg);

/// Minibatch Adam on the denoising score-matching objective with manual
/// backpropagation. `data` holds one sample per column.
TrainResult train_score(const Mat& data, const MlpScoreConfig& cfg, const NoiseSchedule& schedule);

}  // namespace lprox
