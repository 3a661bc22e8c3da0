#include "lprox/score.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace lprox {

std::string to_string(ScoreKind kind) {
  switch (kind) {
    case ScoreKind::gaussian_mixture: return "gaussian_mixture";
    case ScoreKind::linear_gaussian: return "linear_gaussian";
    case ScoreKind::mlp: return "mlp";
  }
  return "?";
}

ScoreKind score_kind_from_string(const std::string& name) {
  if (name == "gaussian_mixture") return ScoreKind::gaussian_mixture;
  if (name == "linear_gaussian") return ScoreKind::linear_gaussian;
  if (name == "mlp") return ScoreKind::mlp;
  throw ConfigError("unknown score kind '" + name + "'");
}

ScoreField ScoreField::gaussian_mixture(std::vector<GaussianComponent> components) {
  ScoreField f;
  f.kind_ = ScoreKind::gaussian_mixture;
  if (components.empty()) throw ParameterError("weights", "mixture needs at least one component");
  f.dim_ = static_cast<int>(components.front().mean.size());
  f.components_ = std::move(components);
  f.validate_components();
  return f;
}

ScoreField ScoreField::linear_gaussian(const Mat& factor, const Vec& offset) {
  if (factor.rows() != offset.size()) throw ShapeError("linear_gaussian: factor rows must match offset");
  ScoreField f;
  f.kind_ = ScoreKind::linear_gaussian;
  f.dim_ = static_cast<int>(offset.size());
  f.factor_ = factor;
  f.components_.push_back({1.0, offset, factor * factor.transpose()});
  f.validate_components();
  return f;
}

ScoreField ScoreField::mlp(MlpParams params) {
  ScoreField f;
  f.kind_ = ScoreKind::mlp;
  f.dim_ = params.dim();
  const auto d = params.w3.rows();
  if (params.w1.cols() != d + 1 || params.w2.cols() != params.w1.rows() ||
      params.w3.cols() != params.w2.rows() || params.b1.size() != params.w1.rows() ||
      params.b2.size() != params.w2.rows() || params.b3.size() != d)
    throw ShapeError("mlp score: inconsistent layer shapes");
  if (params.w1.rows() < 1 || params.w2.rows() < 1) throw ParameterError("hidden", "widths must be >= 1");
  f.mlp_ = std::move(params);
  return f;
}

void ScoreField::validate_components() const {
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.mean.size() != dim_ || c.cov.rows() != dim_ || c.cov.cols() != dim_)
      throw ShapeError("mixture component dimension mismatch");
    if (!(c.weight > 0.0)) throw ParameterError("weights", "mixture weights must be positive");
    if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, c.cov.cwiseAbs().maxCoeff()))
      throw ParameterError("covariances", "covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(c.cov, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      throw ParameterError("covariances", "covariance must be positive definite");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("weights", "mixture weights must sum to 1");
}

void ScoreField::bind_schedule(const NoiseSchedule& schedule) {
  abar_ = schedule.abar;
  caches_.clear();
  if (analytic())
    for (double a : abar_) caches_.push_back(make_cache(a));
}

double ScoreField::abar_at(int t) const {
  if (!bound()) throw ConfigError("score field is not bound to a schedule");
  if (t < 0 || t >= static_cast<int>(abar_.size()))
    throw IndexError("level " + std::to_string(t) + " outside the bound schedule");
  return abar_[static_cast<std::size_t>(t)];
}

ScoreField::LevelCache ScoreField::make_cache(double abar) const {
  LevelCache cache;
  const double s = std::sqrt(abar);
  const Mat eye = Mat::Identity(dim_, dim_);
  for (const auto& c : components_) {
    Mat cov = abar * c.cov + (1.0 - abar) * eye;
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericError("level covariance is not positive definite");
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < dim_; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    cache.means.push_back(s * c.mean);
    cache.chol.push_back(std::move(llt));
    cache.log_norm.push_back(std::log(c.weight) - 0.5 * (logdet + dim_ * std::log(2.0 * std::numbers::pi)));
  }
  return cache;
}

Vec ScoreField::mixture_score(const Vec& x, const LevelCache& cache) const {
  const std::size_t k = cache.means.size();
  std::vector<double> logp(k);
  std::vector<Vec> grads(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Vec diff = x - cache.means[i];
    const Vec sol = cache.chol[i].solve(diff);
    logp[i] = cache.log_norm[i] - 0.5 * diff.dot(sol);
    grads[i] = -sol;
  }
  if (k == 1) return grads[0];
  const double mx = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (double& l : logp) z += (l = std::exp(l - mx));
  Vec out = Vec::Zero(dim_);
  for (std::size_t i = 0; i < k; ++i) out += (logp[i] / z) * grads[i];
  return out;
}

double ScoreField::mixture_log_density(const Vec& x, const LevelCache& cache) const {
  const std::size_t k = cache.means.size();
  std::vector<double> logp(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Vec diff = x - cache.means[i];
    logp[i] = cache.log_norm[i] - 0.5 * diff.dot(cache.chol[i].solve(diff));
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  double z = 0.0;
  for (double l : logp) z += std::exp(l - mx);
  return mx + std::log(z);
}

double ScoreField::mlp_sigma(int t) const {
  // The network is only trained on levels 1..T; level 0 reuses the level-1
  // noise scale so the score stays finite.
  const int level = std::max(t, 1);
  const double a = level < static_cast<int>(abar_.size()) ? abar_[static_cast<std::size_t>(level)] : abar_.back();
  return std::sqrt(std::max(1.0 - a, 1e-12));
}

namespace {

inline double act(Activation a, double v) {
  return a == Activation::tanh ? std::tanh(v) : 1.0 / (1.0 + std::exp(-v));
}

// Derivative expressed through the activation value.
inline double act_grad_from_value(Activation a, double h) {
  return a == Activation::tanh ? 1.0 - h * h : h * (1.0 - h);
}

}  // namespace

Vec ScoreField::mlp_score(const Vec& x, double sigma) const {
  Vec u(dim_ + 1);
  u.head(dim_) = x;
  u[dim_] = sigma;
  Vec h1 = mlp_.w1 * u + mlp_.b1;
  for (auto& v : h1) v = act(mlp_.activation, v);
  Vec h2 = mlp_.w2 * h1 + mlp_.b2;
  for (auto& v : h2) v = act(mlp_.activation, v);
  return (mlp_.w3 * h2 + mlp_.b3) / sigma;
}

Vec ScoreField::score(const Vec& x, int t) const {
  require_dim(x, dim_, "score");
  if (kind_ == ScoreKind::mlp) {
    if (!bound()) throw ConfigError("score field is not bound to a schedule");
    if (t < 0 || t >= static_cast<int>(abar_.size())) throw IndexError("level outside the bound schedule");
    return mlp_score(x, mlp_sigma(t));
  }
  abar_at(t);
  return mixture_score(x, caches_[static_cast<std::size_t>(t)]);
}

double ScoreField::log_density(const Vec& x, int t) const {
  require_dim(x, dim_, "log_density");
  if (!analytic()) throw UnsupportedKindError("log-density is only available for analytic score fields");
  abar_at(t);
  return mixture_log_density(x, caches_[static_cast<std::size_t>(t)]);
}

Vec ScoreField::score_at_abar(const Vec& x, double abar) const {
  require_dim(x, dim_, "score");
  if (kind_ == ScoreKind::mlp) return mlp_score(x, std::sqrt(std::max(1.0 - abar, 1e-12)));
  return mixture_score(x, make_cache(abar));
}

double ScoreField::log_density_at_abar(const Vec& x, double abar) const {
  require_dim(x, dim_, "log_density");
  if (!analytic()) throw UnsupportedKindError("log-density is only available for analytic score fields");
  return mixture_log_density(x, make_cache(abar));
}

std::vector<GaussianComponent> ScoreField::level_components(int t) const {
  if (!analytic()) throw UnsupportedKindError("level moments are only available for analytic score fields");
  const double a = abar_at(t);
  std::vector<GaussianComponent> out;
  for (const auto& c : components_)
    out.push_back({c.weight, std::sqrt(a) * c.mean, a * c.cov + (1.0 - a) * Mat::Identity(dim_, dim_)});
  return out;
}

// ---------------------------------------------------------------------------
// Denoising score matching
// ---------------------------------------------------------------------------

double dsm_loss(const ScoreFn& model, const Mat& batch, const NoiseSchedule& schedule, Rng& rng,
                std::optional<int> fixed_t) {
  if (batch.cols() == 0) throw ParameterError("batch", "must be non-empty");
  if (schedule.T < 1) throw ParameterError("T", "score matching needs at least one noise level");
  if (fixed_t && (*fixed_t < 1 || *fixed_t > schedule.T)) throw IndexError("fixed level outside 1..T");
  std::uniform_int_distribution<int> pick(1, schedule.T);
  double total = 0.0;
  for (Eigen::Index j = 0; j < batch.cols(); ++j) {
    const int t = fixed_t ? *fixed_t : pick(rng.engine());
    const double a = schedule.abar[static_cast<std::size_t>(t)];
    const double sigma = std::sqrt(1.0 - a);
    const Vec eps = rng.normal_vec(batch.rows());
    const Vec xt = std::sqrt(a) * batch.col(j) + sigma * eps;
    const Vec target = -eps / sigma;
    total += (model(xt, t) - target).squaredNorm() / static_cast<double>(batch.rows());
  }
  return total / static_cast<double>(batch.cols());
}

double dsm_loss(const ScoreField& field, const Mat& batch, const NoiseSchedule& schedule, Rng& rng,
                std::optional<int> fixed_t) {
  if (batch.rows() != field.dim()) throw ShapeError("dsm_loss: batch dimension does not match the field");
  ScoreField bound = field;
  if (!bound.bound()) bound.bind_schedule(schedule);
  return dsm_loss([&](const Vec& x, int t) { return bound.score(x, t); }, batch, schedule, rng, fixed_t);
}

void MlpScoreConfig::validate() const {
  if (hidden1 < 1) throw ParameterError("hidden1", "must be >= 1");
  if (hidden2 < 1) throw ParameterError("hidden2", "must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate", "must be positive");
  if (epochs < 0) throw ParameterError("epochs", "must be >= 0");
  if (batch_size < 1) throw ParameterError("batch_size", "must be >= 1");
}

MlpParams init_mlp(int dim, const MlpScoreConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0x1417));
  auto glorot = [&](int rows, int cols) {
    const double scale = std::sqrt(2.0 / (rows + cols));
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
    return m;
  };
  MlpParams p;
  p.activation = cfg.activation;
  p.w1 = glorot(cfg.hidden1, dim + 1);
  p.b1 = Vec::Zero(cfg.hidden1);
  p.w2 = glorot(cfg.hidden2, cfg.hidden1);
  p.b2 = Vec::Zero(cfg.hidden2);
  p.w3 = glorot(dim, cfg.hidden2);
  p.b3 = Vec::Zero(dim);
  return p;
}

namespace {

struct Grads {
  Mat w1, w2, w3;
  Vec b1, b2, b3;

  explicit Grads(const MlpParams& p)
      : w1(Mat::Zero(p.w1.rows(), p.w1.cols())),
        w2(Mat::Zero(p.w2.rows(), p.w2.cols())),
        w3(Mat::Zero(p.w3.rows(), p.w3.cols())),
        b1(Vec::Zero(p.b1.size())),
        b2(Vec::Zero(p.b2.size())),
        b3(Vec::Zero(p.b3.size())) {}
};

// Loss (s - target)^2 / d for one noised sample; accumulates parameter grads.
double backprop_one(const MlpParams& p, const Vec& xt, double sigma, const Vec& target, Grads& g) {
  const auto d = xt.size();
  Vec u(d + 1);
  u.head(d) = xt;
  u[d] = sigma;
  Vec h1 = p.w1 * u + p.b1;
  for (auto& v : h1) v = act(p.activation, v);
  Vec h2 = p.w2 * h1 + p.b2;
  for (auto& v : h2) v = act(p.activation, v);
  const Vec s = (p.w3 * h2 + p.b3) / sigma;
  const Vec err = s - target;
  const double loss = err.squaredNorm() / static_cast<double>(d);

  const Vec d_o = (2.0 / static_cast<double>(d)) * err / sigma;
  g.w3.noalias() += d_o * h2.transpose();
  g.b3 += d_o;
  Vec d_h2 = p.w3.transpose() * d_o;
  for (Eigen::Index i = 0; i < d_h2.size(); ++i) d_h2[i] *= act_grad_from_value(p.activation, h2[i]);
  g.w2.noalias() += d_h2 * h1.transpose();
  g.b2 += d_h2;
  Vec d_h1 = p.w2.transpose() * d_h2;
  for (Eigen::Index i = 0; i < d_h1.size(); ++i) d_h1[i] *= act_grad_from_value(p.activation, h1[i]);
  g.w1.noalias() += d_h1 * u.transpose();
  g.b1 += d_h1;
  return loss;
}

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, double lr, double bc1, double bc2) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace

TrainResult train_score(const Mat& data, const MlpScoreConfig& cfg, const NoiseSchedule& schedule) {
  cfg.validate();
  if (data.cols() == 0) throw ParameterError("data", "must be non-empty");
  if (schedule.T < 1) throw ParameterError("T", "score matching needs at least one noise level");
  const int dim = static_cast<int>(data.rows());
  MlpParams p = init_mlp(dim, cfg);

  Grads m(p), v(p);
  Rng rng(derive_seed(cfg.seed, 0x7a11));
  std::uniform_int_distribution<int> pick(1, schedule.T);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.cols()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainResult result;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      Grads g(p);
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const int t = pick(rng.engine());
        const double a = schedule.abar[static_cast<std::size_t>(t)];
        const double sigma = std::sqrt(1.0 - a);
        const Vec eps = rng.normal_vec(dim);
        const Vec xt = std::sqrt(a) * data.col(order[k]) + sigma * eps;
        batch_loss += backprop_one(p, xt, sigma, -eps / sigma, g);
      }
      const double n = static_cast<double>(end - start);
      batch_loss /= n;
      if (!std::isfinite(batch_loss))
        throw DivergenceError("score training produced a non-finite loss at epoch " + std::to_string(epoch + 1),
                              epoch + 1);
      ++step;
      const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step));
      const double lr = cfg.learning_rate;
      Mat gw1 = g.w1 / n, gw2 = g.w2 / n, gw3 = g.w3 / n;
      Vec gb1 = g.b1 / n, gb2 = g.b2 / n, gb3 = g.b3 / n;
      adam_update(p.w1, gw1, m.w1, v.w1, lr, bc1, bc2);
      adam_update(p.w2, gw2, m.w2, v.w2, lr, bc1, bc2);
      adam_update(p.w3, gw3, m.w3, v.w3, lr, bc1, bc2);
      adam_update(p.b1, gb1, m.b1, v.b1, lr, bc1, bc2);
      adam_update(p.b2, gb2, m.b2, v.b2, lr, bc1, bc2);
      adam_update(p.b3, gb3, m.b3, v.b3, lr, bc1, bc2);
      epoch_total += batch_loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_total / batches);
  }
  result.field = ScoreField::mlp(std::move(p));
  result.field.bind_schedule(schedule);
  return result;
}

}  // namespace lprox
