#include "lprox/diagnostics.hpp"

#include <cmath>
#include <sstream>

namespace lprox {

int BoundReport::holding() const {
  int n = 0;
  for (const auto& r : records) n += r.holds ? 1 : 0;
  return n;
}

double BoundReport::fraction_holding() const {
  return records.empty() ? 1.0 : static_cast<double>(holding()) / static_cast<double>(records.size());
}

BoundReport check_feasibility_contraction(const std::vector<int>& levels, const std::vector<double>& dist,
                                          const std::vector<double>& gamma, double G, double ell, double beta,
                                          double L) {
  if (dist.size() != gamma.size() || levels.size() != dist.size())
    throw ParameterError("dist", "levels, distances and step sizes must have equal length");
  if (!(ell > 0.0)) throw ParameterError("ell", "must be positive");
  if (!(beta > 0.0)) throw ParameterError("beta", "must be positive");
  if (!(L > 0.0)) throw ParameterError("L", "must be positive");
  BoundReport rep;
  rep.name = "feasibility_contraction";
  rep.G = G;
  rep.ell = ell;
  rep.beta = beta;
  rep.L = L;
  rep.beta_prime = beta / (ell * L);
  const double limit = G > 0.0 ? beta / (2.0 * G * G) : INFINITY;
  std::ostringstream adv;
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    if (gamma[k] > limit) {
      rep.precondition_ok = false;
      adv << "gamma at level " << levels[k] << " = " << gamma[k] << " exceeds beta/(2 G^2) = " << limit << "; ";
    }
  }
  rep.advisory = adv.str();
  // k is the earlier (higher) level t+1, k+1 the later level t.
  for (std::size_t k = 0; k + 1 < dist.size(); ++k) {
    BoundRecord r;
    r.t = levels[k + 1];
    const double g = gamma[k];
    r.lhs = dist[k + 1] * dist[k + 1];
    r.rhs = (1.0 - 2.0 * rep.beta_prime * g) * dist[k] * dist[k] + g * g * G * G;
    r.slack = r.rhs - r.lhs;
    r.holds = r.slack >= -kBoundSlackTolerance;
    rep.records.push_back(r);
  }
  return rep;
}

BoundReport check_feasibility_contraction(const SampleTrace& trace, const ConstraintSpec& constraint,
                                          const DecoderMap& decoder, double beta, double G_override) {
  std::vector<int> levels;
  std::vector<double> dist, gamma;
  double G = 0.0;
  for (const auto& lv : trace.levels) {
    levels.push_back(lv.level);
    dist.push_back(distance(constraint, decoder.decode(lv.pre_latent)));
    gamma.push_back(lv.gamma);
    G = std::max(G, lv.max_score_norm);
  }
  if (G_override > 0.0) G = G_override;
  const double ell = decoder.lipschitz_bound() ? *decoder.lipschitz_bound()
                                               : Eigen::JacobiSVD<Mat>(decoder.jacobian(trace.final_latent))
                                                     .singularValues()(0);
  return check_feasibility_contraction(levels, dist, gamma, G, ell, beta, constraint.smoothness);
}

int feasibility_level_bound(double dist_T, double eps, double beta_prime, double gamma_min) {
  if (!(eps > 0.0)) throw ParameterError("eps", "must be positive");
  if (!(beta_prime > 0.0) || !(gamma_min > 0.0)) throw ParameterError("gamma_min", "rate must be positive");
  const double ratio = dist_T * dist_T / eps;
  if (ratio <= 1.0) return 0;
  return static_cast<int>(std::ceil(std::log(ratio) / (2.0 * beta_prime * gamma_min)));
}

BoundReport check_fidelity_drift(const std::vector<double>& kl, const NoiseSchedule& schedule, double G) {
  if (static_cast<int>(kl.size()) != schedule.T + 1)
    throw ParameterError("kl_series", "length must equal T + 1");
  BoundReport rep;
  rep.name = "fidelity_drift";
  rep.G = G;
  double budget = 0.0;
  for (int t = schedule.T; t >= 1; --t) {
    const double allowance = schedule.step_size(t) * G * G;
    budget += allowance;
    BoundRecord r;
    r.t = t;
    r.lhs = kl[static_cast<std::size_t>(t - 1)];
    r.rhs = kl[static_cast<std::size_t>(t)] + allowance;
    r.slack = r.rhs - r.lhs;
    r.holds = r.slack >= -kBoundSlackTolerance;
    rep.records.push_back(r);
  }
  rep.has_cumulative = true;
  rep.cumulative_lhs = kl.front();
  rep.cumulative_rhs = kl.back() + budget;
  rep.cumulative_holds = rep.cumulative_rhs - rep.cumulative_lhs >= -kBoundSlackTolerance;
  return rep;
}

GaussianFit fit_gaussian(const Mat& samples) {
  if (samples.cols() < 2) throw ParameterError("samples", "need at least two samples");
  GaussianFit f;
  f.count = samples.cols();
  f.mean = samples.rowwise().mean();
  const Mat c = samples.colwise() - f.mean;
  Mat cov = c * c.transpose() / static_cast<double>(samples.cols() - 1);
  cov = 0.5 * (cov + cov.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> es(cov);
  if (es.eigenvalues().minCoeff() < 0.0) {
    const Vec lam = es.eigenvalues().cwiseMax(0.0);
    cov = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
  }
  f.cov = cov;
  return f;
}

GaussianFit fit_gaussian(const std::vector<Vec>& samples) {
  if (samples.size() < 2) throw ParameterError("samples", "need at least two samples");
  Mat m(samples.front().size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    require_dim(samples[i], m.rows(), "fit_gaussian");
    m.col(static_cast<Eigen::Index>(i)) = samples[i];
  }
  return fit_gaussian(m);
}

double gaussian_kl(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size()) throw ShapeError("gaussian_kl: dimension mismatch");
  const auto d = a.mean.size();
  Eigen::SelfAdjointEigenSolver<Mat> eb(b.cov);
  if (eb.eigenvalues().minCoeff() < 1e-10) throw DegeneracyError("gaussian_kl: reference covariance is singular");
  Eigen::SelfAdjointEigenSolver<Mat> ea(a.cov);
  if (ea.eigenvalues().minCoeff() < 1e-10) throw DegeneracyError("gaussian_kl: covariance is singular");
  const Eigen::LLT<Mat> lb(b.cov);
  const Vec dm = b.mean - a.mean;
  const double trace_term = lb.solve(a.cov).trace();
  const double maha = dm.dot(lb.solve(dm));
  const double logdet_a = ea.eigenvalues().array().log().sum();
  const double logdet_b = eb.eigenvalues().array().log().sum();
  const double kl = 0.5 * (trace_term + maha - static_cast<double>(d) + logdet_b - logdet_a);
  return std::max(kl, 0.0);
}

Mat psd_sqrt(const Mat& m) {
  const Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const double lo = es.eigenvalues().minCoeff();
  if (lo < -1e-10 * scale) {
    std::ostringstream os;
    os << "psd_sqrt: matrix is indefinite (smallest eigenvalue " << lo << ", largest "
       << es.eigenvalues().maxCoeff() << ")";
    throw NumericError(os.str());
  }
  const Vec root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
  if (a.mean.size() != b.mean.size()) throw ShapeError("frechet_distance: dimension mismatch");
  const Mat ra = psd_sqrt(a.cov);
  const Mat cross = psd_sqrt(ra * b.cov * ra);
  const double fd = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return std::max(fd, 0.0);
}

}  // namespace lprox
