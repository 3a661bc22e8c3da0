#include "lprox/constraints.hpp"

#include "lprox/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lprox {

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::halfspace: return "halfspace";
    case ConstraintKind::l2_ball: return "l2_ball";
    case ConstraintKind::box: return "box";
    case ConstraintKind::porosity: return "porosity";
    case ConstraintKind::surrogate_centroid: return "surrogate_centroid";
    case ConstraintKind::custom_g: return "custom_g";
  }
  return "?";
}

ConstraintKind constraint_kind_from_string(const std::string& name) {
  for (auto k : {ConstraintKind::halfspace, ConstraintKind::l2_ball, ConstraintKind::box, ConstraintKind::porosity,
                 ConstraintKind::surrogate_centroid, ConstraintKind::custom_g})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown constraint kind '" + name + "'");
}

// ---------------------------------------------------------------------------
// Violation functions
// ---------------------------------------------------------------------------

SmoothViolation hyperplane_violation(const Vec& a, double b) {
  return {"hyperplane", [a, b](const Vec& y) { return std::abs(a.dot(y) - b); },
          [a, b](const Vec& y) -> Vec {
            const double h = a.dot(y) - b;
            return h > 0.0 ? Vec(a) : h < 0.0 ? Vec(-a) : Vec(Vec::Zero(a.size()));
          }};
}

SmoothViolation ball_violation(const Vec& center, double radius) {
  return {"ball", [center, radius](const Vec& y) { return std::max((y - center).norm() - radius, 0.0); },
          [center, radius](const Vec& y) -> Vec {
            const Vec d = y - center;
            const double n = d.norm();
            return n > radius ? Vec(d / n) : Vec(Vec::Zero(y.size()));
          }};
}

SmoothViolation halfspace_violation(const Vec& a, double b) {
  return {"halfspace", [a, b](const Vec& y) { return std::max(a.dot(y) - b, 0.0); },
          [a, b](const Vec& y) -> Vec { return a.dot(y) > b ? Vec(a) : Vec(Vec::Zero(a.size())); }};
}

SmoothViolation quadratic_violation(int dim) {
  return {"quadratic", [](const Vec& y) { return 0.5 * y.squaredNorm(); },
          [dim](const Vec& y) -> Vec {
            require_dim(y, dim, "quadratic violation");
            return y;
          }};
}

SmoothViolation zero_violation() {
  return {"zero", [](const Vec&) { return 0.0; }, [](const Vec& y) -> Vec { return Vec::Zero(y.size()); }};
}

// ---------------------------------------------------------------------------
// Grids
// ---------------------------------------------------------------------------

ImageGrid::ImageGrid(int rows, int cols, Vec values) : rows(rows), cols(cols), values(std::move(values)) {
  if (rows < 1 || cols < 1) throw ParameterError("rows", "grid must be non-empty");
  if (this->values.size() != static_cast<Eigen::Index>(rows) * cols) throw ShapeError("grid size mismatch");
}

ImageGrid ImageGrid::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty() || rows.front().empty()) throw ParameterError("rows", "grid must be non-empty");
  const int r = static_cast<int>(rows.size()), c = static_cast<int>(rows.front().size());
  Vec v(r * c);
  for (int i = 0; i < r; ++i) {
    if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != c) throw ShapeError("ragged grid rows");
    for (int j = 0; j < c; ++j) v[i * c + j] = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return {r, c, v};
}

int porosity(const Vec& pixels) {
  int n = 0;
  for (double v : pixels) n += v < 0.0 ? 1 : 0;
  return n;
}

int porosity(const ImageGrid& grid) { return porosity(grid.values); }

int porosity_target_from_fraction(double fraction, int pixels) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ParameterError("porosity", "fraction must lie in [0, 1]");
  return static_cast<int>(std::floor(fraction * pixels + 0.5));
}

Vec project_porosity(const Vec& pixels, int target, double margin) {
  const int n = static_cast<int>(pixels.size());
  if (target < 0 || target > n) throw ParameterError("porosity_target", "must lie in 0..pixels");
  if (!(margin > 0.0 && margin <= 0.01)) throw ParameterError("margin", "must lie in (0, 0.01]");
  if (!pixels.allFinite()) throw NumericError("project_porosity: non-finite pixel");
  Vec y = pixels.cwiseMax(-1.0).cwiseMin(1.0);
  std::vector<int> neg, nonneg;
  for (int i = 0; i < n; ++i) (y[i] < 0.0 ? neg : nonneg).push_back(i);
  const int count = static_cast<int>(neg.size());
  if (count < target) {
    // Cheapest to flip: smallest non-negative values.
    std::stable_sort(nonneg.begin(), nonneg.end(), [&](int a, int b) { return y[a] < y[b]; });
    for (int k = 0; k < target - count; ++k) y[nonneg[static_cast<std::size_t>(k)]] = -margin;
  } else if (count > target) {
    // Cheapest to lift: negatives closest to zero.
    std::stable_sort(neg.begin(), neg.end(), [&](int a, int b) { return y[a] > y[b]; });
    for (int k = 0; k < count - target; ++k) y[neg[static_cast<std::size_t>(k)]] = 0.0;
  }
  return y;
}

ImageGrid project_porosity(const ImageGrid& grid, int target, double margin) {
  return {grid.rows, grid.cols, project_porosity(grid.values, target, margin)};
}

// ---------------------------------------------------------------------------
// Centroid surrogate
// ---------------------------------------------------------------------------

Eigen::Vector2d CentroidModel::pc_coords(const Vec& x) const {
  const Vec f = feature_map.size() == 0 ? x : Vec(feature_map * x);
  return axes.transpose() * (f - feature_mean);
}

CentroidModel fit_centroid_model(const Mat& target_features, const Mat& forbidden_features, double trigger,
                                 std::uint64_t seed) {
  if (target_features.cols() < 2 || forbidden_features.cols() < 2)
    throw ParameterError("features", "need at least two samples per class");
  if (target_features.rows() != forbidden_features.rows()) throw ShapeError("feature dimensions differ");
  if (target_features.rows() < 2) throw ParameterError("features", "feature dimension must be >= 2");
  if (!(trigger > 0.0 && trigger < 1.0)) throw ParameterError("trigger", "must lie in (0, 1)");
  const auto d = target_features.rows();
  const auto n = target_features.cols() + forbidden_features.cols();
  Mat all(d, n);
  all << target_features, forbidden_features;
  const Vec mean = all.rowwise().mean();
  const Mat centered = all.colwise() - mean;
  const Mat cov = centered * centered.transpose() / static_cast<double>(n - 1);

  Rng rng(derive_seed(seed, 0xce47));
  if (cov.norm() < 1e-12) throw DegeneracyError("pooled feature covariance is zero");
  const auto pairs = top_eigenpairs(cov, 2, rng, 1e-10);
  if (pairs[0].eigenvalue < 1e-12) throw DegeneracyError("top principal variance below 1e-12");

  CentroidModel m;
  m.feature_mean = mean;
  m.axes.resize(d, 2);
  for (int k = 0; k < 2; ++k) {
    Vec axis = pairs[static_cast<std::size_t>(k)].vector;
    Eigen::Index imax = 0;
    axis.cwiseAbs().maxCoeff(&imax);
    if (axis[imax] < 0.0) axis = -axis;
    m.axes.col(k) = axis;
  }
  m.target_centroid = m.axes.transpose() * (target_features.rowwise().mean() - mean);
  m.forbidden_centroid = m.axes.transpose() * (forbidden_features.rowwise().mean() - mean);
  if ((m.target_centroid - m.forbidden_centroid).norm() == 0.0)
    throw DegeneracyError("class centroids coincide in principal coordinates");
  m.trigger = trigger;
  return m;
}

bool centroid_trigger(const CentroidModel& model, const Vec& x) {
  const Eigen::Vector2d p = model.pc_coords(x);
  return (p - model.forbidden_centroid).norm() < model.trigger * model.centroid_gap();
}

// ---------------------------------------------------------------------------
// ConstraintSpec
// ---------------------------------------------------------------------------

ConstraintSpec ConstraintSpec::halfspace(const Vec& a, double b) {
  ConstraintSpec s;
  s.kind = ConstraintKind::halfspace;
  s.normal = a;
  s.offset = b;
  s.validate();
  return s;
}

ConstraintSpec ConstraintSpec::l2_ball(const Vec& center, double radius) {
  ConstraintSpec s;
  s.kind = ConstraintKind::l2_ball;
  s.center = center;
  s.radius = radius;
  s.validate();
  return s;
}

ConstraintSpec ConstraintSpec::box(const Vec& lower, const Vec& upper) {
  ConstraintSpec s;
  s.kind = ConstraintKind::box;
  s.lower = lower;
  s.upper = upper;
  s.validate();
  return s;
}

ConstraintSpec ConstraintSpec::vacuous(int dim) {
  return box(Vec::Constant(dim, -1e9), Vec::Constant(dim, 1e9));
}

ConstraintSpec ConstraintSpec::porosity_grid(int rows, int cols, int target, double margin) {
  ConstraintSpec s;
  s.kind = ConstraintKind::porosity;
  s.rows = rows;
  s.cols = cols;
  s.porosity_target = target;
  s.margin = margin;
  // The count gap is integer valued: anything below one pixel is exact.
  s.tolerance = 0.5;
  s.validate();
  return s;
}

ConstraintSpec ConstraintSpec::surrogate(std::shared_ptr<const CentroidModel> model, double acceptance_radius) {
  ConstraintSpec s;
  s.kind = ConstraintKind::surrogate_centroid;
  s.centroid = std::move(model);
  s.acceptance_radius = acceptance_radius;
  s.tolerance = 1e-3;
  s.validate();
  return s;
}

ConstraintSpec ConstraintSpec::custom_g(SmoothViolation g) {
  ConstraintSpec s;
  s.kind = ConstraintKind::custom_g;
  s.custom = std::move(g);
  s.validate();
  return s;
}

bool ConstraintSpec::has_closed_form() const {
  return kind == ConstraintKind::halfspace || kind == ConstraintKind::l2_ball || kind == ConstraintKind::box;
}

bool ConstraintSpec::has_exact_projection() const { return has_closed_form() || kind == ConstraintKind::porosity; }

bool ConstraintSpec::convex() const { return has_closed_form(); }

int ConstraintSpec::dim() const {
  switch (kind) {
    case ConstraintKind::halfspace: return static_cast<int>(normal.size());
    case ConstraintKind::l2_ball: return static_cast<int>(center.size());
    case ConstraintKind::box: return static_cast<int>(lower.size());
    case ConstraintKind::porosity: return rows * cols;
    case ConstraintKind::surrogate_centroid:
      return centroid && centroid->feature_map.size() ? static_cast<int>(centroid->feature_map.cols()) : 0;
    case ConstraintKind::custom_g: return 0;
  }
  return 0;
}

void ConstraintSpec::validate() const {
  if (!(tolerance > 0.0)) throw ParameterError("tolerance", "must be positive");
  if (!(prox_weight > 0.0)) throw ParameterError("prox_weight", "must be positive");
  switch (kind) {
    case ConstraintKind::halfspace:
      if (normal.size() == 0 || normal.norm() == 0.0) throw ParameterError("normal", "must be a non-zero vector");
      break;
    case ConstraintKind::l2_ball:
      if (center.size() == 0) throw ParameterError("center", "must be non-empty");
      if (!(radius >= 0.0)) throw ParameterError("radius", "must be non-negative");
      break;
    case ConstraintKind::box:
      if (lower.size() == 0 || lower.size() != upper.size()) throw ParameterError("lower", "bounds must match in size");
      if ((upper - lower).minCoeff() < 0.0) throw ParameterError("upper", "must be >= lower");
      break;
    case ConstraintKind::porosity:
      if (rows < 1 || cols < 1) throw ParameterError("rows", "grid must be non-empty");
      if (porosity_target < 0 || porosity_target > rows * cols)
        throw ParameterError("porosity_target", "must lie in 0..rows*cols");
      if (!(margin > 0.0 && margin <= 0.01)) throw ParameterError("margin", "must lie in (0, 0.01]");
      break;
    case ConstraintKind::surrogate_centroid:
      if (!centroid) throw ParameterError("centroid", "surrogate constraint needs a fitted model");
      if (!(acceptance_radius >= 0.0)) throw ParameterError("acceptance_radius", "must be non-negative");
      break;
    case ConstraintKind::custom_g:
      if (!custom || !custom->value || !custom->gradient)
        throw ParameterError("custom", "custom constraint needs value and gradient");
      break;
  }
}

Vec project_closed_form(const ConstraintSpec& spec, const Vec& x) {
  switch (spec.kind) {
    case ConstraintKind::halfspace: {
      require_dim(x, spec.normal.size(), "halfspace projection");
      const double excess = spec.normal.dot(x) - spec.offset;
      if (excess <= 0.0) return x;
      const double nn = spec.normal.squaredNorm();
      Vec y = x - (excess / nn) * spec.normal;
      // Rounding can leave a hair outside; nudge along the normal with a
      // growing step until a.y <= b holds in floating point.
      double nudge = 1e-16 * (std::abs(spec.offset) + spec.normal.cwiseAbs().dot(y.cwiseAbs())) + 1e-300;
      while (spec.normal.dot(y) - spec.offset > 0.0) {
        y -= ((spec.normal.dot(y) - spec.offset) + nudge) / nn * spec.normal;
        nudge *= 2.0;
      }
      return y;
    }
    case ConstraintKind::l2_ball: {
      require_dim(x, spec.center.size(), "ball projection");
      const Vec d = x - spec.center;
      const double n = d.norm();
      if (n <= spec.radius) return x;
      Vec y = spec.center + (d / n) * spec.radius;
      double shrink = 1e-16;
      while ((y - spec.center).norm() > spec.radius) {
        y = spec.center + (d / n) * (spec.radius * (1.0 - shrink));
        shrink *= 2.0;
      }
      return y;
    }
    case ConstraintKind::box:
      require_dim(x, spec.lower.size(), "box projection");
      return x.cwiseMax(spec.lower).cwiseMin(spec.upper);
    default:
      throw UnsupportedKindError("no closed-form projection for constraint kind " + to_string(spec.kind));
  }
}

Vec project_exact(const ConstraintSpec& spec, const Vec& x) {
  if (spec.kind == ConstraintKind::porosity) {
    require_dim(x, spec.rows * spec.cols, "porosity projection");
    return project_porosity(x, spec.porosity_target, spec.margin);
  }
  return project_closed_form(spec, x);
}

SmoothViolation as_smooth_violation(const ConstraintSpec& spec) {
  switch (spec.kind) {
    case ConstraintKind::halfspace: return halfspace_violation(spec.normal, spec.offset);
    case ConstraintKind::l2_ball: return ball_violation(spec.center, spec.radius);
    case ConstraintKind::custom_g: return *spec.custom;
    case ConstraintKind::surrogate_centroid:
    case ConstraintKind::box:
    case ConstraintKind::porosity: {
      return {to_string(spec.kind), [spec](const Vec& y) { return violation(spec, y); },
              [spec](const Vec& y) { return violation_gradient(spec, y); }};
    }
  }
  throw UnsupportedKindError("unknown constraint kind");
}

double violation(const ConstraintSpec& spec, const Vec& x) {
  if (!x.allFinite()) throw NumericError("violation: non-finite input");
  switch (spec.kind) {
    case ConstraintKind::halfspace:
      require_dim(x, spec.normal.size(), "halfspace violation");
      return std::max(spec.normal.dot(x) - spec.offset, 0.0);
    case ConstraintKind::l2_ball:
      require_dim(x, spec.center.size(), "ball violation");
      return std::max((x - spec.center).norm() - spec.radius, 0.0);
    case ConstraintKind::box:
      require_dim(x, spec.lower.size(), "box violation");
      return (x - x.cwiseMax(spec.lower).cwiseMin(spec.upper)).norm();
    case ConstraintKind::porosity:
      require_dim(x, spec.rows * spec.cols, "porosity violation");
      return std::abs(porosity(x) - spec.porosity_target);
    case ConstraintKind::surrogate_centroid: {
      const Eigen::Vector2d p = spec.centroid->pc_coords(x);
      return std::max((p - spec.centroid->target_centroid).norm() - spec.acceptance_radius, 0.0);
    }
    case ConstraintKind::custom_g: return spec.custom->value(x);
  }
  throw ConfigError("unknown constraint kind");
}

double distance(const ConstraintSpec& spec, const Vec& x) {
  if (spec.has_exact_projection()) return (x - project_exact(spec, x)).norm();
  return violation(spec, x);
}

Vec violation_gradient(const ConstraintSpec& spec, const Vec& x) {
  switch (spec.kind) {
    case ConstraintKind::halfspace: return halfspace_violation(spec.normal, spec.offset).gradient(x);
    case ConstraintKind::l2_ball: return ball_violation(spec.center, spec.radius).gradient(x);
    case ConstraintKind::box: {
      const Vec r = x - project_closed_form(spec, x);
      const double n = r.norm();
      return n > 0.0 ? Vec(r / n) : Vec(Vec::Zero(x.size()));
    }
    case ConstraintKind::porosity: return x - project_exact(spec, x);
    case ConstraintKind::surrogate_centroid: {
      const CentroidModel& m = *spec.centroid;
      const Eigen::Vector2d u = m.pc_coords(x) - m.target_centroid;
      const double n = u.norm();
      if (n <= spec.acceptance_radius || n == 0.0) return Vec::Zero(x.size());
      const Vec dir_feature = m.axes * (u / n);
      return m.feature_map.size() == 0 ? dir_feature : Vec(m.feature_map.transpose() * dir_feature);
    }
    case ConstraintKind::custom_g: return spec.custom->gradient(x);
  }
  throw ConfigError("unknown constraint kind");
}

Vec prox(const ConstraintSpec& spec, const Vec& x, double lambda) {
  if (!(lambda > 0.0)) throw ParameterError("lambda", "must be positive");
  if (spec.has_exact_projection()) return project_exact(spec, x);

  const SmoothViolation g = as_smooth_violation(spec);
  auto objective = [&](const Vec& y) { return g.value(y) + (y - x).squaredNorm() / (2.0 * lambda); };
  auto gradient = [&](const Vec& y) -> Vec { return g.gradient(y) + (y - x) / lambda; };

  // 1e-8, or the rounding floor of the gradient when 1/lambda is huge.
  auto stationarity = [&](const Vec& y) {
    constexpr double eps = std::numeric_limits<double>::epsilon();
    return std::max(1e-8, 8.0 * eps * ((x.norm() + y.norm()) / lambda + g.gradient(y).norm()));
  };

  Vec y = x;
  double step = lambda;
  double f = objective(y);
  double gnorm = 0.0;
  constexpr int kMaxIter = 10000;
  for (int it = 0; it < kMaxIter; ++it) {
    const Vec grad = gradient(y);
    gnorm = grad.norm();
    if (gnorm <= stationarity(y)) return y;
    // Armijo backtracking; reopen the step a little after each success.
    double s = std::min(step * 2.0, 1e6 * lambda);
    Vec cand;
    double fc = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60 && !accepted; ++bt) {
      cand = y - s * grad;
      fc = objective(cand);
      accepted = fc <= f - 0.5 * s * gnorm * gnorm;
      // Near the optimum f stops resolving the decrease; fall back to the
      // gradient norm as the merit.
      if (!accepted && std::abs(fc - f) <= 1e-13 * std::max(1.0, std::abs(f)))
        accepted = gradient(cand).norm() < gnorm;
      if (!accepted) s *= 0.5;
    }
    if (!accepted) break;
    step = s;
    y = cand;
    f = fc;
  }
  if (gradient(y).norm() <= stationarity(y)) return y;
  throw ConvergenceError("prox: inner solver did not reach stationarity", gnorm, kMaxIter);
}

}  // namespace lprox
