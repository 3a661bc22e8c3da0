#pragma once

#include "lprox/common.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>

namespace lprox {

enum class ConstraintKind { halfspace, l2_ball, box, porosity, surrogate_centroid, custom_g };

std::string to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from_string(const std::string& name);

/// Differentiable (almost everywhere) violation g >= 0 with its gradient.
struct SmoothViolation {
  std::string name;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
};

/// |a.y - b|; gradient sign(a.y - b) a (zero on the hyperplane).
SmoothViolation hyperplane_violation(const Vec& a, double b);
/// max(|y - c| - r, 0).
SmoothViolation ball_violation(const Vec& center, double radius);
/// max(a.y - b, 0).
SmoothViolation halfspace_violation(const Vec& a, double b);
/// 0.5 |y|^2.
SmoothViolation quadratic_violation(int dim);
SmoothViolation zero_violation();

/// Pixel grid with values in [-1, 1], row-major.
struct ImageGrid {
  int rows = 0;
  int cols = 0;
  Vec values;

  ImageGrid() = default;
  ImageGrid(int rows, int cols, Vec values);
  static ImageGrid from_rows(const std::vector<std::vector<double>>& rows);

  int size() const { return rows * cols; }
  double at(int r, int c) const { return values[r * cols + c]; }
};

/// Linear features -> 2-D principal coordinates, with target and forbidden
/// cluster centroids.
struct CentroidModel {
  Mat feature_map;   // features = feature_map * x
  Vec feature_mean;  // PCA centering
  Mat axes;          // feature_dim x 2, orthonormal columns
  Eigen::Vector2d target_centroid = Eigen::Vector2d::Zero();
  Eigen::Vector2d forbidden_centroid = Eigen::Vector2d::Zero();
  double trigger = 0.5;

  Eigen::Vector2d pc_coords(const Vec& x) const;
  double centroid_gap() const { return (target_centroid - forbidden_centroid).norm(); }
};

/// Fits axes and centroids from per-class feature samples (one per column).
/// The returned model uses the identity feature map; callers attach their own.
CentroidModel fit_centroid_model(const Mat& target_features, const Mat& forbidden_features,
                                 double trigger = 0.5, std::uint64_t seed = 0);

/// True iff x sits strictly closer to the forbidden centroid than
/// trigger * (inter-centroid distance).
bool centroid_trigger(const CentroidModel& model, const Vec& x);

struct ConstraintSpec {
  ConstraintKind kind = ConstraintKind::box;
  double tolerance = 1e-6;    // delta
  double prox_weight = 1.0;   // lambda
  double prox_regularity = 1.0;  // beta used by the bound checks
  double smoothness = 1.0;       // L of g used by the bound checks

  // halfspace {a.x <= b}
  Vec normal;
  double offset = 0.0;
  // l2_ball
  Vec center;
  double radius = 1.0;
  // box
  Vec lower, upper;
  // porosity
  int rows = 0, cols = 0;
  int porosity_target = 0;
  double margin = 1e-3;
  // surrogate_centroid
  std::shared_ptr<const CentroidModel> centroid;
  double acceptance_radius = 0.0;
  bool gate_on_trigger = true;
  // custom_g
  std::optional<SmoothViolation> custom;

  static ConstraintSpec halfspace(const Vec& a, double b);
  static ConstraintSpec l2_ball(const Vec& center, double radius);
  static ConstraintSpec box(const Vec& lower, const Vec& upper);
  /// Whole space: a box with +-1e9 bounds.
  static ConstraintSpec vacuous(int dim);
  static ConstraintSpec porosity_grid(int rows, int cols, int target, double margin = 1e-3);
  static ConstraintSpec surrogate(std::shared_ptr<const CentroidModel> model, double acceptance_radius);
  static ConstraintSpec custom_g(SmoothViolation g);

  bool has_closed_form() const;
  bool has_exact_projection() const;  // closed form or porosity
  bool convex() const;
  /// Optional ambient dimension the spec is tied to (0 when unconstrained).
  int dim() const;

  void validate() const;
};

/// Non-negative violation g(x).
double violation(const ConstraintSpec& spec, const Vec& x);
/// Euclidean distance to the set for kinds with an exact projection, the
/// violation value otherwise.
double distance(const ConstraintSpec& spec, const Vec& x);
/// Gradient of g where defined (closed-form kinds use the projection residual
/// direction, porosity uses x - P(x)).
Vec violation_gradient(const ConstraintSpec& spec, const Vec& x);
SmoothViolation as_smooth_violation(const ConstraintSpec& spec);

int porosity(const ImageGrid& grid);
int porosity(const Vec& pixels);

/// Minimum-L1 change to exactly `target` strictly negative pixels inside
/// [-1, 1]. Flipped-negative pixels land at -margin, flipped-positive at 0.
/// Ties resolve by ascending row-major index.
Vec project_porosity(const Vec& pixels, int target, double margin);
ImageGrid project_porosity(const ImageGrid& grid, int target, double margin);

/// Rounds a fraction of pixels half-up to an integer target.
int porosity_target_from_fraction(double fraction, int pixels);

/// Euclidean projection for halfspace, l2_ball and box kinds.
Vec project_closed_form(const ConstraintSpec& spec, const Vec& x);
/// project_closed_form or project_porosity, whichever applies.
Vec project_exact(const ConstraintSpec& spec, const Vec& x);

/// argmin_y g(y) + |y - x|^2 / (2 lambda). Indicator kinds return the
/// projection for any lambda; other kinds run backtracking gradient descent
/// to |grad| <= 1e-8.
Vec prox(const ConstraintSpec& spec, const Vec& x, double lambda);

}  // namespace lprox
