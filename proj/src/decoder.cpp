#include "lprox/decoder.hpp"

#include <cmath>

namespace lprox {

std::string to_string(DecoderKind kind) {
  return kind == DecoderKind::linear ? "linear" : "smooth_mlp";
}

DecoderKind decoder_kind_from_string(const std::string& name) {
  if (name == "linear") return DecoderKind::linear;
  if (name == "smooth_mlp") return DecoderKind::smooth_mlp;
  throw ConfigError("unknown decoder kind '" + name + "'");
}

DecoderMap DecoderMap::linear(const Mat& weight, const Vec& bias) {
  if (weight.rows() != bias.size()) throw ShapeError("linear decoder: bias must have one entry per row");
  if (weight.rows() < weight.cols())
    throw ParameterError("ambient_dim", "ambient dimension must be >= latent dimension");
  if (!weight.allFinite() || !bias.allFinite()) throw NumericError("linear decoder: non-finite parameters");
  DecoderMap d;
  d.kind_ = DecoderKind::linear;
  d.latent_dim_ = static_cast<int>(weight.cols());
  d.ambient_dim_ = static_cast<int>(weight.rows());
  d.w1_ = weight;
  d.b1_ = bias;
  return d;
}

DecoderMap DecoderMap::identity(int dim) {
  DecoderMap d = linear(Mat::Identity(dim, dim), Vec::Zero(dim));
  d.set_lipschitz(1.0, 0);
  return d;
}

DecoderMap DecoderMap::smooth_mlp(const Mat& w1, const Vec& b1, const Mat& w2, const Vec& b2) {
  if (w1.rows() != b1.size() || w2.cols() != w1.rows() || w2.rows() != b2.size())
    throw ShapeError("smooth_mlp decoder: inconsistent layer shapes");
  if (w2.rows() < w1.cols())
    throw ParameterError("ambient_dim", "ambient dimension must be >= latent dimension");
  DecoderMap d;
  d.kind_ = DecoderKind::smooth_mlp;
  d.latent_dim_ = static_cast<int>(w1.cols());
  d.ambient_dim_ = static_cast<int>(w2.rows());
  d.w1_ = w1;
  d.b1_ = b1;
  d.w2_ = w2;
  d.b2_ = b2;
  return d;
}

void DecoderMap::set_lipschitz(double bound, int probes) {
  if (!(bound >= 0.0) || !std::isfinite(bound)) throw ParameterError("lipschitz_bound", "must be finite and >= 0");
  lipschitz_ = bound;
  probes_ = probes;
}

double DecoderMap::lipschitz() const {
  if (!lipschitz_) throw ConfigError("decoder has no cached Lipschitz bound");
  return *lipschitz_;
}

Vec DecoderMap::decode(const Vec& z) const {
  require_dim(z, latent_dim_, "decode");
  if (!z.allFinite()) throw NumericError("decode: non-finite latent");
  if (kind_ == DecoderKind::linear) return w1_ * z + b1_;
  Vec h = (w1_ * z + b1_).array().tanh().matrix();
  return w2_ * h + b2_;
}

Vec DecoderMap::vjp(const Vec& z, const Vec& v) const {
  require_dim(z, latent_dim_, "vjp latent");
  require_dim(v, ambient_dim_, "vjp cotangent");
  if (kind_ == DecoderKind::linear) return w1_.transpose() * v;
  const Vec h = (w1_ * z + b1_).array().tanh().matrix();
  const Vec slope = (1.0 - h.array().square()).matrix();
  return w1_.transpose() * (slope.cwiseProduct(w2_.transpose() * v));
}

Mat DecoderMap::jacobian(const Vec& z) const {
  require_dim(z, latent_dim_, "jacobian");
  if (kind_ == DecoderKind::linear) return w1_;
  const Vec h = (w1_ * z + b1_).array().tanh().matrix();
  const Vec slope = (1.0 - h.array().square()).matrix();
  return w2_ * slope.asDiagonal() * w1_;
}

double estimate_lipschitz(const DecoderMap& map, int probes, Rng& rng) {
  if (probes < 1) throw ParameterError("probes", "must be >= 1");
  const int n = map.latent_dim();
  if (map.kind() == DecoderKind::linear) {
    const Mat& w = map.w1();
    auto op = [&](const Vec& v) -> Vec { return w.transpose() * (w * v); };
    const PowerResult pr = power_iteration(op, rng.normal_vec(n), 1e-10);
    return std::sqrt(std::max(pr.eigenvalue, 0.0));
  }
  double best = 0.0;
  for (int p = 0; p < probes; ++p) {
    const Vec z = rng.normal_vec(n);
    const Vec x0 = map.decode(z);
    // J v by central difference; J^T u exactly.
    auto op = [&](const Vec& v) -> Vec {
      const double h = 1e-5;
      const Vec jv = (map.decode(z + h * v) - map.decode(z - h * v)) / (2.0 * h);
      return map.vjp(z, jv);
    };
    const PowerResult pr = power_iteration(op, rng.normal_vec(n), 1e-9);
    best = std::max(best, std::sqrt(std::max(pr.eigenvalue, 0.0)));
  }
  return kLipschitzSafety * best;
}

EncoderMap make_encoder(const DecoderMap& decoder, Rng& rng, int samples, double ridge) {
  EncoderMap e;
  e.kind = decoder.kind();
  if (decoder.kind() == DecoderKind::linear) {
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(decoder.w1());
    e.a = cod.pseudoInverse();
    e.c = -e.a * decoder.b1();
    return e;
  }
  if (samples < decoder.latent_dim() + 1) throw ParameterError("samples", "too few samples to fit an encoder");
  const int n = decoder.latent_dim(), m = decoder.ambient_dim();
  // Augmented least squares: [x; 1] -> z.
  Mat xs(m + 1, samples), zs(n, samples);
  for (int j = 0; j < samples; ++j) {
    const Vec z = rng.normal_vec(n);
    zs.col(j) = z;
    xs.col(j).head(m) = decoder.decode(z);
    xs(m, j) = 1.0;
  }
  Mat gram = xs * xs.transpose();
  gram.diagonal().head(m).array() += ridge * samples;
  const Mat coef = gram.ldlt().solve(xs * zs.transpose()).transpose();  // n x (m+1)
  e.a = coef.leftCols(m);
  e.c = coef.col(m);
  return e;
}

Vec encode(const EncoderMap& map, const Vec& x) {
  require_dim(x, map.ambient_dim(), "encode");
  return map.a * x + map.c;
}

}  // namespace lprox
