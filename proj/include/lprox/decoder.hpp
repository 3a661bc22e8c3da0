#pragma once

#include "lprox/common.hpp"
#include "lprox/linalg.hpp"

#include <functional>
#include <optional>
#include <string>

namespace lprox {

enum class DecoderKind { linear, smooth_mlp };

std::string to_string(DecoderKind kind);
DecoderKind decoder_kind_from_string(const std::string& name);

/// Latent -> ambient map with exact vector-Jacobian products.
///
/// linear:     x = W z + b
/// smooth_mlp: x = W2 tanh(W1 z + b1) + b2   (slope of tanh bounded by 1)
class DecoderMap {
 public:
  static DecoderMap linear(const Mat& weight, const Vec& bias);
  static DecoderMap identity(int dim);
  static DecoderMap smooth_mlp(const Mat& w1, const Vec& b1, const Mat& w2, const Vec& b2);

  DecoderKind kind() const { return kind_; }
  int latent_dim() const { return latent_dim_; }
  int ambient_dim() const { return ambient_dim_; }

  Vec decode(const Vec& z) const;
  /// J(z)^T v.
  Vec vjp(const Vec& z, const Vec& v) const;
  /// Analytic Jacobian, ambient_dim x latent_dim.
  Mat jacobian(const Vec& z) const;

  /// Parameters: (w1, b1) are (W, b) for linear maps; w2/b2 unused there.
  const Mat& w1() const { return w1_; }
  const Vec& b1() const { return b1_; }
  const Mat& w2() const { return w2_; }
  const Vec& b2() const { return b2_; }

  std::optional<double> lipschitz_bound() const { return lipschitz_; }
  int lipschitz_probes() const { return probes_; }
  /// Caches a bound (normally the output of estimate_lipschitz).
  void set_lipschitz(double bound, int probes);
  /// Cached bound; throws if none has been computed.
  double lipschitz() const;

 private:
  DecoderKind kind_ = DecoderKind::linear;
  int latent_dim_ = 0;
  int ambient_dim_ = 0;
  Mat w1_, w2_;
  Vec b1_, b2_;
  std::optional<double> lipschitz_;
  int probes_ = 0;
};

/// Safety factor applied to probe-based estimates for nonlinear maps.
inline constexpr double kLipschitzSafety = 1.05;

/// Largest singular value of W for linear maps (power iteration on W^T W);
/// for smooth_mlp the maximum over `probes` N(0, I) latent points of the
/// local Jacobian norm, times kLipschitzSafety.
double estimate_lipschitz(const DecoderMap& map, int probes, Rng& rng);

/// Affine latent estimate z = A x + c.
struct EncoderMap {
  DecoderKind kind = DecoderKind::linear;
  Mat a;
  Vec c;

  int latent_dim() const { return static_cast<int>(a.rows()); }
  int ambient_dim() const { return static_cast<int>(a.cols()); }
};

/// Pseudo-inverse encoder for linear decoders; for smooth_mlp a ridge
/// regression fitted on `samples` pairs (z ~ N(0, I), D(z)).
EncoderMap make_encoder(const DecoderMap& decoder, Rng& rng, int samples = 2000, double ridge = 1e-6);

Vec encode(const EncoderMap& map, const Vec& x);

}  // namespace lprox
