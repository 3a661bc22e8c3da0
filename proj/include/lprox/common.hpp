#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lprox {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid argument; `field` names the offending parameter.
struct ParameterError : Error {
  ParameterError(std::string field, const std::string& what)
      : Error(field + ": " + what), field(std::move(field)) {}
  std::string field;
};

struct ShapeError : Error {
  using Error::Error;
};

struct IndexError : Error {
  using Error::Error;
};

/// Non-finite input or an operation that produced non-finite output.
struct NumericError : Error {
  using Error::Error;
};

struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, double residual, long iterations)
      : Error(what), residual(residual), iterations(iterations) {}
  double residual;
  long iterations;
};

/// A chain or training loop blew up; `index` is the step/epoch at failure.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, long index) : Error(what), index(index) {}
  long index;
};

struct DegeneracyError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct UnsupportedKindError : Error {
  using Error::Error;
};

struct SimulatorError : Error {
  SimulatorError(const std::string& what, long perturbation)
      : Error(what), perturbation(perturbation) {}
  long perturbation;
};

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return mix_seed(mix_seed(root) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

/// Seeded stream of standard normals and uniforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  Vec normal_vec(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal_(engine_);
    return v;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline void require_dim(const Vec& v, Eigen::Index n, const char* what) {
  if (v.size() != n)
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(n) +
                     ", got " + std::to_string(v.size()));
}

/// Pairwise (cascade) summation over a fixed ascending order.
template <typename T>
T pairwise_sum(std::span<const T> xs) {
  if (xs.empty()) throw ParameterError("xs", "pairwise_sum of an empty range");
  if (xs.size() == 1) return xs[0];
  if (xs.size() == 2) return T(xs[0] + xs[1]);
  const std::size_t half = xs.size() / 2;
  return T(pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half)));
}

Vec to_vec(const std::vector<double>& xs);
std::vector<double> to_std(const Vec& v);

}  // namespace lprox
