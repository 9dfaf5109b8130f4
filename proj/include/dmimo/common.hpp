#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dmimo {

using cplx = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kSpeedOfLight = 299'792'458.0;
inline constexpr double kPi = 3.14159265358979323846;

// Value used in place of -inf when converting zero power to dB.
inline constexpr double kDbFloor = -300.0;

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A malformed input file or value that cannot be parsed at all.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A parsed value violates a named invariant. `field()` carries the dotted path.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// ----------------------------------------------------------------------------
// Seeding
// ----------------------------------------------------------------------------

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Hierarchical seed derivation: every random stream in the simulator is keyed
// by (master seed, tag, indices...). Streams never share state, so the draw
// order across streams does not affect any value.
template <typename... Indices>
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                    Indices... indices) noexcept {
  std::uint64_t h = splitmix64(master ^ fnv1a64(tag));
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(indices))), ...);
  return h;
}

// Circularly-symmetric complex Gaussian source with total variance `variance`.
class ComplexGaussian {
 public:
  explicit ComplexGaussian(std::uint64_t seed) : engine_(seed) {}

  cplx operator()(double variance = 1.0) {
    const double s = std::sqrt(variance / 2.0);
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {s * re, s * im};
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// ----------------------------------------------------------------------------
// Small numeric helpers
// ----------------------------------------------------------------------------

inline double power_to_db(double p) {
  if (std::isinf(p) && p > 0) return std::numeric_limits<double>::infinity();
  return p > 0.0 ? 10.0 * std::log10(p) : kDbFloor;
}

inline double magnitude_to_db(double a) {
  return a > 0.0 ? 20.0 * std::log10(a) : kDbFloor;
}

inline double relative_error(const CMatrix& a, const CMatrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

}  // namespace dmimo
