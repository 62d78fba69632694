#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace heatinv {

inline constexpr const char* kVersion = "0.1.0";

// Error hierarchy. Every failure surfaced by the library derives from Error so
// the CLI can map it to a nonzero exit with a single catch.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};
struct StateError : Error {
  using Error::Error;
};
struct TrainingError : Error {
  using Error::Error;
};

struct SolverError : Error {
  SolverError(const std::string& what, double residual_norm = std::numeric_limits<double>::quiet_NaN(),
              int step_index = -1)
      : Error(what), residual(residual_norm), step(step_index) {}
  double residual;
  int step;
};

inline constexpr double kStefanBoltzmann = 5.670374419e-8;
inline constexpr double kZeroCelsius = 273.15;

// Footprint of every generated body, meters.
inline constexpr double kFootprint = 0.3;

// Default sensor / flux grid edge (30 x 30 = 900 points).
inline constexpr int kDefaultGrid = 30;

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

// splitmix64: derives independent stream seeds from (seed, index) pairs.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Distribution helpers with fixed arithmetic, so streams are identical across
// standard library implementations (std::uniform_*_distribution is not).
template <class Engine>
double uniform01(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <class Engine>
double uniform(Engine& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

template <class Engine>
int uniform_int(Engine& rng, int lo, int hi) {  // inclusive
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  return lo + static_cast<int>(rng() % span);
}

}  // namespace heatinv
