#include "sonamatch/rng.hpp"

#include <cmath>

#include "sonamatch/errors.hpp"

namespace sonamatch {

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // u1 must be strictly positive for the log.
  double u1;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_normal_ = true;
  return r * std::cos(a);
}

double Rng::gamma_unit_mean(double cv) {
  if (!(cv > 0.0)) {
    throw InputError("gamma_unit_mean: coefficient of variation must be positive, got " +
                     std::to_string(cv));
  }
  // Shape k = 1/cv^2, scale 1/k gives mean 1 and the requested CV.
  const double k = 1.0 / (cv * cv);
  // Marsaglia-Tsang works for k >= 1; for k < 1 draw at k+1 and apply
  // the standard power-of-uniform boost.
  double boost = 1.0;
  double shape = k;
  if (shape < 1.0) {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    boost = std::pow(u, 1.0 / shape);
    shape += 1.0;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform01();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) {
      return boost * d * v / k;
    }
    if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return boost * d * v / k;
    }
  }
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over a golden-ratio spread of the stream id.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

}  // namespace sonamatch
