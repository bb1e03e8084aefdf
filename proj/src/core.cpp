#include "gpsafe/core.hpp"

#include <cmath>
#include <numbers>

namespace gpsafe {

bool all_finite(const Vector& v) { return v.allFinite(); }

void require_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw InvalidArgument(std::string(what) + " contains non-finite values");
}

void require_dim(const Vector& v, Index dim, const char* what) {
  if (v.size() != dim) {
    throw InvalidArgument(std::string(what) + ": expected dimension " + std::to_string(dim) +
                          ", got " + std::to_string(v.size()));
  }
}

Box::Box(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size()) throw InvalidArgument("box bounds differ in dimension");
  require_finite(lower_, "box lower bound");
  require_finite(upper_, "box upper bound");
  if ((upper_.array() < lower_.array()).any()) throw InvalidArgument("box upper bound below lower bound");
}

bool Box::contains(const Vector& v, double tol) const {
  if (v.size() != dim()) return false;
  return ((v.array() >= lower_.array() - tol) && (v.array() <= upper_.array() + tol)).all();
}

Vector Box::clamp(const Vector& v) const {
  require_dim(v, dim(), "Box::clamp");
  return v.cwiseMax(lower_).cwiseMin(upper_);
}

Box Box::product(const Box& other) const {
  Vector lo(dim() + other.dim()), hi(dim() + other.dim());
  lo << lower_, other.lower_;
  hi << upper_, other.upper_;
  return Box(lo, hi);
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

Vector Rng::uniform(const Box& box) {
  Vector v(box.dim());
  for (Index i = 0; i < box.dim(); ++i) v(i) = uniform(box.lower()(i), box.upper()(i));
  return v;
}

Vector Rng::unit_direction(Index dim) {
  Vector v(dim);
  double n = 0.0;
  while (n < 1e-12) {
    for (Index i = 0; i < dim; ++i) v(i) = normal();
    n = v.norm();
  }
  return v / n;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace gpsafe
