#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace gpsafe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: dimensions, non-finite values, out-of-range parameters.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Kernel matrix could not be factorized even at the largest jitter.
class FitError : public Error {
 public:
  using Error::Error;
};

// A state admits no control that strictly increases the distance rate.
class AssumptionViolation : public Error {
 public:
  AssumptionViolation(const std::string& what, Vector state)
      : Error(what), state_(std::move(state)) {}
  const Vector& state() const { return state_; }

 private:
  Vector state_;
};

bool all_finite(const Vector& v);
void require_finite(const Vector& v, const char* what);
void require_dim(const Vector& v, Index dim, const char* what);

// Axis-aligned box [lower, upper].
class Box {
 public:
  Box() = default;
  Box(Vector lower, Vector upper);

  Index dim() const { return lower_.size(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  Vector sides() const { return upper_ - lower_; }
  Vector center() const { return 0.5 * (lower_ + upper_); }
  double diameter() const { return sides().norm(); }

  bool contains(const Vector& v, double tol = 0.0) const;
  Vector clamp(const Vector& v) const;

  // Cartesian product, this box first.
  Box product(const Box& other) const;

 private:
  Vector lower_;
  Vector upper_;
};

// mt19937_64 with the bit-to-double conversions fixed here, since the
// standard distributions are allowed to differ between library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  Vector uniform(const Box& box);
  Vector unit_direction(Index dim);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Mixes a base seed with a stream index so parallel loops can draw from
// independent, schedule-independent streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace gpsafe
