#pragma once

#include "gpsafe/core.hpp"

#include <json.hpp>

namespace gpsafe {

// Squared-exponential kernel k(a, b) = s2 * exp(-|S(a - b)|^2 / (2 l^2)),
// where S = diag(input_scale). An empty input_scale means S = I.
struct SquaredExponential {
  double signal_variance = 1.0;
  double lengthscale = 1.0;
  Vector input_scale;

  void validate(Index input_dim) const;

  // Unchecked; callers validate dimensions once up front.
  template <class A, class B>
  double operator()(const A& a, const B& b) const {
    const bool scaled = input_scale.size() != 0;
    double r2 = 0.0;
    for (Index j = 0; j < a.size(); ++j) {
      const double d = scaled ? (a(j) - b(j)) * input_scale(j) : a(j) - b(j);
      r2 += d * d;
    }
    return signal_variance * std::exp(-0.5 * r2 / (lengthscale * lengthscale));
  }

  double max_value() const { return signal_variance; }
  double max_scale() const;

  // Lipschitz constant of w -> k(w, w') in the 1-norm of the unscaled input:
  // s2 * exp(-1/2) / l * max_j S_jj.
  double lipschitz() const;
};

double kernel_eval(const SquaredExponential& k, const Vector& a, const Vector& b);

void to_json(nlohmann::json& j, const SquaredExponential& k);
void from_json(const nlohmann::json& j, SquaredExponential& k);

enum class Execution { serial, parallel };

Execution parse_execution(const std::string& s);

namespace serial {
// Reference implementations: one kernel call per entry.
Matrix kernel_matrix(const SquaredExponential& k, const Matrix& rows);
Matrix cross_kernel(const SquaredExponential& k, const Matrix& rows, const Matrix& queries);
}  // namespace serial

namespace parallel {
// OpenMP versions built on the squared-distance expansion; they agree with
// the serial ones to rounding.
Matrix kernel_matrix(const SquaredExponential& k, const Matrix& rows);
Matrix cross_kernel(const SquaredExponential& k, const Matrix& rows, const Matrix& queries);
}  // namespace parallel

Matrix kernel_matrix(const SquaredExponential& k, const Matrix& rows, Execution exec);
Matrix cross_kernel(const SquaredExponential& k, const Matrix& rows, const Matrix& queries,
                    Execution exec);

}  // namespace gpsafe
