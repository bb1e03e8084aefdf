#pragma once

#include "gpsafe/gp_model.hpp"

#include <json.hpp>

#include <functional>
#include <optional>

namespace gpsafe {

struct SafetyMeasure {
  double d = 0.0;      // distance to the unsafe set
  double d_dot = 0.0;  // its time derivative
};

using MeasureFn = std::function<SafetyMeasure(const Vector&)>;

// phi = sigma + d_min^n - d^n - k * d_dot
struct SafetyIndexParams {
  double sigma = 0.0;
  double n = 1.0;
  double k = 1.0;
  double eta = 0.05;
  double d_min = 0.1;

  void validate() const;
};

void to_json(nlohmann::json& j, const SafetyIndexParams& p);
void from_json(const nlohmann::json& j, SafetyIndexParams& p);
SafetyIndexParams load_params(const std::string& path);

double safety_index(const SafetyIndexParams& p, const SafetyMeasure& m);

// L_phi = max{n d^{n-1}, k} (L_dx + L_ddx), where d^{n-1} is taken at d_max
// for n >= 1 and at d_min for 0 < n < 1.
double safety_index_lipschitz(const SafetyIndexParams& p, double l_dx, double l_ddx, double d_max);

struct UpperBoundTerms {
  double phi_mean = 0.0;  // phi evaluated at the posterior mean
  double sigma_f = 0.0;
  double margin = 0.0;    // L_phi * beta_f * sigma_f
  double value = 0.0;     // U_f
};

// U_f(x, u) = phi(mu(x, u)) + L_phi beta_f sigma_f(x, u), and the safe-control
// test U_f < max(phi(x) - eta, 0).
class SafetyBound {
 public:
  SafetyBound(const GpModel& model, SafetyIndexParams params, MeasureFn measure, double l_phi);

  const GpModel& model() const { return *model_; }
  const SafetyIndexParams& params() const { return params_; }
  double l_phi() const { return l_phi_; }

  double phi(const Vector& x) const { return safety_index(params_, measure_(x)); }
  double threshold(const Vector& x) const;
  UpperBoundTerms terms(const Vector& x, const Vector& u) const;
  double upper_bound(const Vector& x, const Vector& u) const { return terms(x, u).value; }
  bool is_safe(const Vector& x, const Vector& u) const { return upper_bound(x, u) < threshold(x); }

 private:
  const GpModel* model_;
  SafetyIndexParams params_;
  MeasureFn measure_;
  double l_phi_;
};

// SafetyBound restricted to one state, for searches over the control.
class StateSafetyBound {
 public:
  StateSafetyBound(const SafetyBound& bound, const Vector& x);

  double threshold() const { return threshold_; }
  UpperBoundTerms terms(const Vector& u) const;
  double upper_bound(const Vector& u) const { return terms(u).value; }

  // U_f(x, u) when it is below `threshold`, otherwise nullopt. Screens with
  // the posterior mean first, since U_f >= phi(mu).
  std::optional<double> upper_bound_if_below(const Vector& u, double threshold) const;

 private:
  const SafetyBound* bound_;
  StatePosterior posterior_;
  double threshold_;
};

}  // namespace gpsafe
