#pragma once

#include "gpsafe/safety_index.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gpsafe {

enum class SafeguardStatus { nominal_safe, projected, infeasible_fallback };

std::string to_string(SafeguardStatus s);
SafeguardStatus parse_safeguard_status(const std::string& s);

struct SafeguardConfig {
  int directions = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;  // bisection tolerance, relative to the control box diameter
  int fallback_resolution = 16;
  // After the ray search, rays are re-aimed around the best one: each round
  // tries `refine_rays` perturbed directions at half the previous spread.
  int refine_rounds = 4;
  int refine_rays = 6;
};

void to_json(nlohmann::json& j, const SafeguardConfig& c);
void from_json(const nlohmann::json& j, SafeguardConfig& c);

struct SafeguardResult {
  Vector control;
  SafeguardStatus status = SafeguardStatus::nominal_safe;
  double upper_bound = 0.0;  // U_f at the returned control
  double threshold = 0.0;    // max(phi(x) - eta, 0)
  int evaluations = 0;
};

// Online filter: keeps u_ref when it passes the safe-control test and
// otherwise returns the nearest safe control found by ray search, a global
// control-grid scan, or, failing both, the scan's argmin of U_f.
class Safeguard {
 public:
  Safeguard(const SafetyBound& bound, Box control_box, SafeguardConfig config = {});

  const SafetyBound& bound() const { return *bound_; }
  const Box& control_box() const { return control_box_; }
  const SafeguardConfig& config() const { return config_; }

  SafeguardResult project(const Vector& x, const Vector& u_ref) const;

  // Whether the global control-grid scan contains a safe control at x.
  bool scan_has_safe(const Vector& x) const;

  // The scan candidates, in row-major order with the last dimension fastest.
  const std::vector<Vector>& scan_controls() const { return scan_; }

 private:
  struct RayHit {
    bool found = false;
    double distance = 0.0;
    Vector control;
    double upper_bound = 0.0;
  };
  RayHit search_ray(const StateSafetyBound& sb, const Vector& u_ref, const Vector& direction, double threshold, double limit,
                    int& evaluations) const;

  const SafetyBound* bound_;
  Box control_box_;
  SafeguardConfig config_;
  std::vector<Vector> directions_;
  std::vector<Vector> scan_;
};

}  // namespace gpsafe
