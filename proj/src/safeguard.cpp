#include "gpsafe/safeguard.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpsafe {

std::string to_string(SafeguardStatus s) {
  switch (s) {
    case SafeguardStatus::nominal_safe:
      return "nominal_safe";
    case SafeguardStatus::projected:
      return "projected";
    case SafeguardStatus::infeasible_fallback:
      return "infeasible_fallback";
  }
  return "unknown";
}

SafeguardStatus parse_safeguard_status(const std::string& s) {
  if (s == "nominal_safe") return SafeguardStatus::nominal_safe;
  if (s == "projected") return SafeguardStatus::projected;
  if (s == "infeasible_fallback") return SafeguardStatus::infeasible_fallback;
  throw InvalidArgument("unknown safeguard status '" + s + "'");
}

void to_json(nlohmann::json& j, const SafeguardConfig& c) {
  j = nlohmann::json{{"directions", c.directions},       {"seed", c.seed},
                     {"tolerance", c.tolerance},         {"fallback_resolution", c.fallback_resolution},
                     {"refine_rounds", c.refine_rounds}, {"refine_rays", c.refine_rays}};
}

void from_json(const nlohmann::json& j, SafeguardConfig& c) {
  const SafeguardConfig d;
  c.directions = j.value("directions", d.directions);
  c.seed = j.value("seed", d.seed);
  c.tolerance = j.value("tolerance", d.tolerance);
  c.fallback_resolution = j.value("fallback_resolution", d.fallback_resolution);
  c.refine_rounds = j.value("refine_rounds", d.refine_rounds);
  c.refine_rays = j.value("refine_rays", d.refine_rays);
}

Safeguard::Safeguard(const SafetyBound& bound, Box control_box, SafeguardConfig config)
    : bound_(&bound), control_box_(std::move(control_box)), config_(config) {
  if (control_box_.dim() != bound.model().control_dim()) throw InvalidArgument("safeguard: control box dimension mismatch");
  if (config_.directions < 1) throw InvalidArgument("safeguard: need at least one direction");
  if (!(config_.tolerance > 0.0)) throw InvalidArgument("safeguard: tolerance must be positive");
  if (config_.fallback_resolution < 2) throw InvalidArgument("safeguard: fallback resolution must be >= 2");
  if (config_.refine_rounds < 0 || config_.refine_rays < 0) throw InvalidArgument("safeguard: negative refinement");
  Rng rng(config_.seed);
  for (int i = 0; i < config_.directions; ++i) directions_.push_back(rng.unit_direction(control_box_.dim()));

  const Index nu = control_box_.dim();
  const int r = config_.fallback_resolution;
  Index count = 1;
  for (Index j = 0; j < nu; ++j) count *= r;
  for (Index i = 0; i < count; ++i) {
    Vector u(nu);
    Index rest = i;
    for (Index j = nu - 1; j >= 0; --j) {
      const Index k = rest % r;
      rest /= r;
      u(j) = control_box_.lower()(j) + control_box_.sides()(j) * static_cast<double>(k) / (r - 1);
    }
    scan_.push_back(u);
  }
}

Safeguard::RayHit Safeguard::search_ray(const StateSafetyBound& sb, const Vector& u_ref, const Vector& direction,
                                        double threshold, double limit, int& evaluations) const {
  RayHit hit;
  // The path u(t) = clamp(u_ref + t d) slides along the faces it meets and
  // stops moving once every coordinate with d_j != 0 is saturated. Its
  // distance from u_ref never decreases in t.
  double t_max = 0.0;
  for (Index j = 0; j < direction.size(); ++j) {
    if (direction(j) > 0.0) t_max = std::max(t_max, (control_box_.upper()(j) - u_ref(j)) / direction(j));
    if (direction(j) < 0.0) t_max = std::max(t_max, (control_box_.lower()(j) - u_ref(j)) / direction(j));
  }
  if (!(t_max > 0.0) || !std::isfinite(t_max)) return hit;
  const double diameter = control_box_.diameter();
  const double tol = config_.tolerance * diameter;
  auto eval = [&](double t, Vector& u, double& value) {
    u = control_box_.clamp(u_ref + t * direction);
    ++evaluations;
    const auto v = sb.upper_bound_if_below(u, threshold);
    if (v) value = *v;
    return v.has_value();
  };
  auto distance_at = [&](double t) { return (control_box_.clamp(u_ref + t * direction) - u_ref).norm(); };
  Vector u;
  double value = 0.0;
  double lo = 0.0;
  double hi = std::min(diameter / 64.0, t_max);
  for (;;) {
    // Past `limit` this ray cannot beat the best hit so far.
    if (lo > 0.0 && distance_at(lo) >= limit) return hit;
    if (eval(hi, u, value)) break;
    if (hi >= t_max) return hit;
    lo = hi;
    hi = std::min(2.0 * hi, t_max);
  }
  hit.found = true;
  hit.control = u;
  hit.upper_bound = value;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    Vector um;
    double vm = 0.0;
    if (eval(mid, um, vm)) {
      hi = mid;
      hit.control = um;
      hit.upper_bound = vm;
    } else {
      lo = mid;
    }
  }
  hit.distance = (hit.control - u_ref).norm();
  return hit;
}

bool Safeguard::scan_has_safe(const Vector& x) const {
  const StateSafetyBound sb(*bound_, x);
  for (const Vector& u : scan_) {
    if (sb.upper_bound_if_below(u, sb.threshold())) return true;
  }
  return false;
}

SafeguardResult Safeguard::project(const Vector& x, const Vector& u_ref_raw) const {
  require_dim(u_ref_raw, control_box_.dim(), "reference control");
  require_finite(u_ref_raw, "reference control");
  const Vector u_ref = control_box_.clamp(u_ref_raw);
  const StateSafetyBound sb(*bound_, x);
  SafeguardResult r;
  r.threshold = sb.threshold();
  r.upper_bound = sb.upper_bound(u_ref);
  r.evaluations = 1;
  if (r.upper_bound < r.threshold) {
    r.control = u_ref;
    r.status = SafeguardStatus::nominal_safe;
    return r;
  }

  RayHit best;
  Vector best_dir;
  for (const Vector& d : directions_) {
    const double limit = best.found ? best.distance : std::numeric_limits<double>::infinity();
    RayHit h = search_ray(sb, u_ref, d, r.threshold, limit, r.evaluations);
    if (h.found && (!best.found || h.distance < best.distance)) {
      best = std::move(h);
      best_dir = d;
    }
  }
  if (best.found) {
    Rng rng(mix_seed(config_.seed, 1));
    double spread = 0.5;
    for (int round = 0; round < config_.refine_rounds; ++round, spread *= 0.5) {
      const Vector center = best_dir;
      for (int k = 0; k < config_.refine_rays; ++k) {
        Vector d = center + spread * rng.unit_direction(center.size());
        if (d.norm() < 1e-12) continue;
        d.normalize();
        RayHit h = search_ray(sb, u_ref, d, r.threshold, best.distance, r.evaluations);
        if (h.found && h.distance < best.distance) {
          best = std::move(h);
          best_dir = d;
        }
      }
    }
    r.control = best.control;
    r.upper_bound = best.upper_bound;
    r.status = SafeguardStatus::projected;
    return r;
  }

  std::vector<double> values;
  std::vector<Index> order;
  for (std::size_t i = 0; i < scan_.size(); ++i) {
    values.push_back(sb.upper_bound(scan_[i]));
    if (values.back() < r.threshold) order.push_back(static_cast<Index>(i));
  }
  r.evaluations += static_cast<int>(values.size());
  if (!order.empty()) {
    const Index i = *std::min_element(order.begin(), order.end(), [&](Index a, Index b) {
      return (scan_[a] - u_ref).norm() < (scan_[b] - u_ref).norm();
    });
    r.control = scan_[i];
    r.upper_bound = values[i];
    r.status = SafeguardStatus::projected;
    return r;
  }
  const auto argmin = std::min_element(values.begin(), values.end()) - values.begin();
  r.control = scan_[argmin];
  r.upper_bound = values[argmin];
  r.status = SafeguardStatus::infeasible_fallback;
  return r;
}

}  // namespace gpsafe
