#pragma once

#include "gpsafe/environment.hpp"
#include "gpsafe/safeguard.hpp"

#include <json.hpp>

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gpsafe {

using Policy = std::function<Vector(const Vector& x, Index t)>;

// Seeded uniform controls in the box, each held for `hold` steps.
Policy uniform_random_policy(const Box& control_box, std::uint64_t seed, Index hold = 1);
Policy constant_policy(const Vector& u);

struct TraceRecord {
  Index t = 0;
  Vector state;
  Vector u_ref;
  Vector u;
  double phi = 0.0;        // at the current state
  double phi_next = 0.0;   // at the true next state
  double u_f = 0.0;        // U_f(x, u); NaN without a safeguard
  double threshold = 0.0;  // max(phi - eta, 0); NaN without a safeguard
  std::string status;      // safeguard status, or "unfiltered"
};

// Runs `steps` steps of x <- f(x, u) with u chosen by the safeguard from
// the policy's reference (or the clamped reference if safeguard is null).
// phi is evaluated with `params` through the environment's measure.
std::vector<TraceRecord> rollout(const Environment& env, const Policy& policy, const Safeguard* safeguard,
                                 const SafetyIndexParams& params, const Vector& x0, Index steps);

// Rejection-samples a state in the box with d(x) >= d_min and
// lo <= phi(x) <= hi. Throws Error after `max_tries` misses.
Vector sample_safe_state(const Environment& env, const SafetyIndexParams& params, Rng& rng, double lo, double hi,
                             int max_tries = 100000);

struct RolloutSummary {
  Index steps = 0;
  double max_phi = 0.0;         // over phi_next; -inf for an empty trace
  double min_distance = 0.0;    // d over the visited next states; +inf for an empty trace
  Index bound_violations = 0;   // phi_next > u_f
  Index unsafe_controls = 0;    // filtered steps with u_f >= threshold
  Index fallbacks = 0;          // infeasible_fallback steps
  Index positive_phi = 0;       // phi_next > 0
  Index below_d_min = 0;        // next-state d < d_min
};

// Re-scans a trace; next states are recomputed through the environment.
RolloutSummary summarize_trace(const Environment& env, const SafetyIndexParams& params,
                               const std::vector<TraceRecord>& trace);

void to_json(nlohmann::json& j, const RolloutSummary& s);

// Header: t, state names, <control>_ref, control names, phi, phi_next, u_f,
// threshold, status. Values use 17 significant digits.
void write_trace_csv(std::ostream& out, const std::vector<TraceRecord>& trace,
                     const std::vector<std::string>& state_names, const std::vector<std::string>& control_names);
std::vector<TraceRecord> read_trace_csv(std::istream& in, Index state_dim, Index control_dim);

std::vector<std::string> state_names(const Environment& env);
std::vector<std::string> control_names(const Environment& env);

struct FeasibilityConfig {
  // Cells per position dimension; positions are the first
  // counts.size() state dimensions, the rest are sampled.
  std::vector<Index> cells;
  int samples_per_cell = 100;
  std::uint64_t seed = 0;
};

struct FeasibilityMap {
  std::vector<Index> cells;
  std::vector<int> counts;  // infeasible samples per cell, row-major
  int samples_per_cell = 0;
  int total() const;
};

// For every position cell, samples the remaining state dimensions uniformly
// at the cell center and counts the states where the safeguard's global
// scan finds no safe control.
FeasibilityMap feasibility_map(const Environment& env, const Safeguard& safeguard, const FeasibilityConfig& config,
                               Execution exec = Execution::parallel);

void write_feasibility_csv(std::ostream& out, const FeasibilityMap& map);

}  // namespace gpsafe
