#pragma once

#include "gpsafe/environment.hpp"
#include "gpsafe/gp_model.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace gpsafe {

// Outcome of one empirical check. `worst_margin` is the smallest observed
// (bound - value) over all checked queries; negative means a violation.
struct SuiteResult {
  std::string name;
  bool passed = false;
  Index queries = 0;
  Index violations = 0;
  double worst_margin = 0.0;
  double coverage = 1.0;                       // fraction of queries inside the bound
  double required_coverage = 1.0;
  std::vector<std::vector<double>> violating;  // first few offending inputs
};

void to_json(nlohmann::json& j, const SuiteResult& r);
void from_json(const nlohmann::json& j, SuiteResult& r);

struct ValidationReport {
  std::vector<SuiteResult> suites;
  bool passed() const;
};

void to_json(nlohmann::json& j, const ValidationReport& r);
void from_json(const nlohmann::json& j, ValidationReport& r);

// A random input within `tau` (1-norm) of a random training input, clamped
// to `domain`.
Vector sample_near_training(const GpModel& model, const Box& domain, double tau, Rng& rng);

// sigma_f <= sigma_tilde(tau) at inputs within tau of the training set.
SuiteResult check_variance_bound(const GpModel& model, const Box& domain, double tau, Index queries, Rng& rng);

// mu_d <= mean_upper_bound(tau)_d at inputs within tau of the training set.
SuiteResult check_mean_bound(const GpModel& model, const Box& domain, double tau, Index queries, Rng& rng);

// Coverage of |f - mu|_1 <= beta sigma_f + gamma at uniform inputs of the
// joint box; passes when coverage >= 1 - delta.
SuiteResult check_calibration(const GpModel& model, const Environment& env, Index queries, Rng& rng);

// Every constant in the environment's Lipschitz bundle against random-pair
// difference quotients. Half the pairs are local (separation ~1e-3 of the
// box), half are independent.
SuiteResult check_lipschitz(const Environment& env, Index pairs, Rng& rng);

struct ValidationConfig {
  Index queries = 10000;
  Index lipschitz_pairs = 100000;
  std::uint64_t seed = 0;
};

// All four suites; `tau` is the covering radius of the model's training set.
ValidationReport validate_model(const GpModel& model, const Environment& env, double tau,
                                const ValidationConfig& config);

}  // namespace gpsafe
