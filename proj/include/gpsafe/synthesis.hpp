#pragma once

#include "gpsafe/environment.hpp"
#include "gpsafe/gp_model.hpp"
#include "gpsafe/grid.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gpsafe {

// Candidate controls at escalating resolution r = 2, 4, 8, ...
// Grid mode: r evenly spaced values per control dimension, endpoints
// included. Random mode: r^{n_u} seeded uniform draws.
struct ControlSamplerConfig {
  enum class Mode { grid, random };
  Mode mode = Mode::grid;
  int max_resolution = 64;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const ControlSamplerConfig& c);
void from_json(const nlohmann::json& j, ControlSamplerConfig& c);

std::vector<Vector> sample_controls(const Box& control_box, int resolution, const ControlSamplerConfig& config,
                                    std::uint64_t stream);

struct InfSupEstimate {
  double lower_bound = 0.0;  // min_i values_i - L_delta * tau
  double min_value = 0.0;
  Index argmin = 0;
  // Per grid point: best control found (one row each), its delta d_dot
  // (> 0) and the resolution at which it was found.
  Matrix controls;
  Vector values;
  std::vector<int> resolutions;
};

// Per grid point, escalates the sampling resolution until some control
// gives delta d_dot > 0 and records the best value at that resolution.
// Throws AssumptionViolation if the largest resolution finds none.
InfSupEstimate estimate_infsup(const Environment& env, const Grid& grid, double l_delta,
                               const ControlSamplerConfig& sampler, Execution exec = Execution::parallel);

// Which qualifying controls a grid point contributes to the dataset.
// first: the best control at the first resolution where one qualifies.
// all: every qualifying control at that resolution.
enum class DatasetControls { first, all };

std::string to_string(DatasetControls c);
DatasetControls parse_dataset_controls(const std::string& s);

struct DatasetBuild {
  Dataset data;
  std::vector<Index> grid_index;   // source grid point of each row
  std::vector<double> delta_rate;  // delta d_dot of each row
};

// Collects transitions (x_i, u_i, f(x_i, u_i)) with delta d_dot > infsup / 2
// at every grid point.
DatasetBuild build_dataset(const Environment& env, const Grid& grid, double infsup_lower_bound,
                           const ControlSamplerConfig& sampler, DatasetControls controls = DatasetControls::first,
                           Execution exec = Execution::parallel);

struct TauConditionInputs {
  double tau = 0.0;
  double infsup = 0.0;
  LipschitzBundle lipschitz;
  double beta = 0.0;
  Index state_dim = 0;
  double kernel_lipschitz = 0.0;
  Index data_size = 0;
  double k_inv_frobenius = 0.0;
  double kernel_max = 0.0;
};

struct TauCondition {
  bool satisfied = false;
  double rhs = 0.0;      // largest admissible tau
  double gp_term = 0.0;  // 2 beta n_x sqrt(2 L_k) sqrt(1 + N |K^{-1}| max k)
};

// tau <= min{1, [infsup / (2 (L_dx + L_ddx)(1 + L_f + gp_term))]^2}
TauCondition check_tau_condition(const TauConditionInputs& in);

// The same bound with gp_term = 0. A tau above it fails for every GP.
double tau_bound_without_gp(double infsup, const LipschitzBundle& lipschitz);

struct KSelection {
  SafetyIndexParams params;
  std::vector<double> upsilon;  // per dataset row
  double upsilon_max = 0.0;
  Index argmax = 0;
};

// sigma = 0, n = 1, k = (1 + margin) * max_i max{1, Upsilon_i} with
// Upsilon_i = (eta + d_i - d_i^+) / (d_dot_i^+ - d_dot_i - (L_dx + L_ddx)
// (tau + L_f tau + 2 beta sigma_tilde)), where ^+ marks the recorded next
// state. Throws Error if a denominator is not positive.
KSelection select_k(const Dataset& data, const MeasureFn& measure, double tau, const LipschitzBundle& lipschitz,
                    double beta, double sigma_tilde, double eta, double d_min, double margin = 0.01);

struct SynthesisConfig {
  SquaredExponential kernel;
  double delta = 0.01;
  double eta = 0.05;
  std::optional<double> d_min;                // environment default if unset
  std::optional<LipschitzBundle> lipschitz;   // environment bundle if unset
  double tau0 = 0.5;
  double shrink = 0.5;
  int max_attempts = 64;
  Index grid_cap = kDefaultGridCap;
  Index gp_size_cap = 6000;  // largest dataset the dense GP is fitted to
  ControlSamplerConfig sampler;
  DatasetControls dataset_controls = DatasetControls::first;
  PriorMean prior_mean = PriorMean::zero;
  double gamma_budget = 0.01;
  double k_margin = 0.01;
  Execution execution = Execution::parallel;
};

void to_json(nlohmann::json& j, const SynthesisConfig& c);
void from_json(const nlohmann::json& j, SynthesisConfig& c);

struct SynthesisAttempt {
  double tau = 0.0;
  Index grid_points = 0;
  Index dataset_size = 0;  // 0 when no dataset was built
  double infsup_lower_bound = 0.0;
  double tau_bound = 0.0;  // admissible tau found at this attempt
  std::string outcome;
};

void to_json(nlohmann::json& j, const SynthesisAttempt& a);
void from_json(const nlohmann::json& j, SynthesisAttempt& a);

struct SynthesisCertificate {
  std::string environment;
  double tau = 0.0;
  Index grid_points = 0;
  Index dataset_size = 0;
  double infsup_lower_bound = 0.0;
  double delta = 0.0;
  double beta_f = 0.0;
  double gamma = 0.0;
  double sigma_tilde = 0.0;
  double kernel_lipschitz = 0.0;
  double k_inv_frobenius = 0.0;
  double jitter = 0.0;
  double tau_condition_rhs = 0.0;
  bool tau_condition_ok = false;
  LipschitzBundle lipschitz;
  SafetyIndexParams params;
  double upsilon_max = 0.0;
  double l_phi = 0.0;
  std::vector<SynthesisAttempt> attempts;
};

void to_json(nlohmann::json& j, const SynthesisCertificate& c);
void from_json(const nlohmann::json& j, SynthesisCertificate& c);

// Everything fitted at one discretization step.
struct ModelBuild {
  Grid grid;
  InfSupEstimate infsup;
  DatasetBuild dataset;
  GpModel model;
  double sigma_tilde;
  TauCondition tau_condition;
};

// Discretize, estimate the inf-sup bound, build the dataset and fit the GP
// at a fixed tau, without requiring the tau condition to hold.
ModelBuild build_model(const Environment& env, double tau, const SynthesisConfig& config);

// Certificate fields of a fitted model under the given safety index. The
// upsilon and attempt fields are left for the caller.
SynthesisCertificate describe_build(const Environment& env, const SynthesisConfig& config, const ModelBuild& build,
                                    const SafetyIndexParams& params);

struct SynthesisResult {
  SynthesisCertificate certificate;
  ModelBuild build;
};

class SynthesisFailure : public Error {
 public:
  SynthesisFailure(const std::string& what, std::vector<SynthesisAttempt> attempts)
      : Error(what), attempts_(std::move(attempts)) {}
  const std::vector<SynthesisAttempt>& attempts() const { return attempts_; }

 private:
  std::vector<SynthesisAttempt> attempts_;
};

// Shrinks tau from tau0 until the tau condition holds, then selects k.
// Throws SynthesisFailure with the attempt history when the grid or GP size
// caps are reached first; AssumptionViolation propagates.
SynthesisResult synthesize(const Environment& env, const SynthesisConfig& config);

}  // namespace gpsafe
