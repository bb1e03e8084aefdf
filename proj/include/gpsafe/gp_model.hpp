#pragma once

#include "gpsafe/dataset.hpp"
#include "gpsafe/kernel.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gpsafe {

// Prior mean of the dynamics GP. With `state` the GP models the increment
// f(x, u) - x and the state is added back at prediction time.
enum class PriorMean { zero, state };

std::string to_string(PriorMean m);
PriorMean parse_prior_mean(const std::string& s);

struct Prediction {
  Vector mean;   // per state dimension
  double sigma;  // sigma_f: sum of per-dimension posterior standard deviations
};

// Constants of the uniform error bound |f_d - mu_d| <= beta * sigma_d + gamma_d.
struct ErrorBound {
  double beta = 0.0;            // square root of 2 log(M / delta)
  double gamma = 0.0;           // sum over state dimensions of gamma_d
  double tau = 0.0;             // covering radius used for M
  double log_covering = 0.0;    // log M
  double omega = 0.0;           // posterior-std modulus of continuity at tau
  Vector mean_lipschitz;        // per-dimension Lipschitz bound of the posterior mean
  double target_lipschitz = 0.0;  // of the regressed function, per dimension
};

// sum_d (mean_lipschitz_d + target_lipschitz) tau + beta omega, i.e. gamma
// at a given scale beta.
double error_gamma(const ErrorBound& b, double beta);

struct GpFitOptions {
  double delta = 0.01;
  Box input_domain;                 // joint (x, u) box; required for beta
  double dynamics_lipschitz = 1.0;  // L_f in the 1-norm
  PriorMean prior_mean = PriorMean::zero;
  // Covering radius of the training grid. The internal radius for beta is
  // shrunk until gamma <= gamma_budget * beta * sigma_tilde(grid_tau).
  double grid_tau = 0.0;
  double gamma_budget = 0.01;
  // Use this covering radius directly instead of the budget rule.
  std::optional<double> error_bound_tau;
  Execution execution = Execution::parallel;
};

class GpModel {
 public:
  static GpModel fit(const SquaredExponential& kernel, const Dataset& data, const GpFitOptions& options);

  Index size() const { return inputs_.rows(); }
  Index state_dim() const { return state_dim_; }
  Index control_dim() const { return control_dim_; }
  Index input_dim() const { return state_dim_ + control_dim_; }

  Prediction predict(const Vector& x, const Vector& u) const;
  Prediction predict_joint(const Vector& w) const;

  // Queries are rows [x u]. Means come back one row per query.
  void predict_batch(const Matrix& queries, Matrix& means, Vector& sigmas, Execution exec) const;

  const SquaredExponential& kernel() const { return kernel_; }
  PriorMean prior_mean() const { return prior_mean_; }
  const Matrix& inputs() const { return inputs_; }
  const Matrix& observations() const { return observations_; }  // next states
  const Matrix& targets() const { return targets_; }            // what the GP regresses
  const Matrix& alpha() const { return alpha_; }                // K^{-1} targets
  const Eigen::LLT<Matrix>& factorization() const { return llt_; }
  // Distinct training controls, and for each training row the index of its
  // control in that table.
  const Matrix& distinct_controls() const { return distinct_controls_; }
  const std::vector<Index>& control_group() const { return control_group_; }
  double jitter() const { return jitter_; }
  double kernel_lipschitz() const { return kernel_.lipschitz(); }
  double k_inv_frobenius() const { return k_inv_frobenius_; }
  Vector k_inv_y_norms() const { return alpha_.colwise().norm().transpose(); }
  double delta() const { return delta_; }
  double beta() const { return bound_.beta; }
  double gamma() const { return bound_.gamma; }
  const ErrorBound& error_bound() const { return bound_; }

  // Upper bound on the posterior std at a training input, from the jitter.
  double sigma_tolerance() const;

  // Copy with a different error-bound scale, gamma recomputed; used to
  // exercise validation.
  GpModel with_beta(double beta) const;

  nlohmann::json to_json() const;
  static GpModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static GpModel load(const std::string& path);

 private:
  GpModel() = default;
  void factorize(Execution exec, std::optional<double> fixed_jitter);
  void compute_k_inv_frobenius();
  void group_controls();

  SquaredExponential kernel_;
  PriorMean prior_mean_ = PriorMean::zero;
  Index state_dim_ = 0;
  Index control_dim_ = 0;
  Matrix inputs_;
  Matrix observations_;
  Matrix targets_;
  Matrix alpha_;
  Eigen::LLT<Matrix> llt_;
  Matrix distinct_controls_;
  std::vector<Index> control_group_;
  double jitter_ = 0.0;
  double k_inv_frobenius_ = 0.0;
  double delta_ = 0.0;
  ErrorBound bound_;
};

// Posterior at a fixed state as a function of the control. The kernel
// factors into a state part and a control part, so with m distinct training
// controls a query costs O(N m) after O(m N^2) setup. With many distinct
// controls it defers to the model's own predictor.
class StatePosterior {
 public:
  static constexpr Index kMaxGroups = 64;

  StatePosterior(const GpModel& model, const Vector& x);

  const Vector& state() const { return x_; }
  Prediction predict(const Vector& u) const;
  Vector predict_mean(const Vector& u) const;

 private:
  Vector control_weights(const Vector& u) const;

  const GpModel* model_;
  Vector x_;
  bool factored_ = false;
  Matrix w_;          // L^{-1} V, where V(i, g) = k((x, c_g), w_i) if row i has control g
  Matrix mean_coef_;  // V^T alpha
};

// sigma_tilde = n_x * sqrt(2 L_k tau + 2 N L_k tau |K^{-1}|_F max k).
double variance_upper_bound(const GpModel& model, double tau);

// Per-dimension bound on the posterior mean within tau (1-norm) of a
// training input: max_i y_i,d + sqrt(N) L_k tau |K^{-1} y_d|_2, plus tau
// for the state prior mean.
Vector mean_upper_bound(const GpModel& model, double tau);

// Uniform error constants on `domain` at covering radius tau. l_f bounds
// the 1-norm Lipschitz constant of f; it also bounds each component.
ErrorBound uniform_error_beta(const GpModel& model, const Box& domain, double delta, double tau, double l_f);

}  // namespace gpsafe
