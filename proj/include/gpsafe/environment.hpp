#pragma once

#include "gpsafe/safety_index.hpp"

#include <json.hpp>

#include <memory>
#include <string>

namespace gpsafe {

// Lipschitz constants, all in the 1-norm of their arguments.
struct LipschitzBundle {
  double dynamics = 0.0;             // L_f of (x, u) -> f(x, u)
  double distance = 0.0;             // L_dx of x -> d(x)
  double distance_rate = 0.0;        // L_ddx of x -> d_dot(x)
  double delta_distance_rate = 0.0;  // of x -> d_dot(f(x, u)) - d_dot(x), for every u
};

void to_json(nlohmann::json& j, const LipschitzBundle& b);
void from_json(const nlohmann::json& j, LipschitzBundle& b);

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual const Box& state_box() const = 0;
  virtual const Box& control_box() const = 0;
  virtual Vector step(const Vector& x, const Vector& u) const = 0;
  virtual SafetyMeasure measure(const Vector& x) const = 0;
  virtual LipschitzBundle lipschitz() const = 0;
  // Upper bound on d over the state box.
  virtual double max_distance() const = 0;
  virtual double default_d_min() const = 0;

  Index state_dim() const { return state_box().dim(); }
  Index control_dim() const { return control_box().dim(); }
  Box joint_box() const { return state_box().product(control_box()); }
  MeasureFn measure_fn() const;

  // d_dot(f(x, u)) - d_dot(x)
  double delta_distance_rate(const Vector& x, const Vector& u) const;
};

struct ArmConfig {
  double dt = 1e-3;
  double link1 = 1.0;
  double link2 = 1.0;
  double wall_x = 1.0;
  double temperature = 50.0;  // of the log-sum-exp smooth maximum
  double max_rate = 0.1;      // |theta_dot_i| bound
  double control_limit = 1.0;
  double d_min = 0.1;
};

void to_json(nlohmann::json& j, const ArmConfig& c);
void from_json(const nlohmann::json& j, ArmConfig& c);

struct ArmState {
  double theta1 = 0.0;
  double theta2 = 0.0;
  double dtheta1 = 0.0;
  double dtheta2 = 0.0;

  Vector to_vector() const;
  static ArmState from_vector(const Vector& v);
};

struct ArmGeometry {
  Eigen::Vector2d elbow;     // p1
  Eigen::Vector2d tip;       // p2
  Eigen::Vector2d elbow_velocity;
  Eigen::Vector2d tip_velocity;
};

// Planar two-link arm next to the wall x = wall_x. Both joint angles are
// measured from the world x axis. Integration is semi-implicit Euler with
// the velocities and angles clamped to the state box.
class PlanarArm : public Environment {
 public:
  explicit PlanarArm(ArmConfig config = {});

  std::string name() const override { return "planar_arm"; }
  const Box& state_box() const override { return state_box_; }
  const Box& control_box() const override { return control_box_; }
  Vector step(const Vector& x, const Vector& u) const override;
  SafetyMeasure measure(const Vector& x) const override;
  LipschitzBundle lipschitz() const override;
  double max_distance() const override;
  double default_d_min() const override { return config_.d_min; }

  const ArmConfig& config() const { return config_; }
  ArmGeometry geometry(const Vector& x) const;

 private:
  ArmConfig config_;
  Box state_box_;
  Box control_box_;
};

struct DoubleIntegratorConfig {
  double dt = 0.1;
  double position_min = 0.0;
  double position_max = 1.0;
  double max_speed = 0.5;
  double max_accel = 20.0;
  double wall = 1.2;
  double d_min = 0.1;
};

void to_json(nlohmann::json& j, const DoubleIntegratorConfig& c);
void from_json(const nlohmann::json& j, DoubleIntegratorConfig& c);

// 1-D point mass x = [p, v], u = [a], with d = wall - p. The update is not
// clamped: the state box only delimits the region that gets certified.
class DoubleIntegrator : public Environment {
 public:
  explicit DoubleIntegrator(DoubleIntegratorConfig config = {});

  std::string name() const override { return "double_integrator"; }
  const Box& state_box() const override { return state_box_; }
  const Box& control_box() const override { return control_box_; }
  Vector step(const Vector& x, const Vector& u) const override;
  SafetyMeasure measure(const Vector& x) const override;
  LipschitzBundle lipschitz() const override;
  double max_distance() const override;
  double default_d_min() const override { return config_.d_min; }

  const DoubleIntegratorConfig& config() const { return config_; }

 private:
  DoubleIntegratorConfig config_;
  Box state_box_;
  Box control_box_;
};

struct SmoothFieldConfig {
  std::uint64_t seed = 0;
  int features = 64;
  double lengthscale = 0.5;  // of the frequency distribution, in the raw input
  double amplitude = 1.0;
  double dt = 0.1;
  double d_min = 0.1;
  // Adds -control_gain * u to g_1. Above the sup of |g_1| every state has a
  // control that raises d_dot, so the field can go through synthesis.
  double control_gain = 0.0;
};

void to_json(nlohmann::json& j, const SmoothFieldConfig& c);
void from_json(const nlohmann::json& j, SmoothFieldConfig& c);

// Synthetic dynamics x+ = x + dt g(x, u) on x in [-1, 1]^2, u in [-1, 1],
// where each g_d is a random Fourier-feature sum
//   amplitude sqrt(2 / M) sum_m c_dm cos(omega_m . w + b_m),
// which approximates a draw from a squared-exponential GP with variance
// amplitude^2 and the configured lengthscale. Distance d = 2 - x_0 and
// d_dot = -x_1. All Lipschitz constants are exact sums over the features.
// control_gain optionally adds a linear control term to g_1.
class SmoothField : public Environment {
 public:
  explicit SmoothField(SmoothFieldConfig config = {});

  std::string name() const override { return "smooth_field"; }
  const Box& state_box() const override { return state_box_; }
  const Box& control_box() const override { return control_box_; }
  Vector step(const Vector& x, const Vector& u) const override;
  SafetyMeasure measure(const Vector& x) const override;
  LipschitzBundle lipschitz() const override;
  double max_distance() const override { return 3.0; }
  double default_d_min() const override { return config_.d_min; }

  const SmoothFieldConfig& config() const { return config_; }
  Vector field(const Vector& w) const;  // g(x, u)
  // 1-norm Lipschitz constant of each g_d.
  const Vector& field_lipschitz() const { return field_lipschitz_; }

 private:
  SmoothFieldConfig config_;
  Box state_box_;
  Box control_box_;
  Matrix omega_;         // features x 3
  Vector phase_;         // features
  Matrix coefficients_;  // 2 x features
  Vector field_lipschitz_;
};

// Builds an environment from {"name": ..., "config": {...}}.
std::unique_ptr<Environment> make_environment(const nlohmann::json& j);

}  // namespace gpsafe
