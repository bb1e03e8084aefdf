#include "gpsafe/environment.hpp"

#include <cmath>
#include <numbers>

namespace gpsafe {

void to_json(nlohmann::json& j, const LipschitzBundle& b) {
  j = nlohmann::json{{"dynamics", b.dynamics},
                     {"distance", b.distance},
                     {"distance_rate", b.distance_rate},
                     {"delta_distance_rate", b.delta_distance_rate}};
}

void from_json(const nlohmann::json& j, LipschitzBundle& b) {
  b.dynamics = j.at("dynamics").get<double>();
  b.distance = j.at("distance").get<double>();
  b.distance_rate = j.at("distance_rate").get<double>();
  b.delta_distance_rate = j.at("delta_distance_rate").get<double>();
  if (b.dynamics < 0 || b.distance < 0 || b.distance_rate < 0 || b.delta_distance_rate < 0) {
    throw InvalidArgument("Lipschitz constants must be >= 0");
  }
}

MeasureFn Environment::measure_fn() const {
  return [this](const Vector& x) { return measure(x); };
}

double Environment::delta_distance_rate(const Vector& x, const Vector& u) const {
  return measure(step(x, u)).d_dot - measure(x).d_dot;
}

void to_json(nlohmann::json& j, const ArmConfig& c) {
  j = nlohmann::json{{"dt", c.dt},
                     {"link1", c.link1},
                     {"link2", c.link2},
                     {"wall_x", c.wall_x},
                     {"temperature", c.temperature},
                     {"max_rate", c.max_rate},
                     {"control_limit", c.control_limit},
                     {"d_min", c.d_min}};
}

void from_json(const nlohmann::json& j, ArmConfig& c) {
  const ArmConfig d;
  c.dt = j.value("dt", d.dt);
  c.link1 = j.value("link1", d.link1);
  c.link2 = j.value("link2", d.link2);
  c.wall_x = j.value("wall_x", d.wall_x);
  c.temperature = j.value("temperature", d.temperature);
  c.max_rate = j.value("max_rate", d.max_rate);
  c.control_limit = j.value("control_limit", d.control_limit);
  c.d_min = j.value("d_min", d.d_min);
}

Vector ArmState::to_vector() const { return Eigen::Vector4d(theta1, theta2, dtheta1, dtheta2); }

ArmState ArmState::from_vector(const Vector& v) {
  require_dim(v, 4, "arm state");
  return {v(0), v(1), v(2), v(3)};
}

PlanarArm::PlanarArm(ArmConfig config) : config_(config) {
  const auto& c = config_;
  if (!(c.dt > 0) || !(c.link1 > 0) || !(c.link2 > 0) || !(c.temperature > 0) || !(c.max_rate > 0) ||
      !(c.control_limit > 0) || !(c.d_min >= 0)) {
    throw InvalidArgument("arm configuration values must be positive");
  }
  const double pi = std::numbers::pi;
  state_box_ = Box(Eigen::Vector4d(0.0, 0.0, -c.max_rate, -c.max_rate),
                   Eigen::Vector4d(pi, 2.0 * pi, c.max_rate, c.max_rate));
  control_box_ = Box(Eigen::Vector2d::Constant(-c.control_limit), Eigen::Vector2d::Constant(c.control_limit));
}

Vector PlanarArm::step(const Vector& x, const Vector& u) const {
  require_dim(x, 4, "arm state");
  require_dim(u, 2, "arm control");
  require_finite(x, "arm state");
  require_finite(u, "arm control");
  const Vector uc = control_box_.clamp(u);
  Vector next(4);
  for (int i = 0; i < 2; ++i) {
    const double rate = std::clamp(x(2 + i) + config_.dt * uc(i), -config_.max_rate, config_.max_rate);
    next(2 + i) = rate;
    next(i) = std::clamp(x(i) + config_.dt * rate, state_box_.lower()(i), state_box_.upper()(i));
  }
  return next;
}

ArmGeometry PlanarArm::geometry(const Vector& x) const {
  require_dim(x, 4, "arm state");
  const double c1 = std::cos(x(0)), s1 = std::sin(x(0));
  const double c2 = std::cos(x(1)), s2 = std::sin(x(1));
  ArmGeometry g;
  g.elbow = config_.link1 * Eigen::Vector2d(c1, s1);
  g.tip = g.elbow + config_.link2 * Eigen::Vector2d(c2, s2);
  g.elbow_velocity = config_.link1 * x(2) * Eigen::Vector2d(-s1, c1);
  g.tip_velocity = g.elbow_velocity + config_.link2 * x(3) * Eigen::Vector2d(-s2, c2);
  return g;
}

SafetyMeasure PlanarArm::measure(const Vector& x) const {
  require_finite(x, "arm state");
  const ArmGeometry g = geometry(x);
  const double t = config_.temperature;
  const double a = g.elbow.x(), b = g.tip.x();
  const double m = std::max(a, b);
  const double ea = std::exp(t * (a - m)), eb = std::exp(t * (b - m));
  const double smooth_max = m + std::log(ea + eb) / t;
  const double wa = ea / (ea + eb), wb = eb / (ea + eb);
  return {config_.wall_x - smooth_max, -(wa * g.elbow_velocity.x() + wb * g.tip_velocity.x())};
}

LipschitzBundle PlanarArm::lipschitz() const {
  const auto& c = config_;
  LipschitzBundle b;
  // Column sums of the Jacobian of the clamped update.
  b.dynamics = std::max(1.0 + c.dt, c.dt + c.dt * c.dt);
  // |dd/dtheta1| <= l1, |dd/dtheta2| <= l2.
  b.distance = std::max(c.link1, c.link2);
  // d_dot = l1 sin(t1) w1 + w2 l2 sin(t2) w2' with the tip weight a logistic
  // function of T l2 cos(t2); its theta2 slope adds T l2 / 4.
  b.distance_rate = std::max({c.link1, c.link2, c.link1 * c.max_rate,
                              c.link2 * c.max_rate * (1.0 + c.temperature * c.link2 / 4.0)});
  b.delta_distance_rate = b.distance_rate * (b.dynamics + 1.0);
  return b;
}

double PlanarArm::max_distance() const { return config_.wall_x + config_.link1; }

void to_json(nlohmann::json& j, const DoubleIntegratorConfig& c) {
  j = nlohmann::json{{"dt", c.dt},          {"position_min", c.position_min}, {"position_max", c.position_max},
                     {"max_speed", c.max_speed}, {"max_accel", c.max_accel},   {"wall", c.wall},
                     {"d_min", c.d_min}};
}

void from_json(const nlohmann::json& j, DoubleIntegratorConfig& c) {
  const DoubleIntegratorConfig d;
  c.dt = j.value("dt", d.dt);
  c.position_min = j.value("position_min", d.position_min);
  c.position_max = j.value("position_max", d.position_max);
  c.max_speed = j.value("max_speed", d.max_speed);
  c.max_accel = j.value("max_accel", d.max_accel);
  c.wall = j.value("wall", d.wall);
  c.d_min = j.value("d_min", d.d_min);
}

DoubleIntegrator::DoubleIntegrator(DoubleIntegratorConfig config) : config_(config) {
  const auto& c = config_;
  if (!(c.dt > 0) || !(c.max_speed > 0) || !(c.max_accel > 0) || !(c.position_max > c.position_min) ||
      !(c.wall >= c.position_max) || !(c.d_min >= 0)) {
    throw InvalidArgument("invalid double integrator configuration");
  }
  state_box_ = Box(Eigen::Vector2d(c.position_min, -c.max_speed), Eigen::Vector2d(c.position_max, c.max_speed));
  control_box_ = Box(Vector::Constant(1, -c.max_accel), Vector::Constant(1, c.max_accel));
}

Vector DoubleIntegrator::step(const Vector& x, const Vector& u) const {
  require_dim(x, 2, "double integrator state");
  require_dim(u, 1, "double integrator control");
  require_finite(x, "double integrator state");
  require_finite(u, "double integrator control");
  const double a = std::clamp(u(0), -config_.max_accel, config_.max_accel);
  const double v = x(1) + config_.dt * a;
  return Eigen::Vector2d(x(0) + config_.dt * v, v);
}

SafetyMeasure DoubleIntegrator::measure(const Vector& x) const {
  require_dim(x, 2, "double integrator state");
  return {config_.wall - x(0), -x(1)};
}

LipschitzBundle DoubleIntegrator::lipschitz() const {
  const double dt = config_.dt;
  LipschitzBundle b;
  b.dynamics = std::max(1.0 + dt, dt + dt * dt);
  b.distance = 1.0;
  b.distance_rate = 1.0;
  b.delta_distance_rate = 0.0;  // d_dot(f) - d_dot = -dt a does not depend on x
  return b;
}

double DoubleIntegrator::max_distance() const { return config_.wall - config_.position_min; }

void to_json(nlohmann::json& j, const SmoothFieldConfig& c) {
  j = nlohmann::json{{"seed", c.seed},           {"features", c.features}, {"lengthscale", c.lengthscale},
                     {"amplitude", c.amplitude}, {"dt", c.dt},             {"d_min", c.d_min},
                     {"control_gain", c.control_gain}};
}

void from_json(const nlohmann::json& j, SmoothFieldConfig& c) {
  const SmoothFieldConfig d;
  c.seed = j.value("seed", d.seed);
  c.features = j.value("features", d.features);
  c.lengthscale = j.value("lengthscale", d.lengthscale);
  c.amplitude = j.value("amplitude", d.amplitude);
  c.dt = j.value("dt", d.dt);
  c.d_min = j.value("d_min", d.d_min);
  c.control_gain = j.value("control_gain", d.control_gain);
}

SmoothField::SmoothField(SmoothFieldConfig config) : config_(config) {
  const auto& c = config_;
  if (c.features < 1 || !(c.lengthscale > 0) || !(c.amplitude >= 0) || !(c.dt > 0) || !(c.d_min >= 0) ||
      !(c.control_gain >= 0)) {
    throw InvalidArgument("invalid smooth field configuration");
  }
  state_box_ = Box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
  control_box_ = Box(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0));
  Rng rng(c.seed);
  omega_.resize(c.features, 3);
  phase_.resize(c.features);
  coefficients_.resize(2, c.features);
  for (int m = 0; m < c.features; ++m) {
    for (Index j = 0; j < 3; ++j) omega_(m, j) = rng.normal() / c.lengthscale;
    phase_(m) = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (Index d = 0; d < 2; ++d) {
    for (int m = 0; m < c.features; ++m) coefficients_(d, m) = rng.normal();
  }
  const double scale = c.amplitude * std::sqrt(2.0 / c.features);
  const Vector omega_max = omega_.cwiseAbs().rowwise().maxCoeff();
  field_lipschitz_ = scale * (coefficients_.cwiseAbs() * omega_max);
}

Vector SmoothField::field(const Vector& w) const {
  require_dim(w, 3, "smooth field input");
  const Vector features = ((omega_ * w) + phase_).array().cos().matrix();
  return config_.amplitude * std::sqrt(2.0 / config_.features) * (coefficients_ * features);
}

Vector SmoothField::step(const Vector& x, const Vector& u) const {
  require_dim(x, 2, "smooth field state");
  require_dim(u, 1, "smooth field control");
  require_finite(x, "smooth field state");
  require_finite(u, "smooth field control");
  Vector g = field(Eigen::Vector3d(x(0), x(1), u(0)));
  g(1) -= config_.control_gain * u(0);
  return x + config_.dt * g;
}

SafetyMeasure SmoothField::measure(const Vector& x) const {
  require_dim(x, 2, "smooth field state");
  return {2.0 - x(0), -x(1)};
}

LipschitzBundle SmoothField::lipschitz() const {
  LipschitzBundle b;
  b.dynamics = 1.0 + config_.dt * (field_lipschitz_.sum() + config_.control_gain);
  b.distance = 1.0;
  b.distance_rate = 1.0;
  b.delta_distance_rate = config_.dt * field_lipschitz_(1);
  return b;
}

std::unique_ptr<Environment> make_environment(const nlohmann::json& j) {
  const std::string name = j.at("name").get<std::string>();
  const nlohmann::json cfg = j.value("config", nlohmann::json::object());
  if (name == "planar_arm") return std::make_unique<PlanarArm>(cfg.get<ArmConfig>());
  if (name == "double_integrator") return std::make_unique<DoubleIntegrator>(cfg.get<DoubleIntegratorConfig>());
  if (name == "smooth_field") return std::make_unique<SmoothField>(cfg.get<SmoothFieldConfig>());
  throw InvalidArgument("unknown environment '" + name + "'");
}

}  // namespace gpsafe
