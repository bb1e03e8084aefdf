#include "gpsafe/safety_index.hpp"

#include <cmath>
#include <fstream>

namespace gpsafe {

void SafetyIndexParams::validate() const {
  if (!std::isfinite(sigma) || sigma < 0.0) throw InvalidArgument("safety index sigma must be >= 0");
  if (!std::isfinite(n) || n <= 0.0) throw InvalidArgument("safety index n must be > 0");
  if (!std::isfinite(k) || k <= 0.0) throw InvalidArgument("safety index k must be > 0");
  if (!std::isfinite(eta) || eta < 0.0) throw InvalidArgument("safety index eta must be >= 0");
  if (!std::isfinite(d_min) || d_min < 0.0) throw InvalidArgument("d_min must be >= 0");
}

void to_json(nlohmann::json& j, const SafetyIndexParams& p) {
  j = nlohmann::json{{"sigma", p.sigma}, {"n", p.n}, {"k", p.k}, {"eta", p.eta}, {"d_min", p.d_min}};
}

void from_json(const nlohmann::json& j, SafetyIndexParams& p) {
  SafetyIndexParams d;
  p.sigma = j.value("sigma", d.sigma);
  p.n = j.value("n", d.n);
  p.k = j.at("k").get<double>();
  p.eta = j.value("eta", d.eta);
  p.d_min = j.value("d_min", d.d_min);
  p.validate();
}

SafetyIndexParams load_params(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return nlohmann::json::parse(in).get<SafetyIndexParams>();
}

namespace {

double power(double base, double n, const char* what) {
  if (base < 0.0 && n != std::floor(n)) {
    throw InvalidArgument(std::string(what) + " is negative and the exponent n is fractional");
  }
  return std::pow(base, n);
}

}  // namespace

double safety_index(const SafetyIndexParams& p, const SafetyMeasure& m) {
  if (!std::isfinite(m.d) || !std::isfinite(m.d_dot)) throw InvalidArgument("safety measure is not finite");
  return p.sigma + power(p.d_min, p.n, "d_min") - power(m.d, p.n, "distance") - p.k * m.d_dot;
}

double safety_index_lipschitz(const SafetyIndexParams& p, double l_dx, double l_ddx, double d_max) {
  p.validate();
  if (l_dx < 0.0 || l_ddx < 0.0) throw InvalidArgument("Lipschitz constants must be >= 0");
  double slope;
  if (p.n >= 1.0) {
    slope = p.n * std::pow(d_max, p.n - 1.0);
  } else {
    if (!(p.d_min > 0.0)) throw InvalidArgument("fractional n needs d_min > 0");
    slope = p.n * std::pow(p.d_min, p.n - 1.0);
  }
  return std::max(slope, p.k) * (l_dx + l_ddx);
}

SafetyBound::SafetyBound(const GpModel& model, SafetyIndexParams params, MeasureFn measure, double l_phi)
    : model_(&model), params_(params), measure_(std::move(measure)), l_phi_(l_phi) {
  params_.validate();
  if (!(l_phi_ >= 0.0) || !std::isfinite(l_phi_)) throw InvalidArgument("L_phi must be finite and >= 0");
}

double SafetyBound::threshold(const Vector& x) const { return std::max(phi(x) - params_.eta, 0.0); }

UpperBoundTerms SafetyBound::terms(const Vector& x, const Vector& u) const {
  const Prediction p = model_->predict(x, u);
  UpperBoundTerms t;
  t.phi_mean = safety_index(params_, measure_(p.mean));
  t.sigma_f = p.sigma;
  t.margin = l_phi_ * model_->beta() * p.sigma;
  t.value = t.phi_mean + t.margin;
  return t;
}

StateSafetyBound::StateSafetyBound(const SafetyBound& bound, const Vector& x)
    : bound_(&bound), posterior_(bound.model(), x), threshold_(bound.threshold(x)) {}

UpperBoundTerms StateSafetyBound::terms(const Vector& u) const {
  const Prediction p = posterior_.predict(u);
  UpperBoundTerms t;
  t.phi_mean = bound_->phi(p.mean);
  t.sigma_f = p.sigma;
  t.margin = bound_->l_phi() * bound_->model().beta() * p.sigma;
  t.value = t.phi_mean + t.margin;
  return t;
}

std::optional<double> StateSafetyBound::upper_bound_if_below(const Vector& u, double threshold) const {
  if (!(bound_->phi(posterior_.predict_mean(u)) < threshold)) return std::nullopt;
  const double value = upper_bound(u);
  if (!(value < threshold)) return std::nullopt;
  return value;
}

}  // namespace gpsafe
