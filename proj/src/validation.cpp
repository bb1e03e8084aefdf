#include "gpsafe/validation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpsafe {

namespace {

constexpr std::size_t kMaxReported = 10;

class Tally {
 public:
  explicit Tally(std::string name) { result_.name = std::move(name); }

  void record(double bound, double value, const Vector& input) {
    ++result_.queries;
    const double margin = bound - value;
    worst_ = std::min(worst_, margin);
    if (!(margin >= 0.0)) {
      ++result_.violations;
      if (result_.violating.size() < kMaxReported) {
        result_.violating.emplace_back(input.data(), input.data() + input.size());
      }
    }
  }

  SuiteResult finish(double required_coverage) {
    result_.worst_margin = result_.queries > 0 ? worst_ : 0.0;
    result_.required_coverage = required_coverage;
    result_.coverage = result_.queries > 0
                           ? 1.0 - static_cast<double>(result_.violations) / static_cast<double>(result_.queries)
                           : 1.0;
    result_.passed = result_.coverage >= required_coverage;
    return result_;
  }

 private:
  SuiteResult result_;
  double worst_ = std::numeric_limits<double>::infinity();
};

}  // namespace

void to_json(nlohmann::json& j, const SuiteResult& r) {
  j = nlohmann::json{{"name", r.name},
                     {"passed", r.passed},
                     {"queries", r.queries},
                     {"violations", r.violations},
                     {"worst_margin", r.worst_margin},
                     {"coverage", r.coverage},
                     {"required_coverage", r.required_coverage},
                     {"violating", r.violating}};
}

void from_json(const nlohmann::json& j, SuiteResult& r) {
  r.name = j.at("name").get<std::string>();
  r.passed = j.at("passed").get<bool>();
  r.queries = j.at("queries").get<Index>();
  r.violations = j.at("violations").get<Index>();
  r.worst_margin = j.at("worst_margin").get<double>();
  r.coverage = j.at("coverage").get<double>();
  r.required_coverage = j.at("required_coverage").get<double>();
  r.violating = j.at("violating").get<std::vector<std::vector<double>>>();
}

bool ValidationReport::passed() const {
  return std::all_of(suites.begin(), suites.end(), [](const SuiteResult& s) { return s.passed; });
}

void to_json(nlohmann::json& j, const ValidationReport& r) {
  j = nlohmann::json{{"passed", r.passed()}, {"suites", r.suites}};
}

void from_json(const nlohmann::json& j, ValidationReport& r) {
  r.suites = j.at("suites").get<std::vector<SuiteResult>>();
}

Vector sample_near_training(const GpModel& model, const Box& domain, double tau, Rng& rng) {
  const Index i = static_cast<Index>(rng.next() % static_cast<std::uint64_t>(model.size()));
  const Index dim = model.input_dim();
  // Uniform direction on the 1-norm sphere (normalized exponentials with
  // random signs), scaled by a uniform radius.
  Vector e(dim);
  for (Index j = 0; j < dim; ++j) {
    const double g = -std::log(1.0 - rng.uniform());
    e(j) = rng.uniform() < 0.5 ? -g : g;
  }
  e *= tau * rng.uniform() / e.lpNorm<1>();
  return domain.clamp(model.inputs().row(i).transpose() + e);
}

SuiteResult check_variance_bound(const GpModel& model, const Box& domain, double tau, Index queries, Rng& rng) {
  const double bound = variance_upper_bound(model, tau);
  Tally tally("variance_bound");
  for (Index q = 0; q < queries; ++q) {
    const Vector w = sample_near_training(model, domain, tau, rng);
    tally.record(bound, model.predict_joint(w).sigma, w);
  }
  return tally.finish(1.0);
}

SuiteResult check_mean_bound(const GpModel& model, const Box& domain, double tau, Index queries, Rng& rng) {
  const Vector bound = mean_upper_bound(model, tau);
  Tally tally("mean_bound");
  for (Index q = 0; q < queries; ++q) {
    const Vector w = sample_near_training(model, domain, tau, rng);
    const Vector mean = model.predict_joint(w).mean;
    // One record per query: the tightest output dimension.
    tally.record(0.0, (mean - bound).maxCoeff(), w);
  }
  return tally.finish(1.0);
}

SuiteResult check_calibration(const GpModel& model, const Environment& env, Index queries, Rng& rng) {
  if (model.state_dim() != env.state_dim() || model.control_dim() != env.control_dim()) {
    throw InvalidArgument("calibration: model and environment dimensions differ");
  }
  const Box box = env.joint_box();
  Tally tally("calibration");
  for (Index q = 0; q < queries; ++q) {
    const Vector w = rng.uniform(box);
    const Vector x = w.head(env.state_dim());
    const Vector u = w.tail(env.control_dim());
    const Prediction p = model.predict(x, u);
    const double error = (env.step(x, u) - p.mean).lpNorm<1>();
    tally.record(model.beta() * p.sigma + model.gamma(), error, w);
  }
  return tally.finish(1.0 - model.delta());
}

SuiteResult check_lipschitz(const Environment& env, Index pairs, Rng& rng) {
  const LipschitzBundle l = env.lipschitz();
  const Box box = env.joint_box();
  const Index nx = env.state_dim();
  const Vector local = 1e-3 * box.sides();
  Tally tally("lipschitz");
  for (Index q = 0; q < pairs; ++q) {
    const Vector a = rng.uniform(box);
    Vector b(a.size());
    if (q % 2 == 0) {
      for (Index j = 0; j < a.size(); ++j) b(j) = a(j) + rng.uniform(-local(j), local(j));
      b = box.clamp(b);
    } else {
      b = rng.uniform(box);
    }
    const Vector xa = a.head(nx), xb = b.head(nx);
    const Vector ua = a.tail(env.control_dim()), ub = b.tail(env.control_dim());
    const double dw = (a - b).lpNorm<1>();
    const double dx = (xa - xb).lpNorm<1>();
    const SafetyMeasure ma = env.measure(xa), mb = env.measure(xb);
    Vector pair(2 * a.size());
    pair << a, b;
    // Relative slack absorbs rounding in the differences.
    auto record = [&](double constant, double dist, double diff) {
      tally.record(constant * dist * (1.0 + 1e-9) + 1e-12, std::abs(diff), pair);
    };
    record(l.dynamics, dw, (env.step(xa, ua) - env.step(xb, ub)).lpNorm<1>());
    record(l.distance, dx, ma.d - mb.d);
    record(l.distance_rate, dx, ma.d_dot - mb.d_dot);
    record(l.delta_distance_rate, dx, env.delta_distance_rate(xa, ua) - env.delta_distance_rate(xb, ua));
  }
  return tally.finish(1.0);
}

ValidationReport validate_model(const GpModel& model, const Environment& env, double tau,
                                const ValidationConfig& config) {
  const Box domain = env.joint_box();
  ValidationReport report;
  Rng rng(config.seed);
  report.suites.push_back(check_variance_bound(model, domain, tau, config.queries, rng));
  report.suites.push_back(check_mean_bound(model, domain, tau, config.queries, rng));
  report.suites.push_back(check_calibration(model, env, config.queries, rng));
  report.suites.push_back(check_lipschitz(env, config.lipschitz_pairs, rng));
  return report;
}

}  // namespace gpsafe
