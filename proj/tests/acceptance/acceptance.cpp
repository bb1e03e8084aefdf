// Acceptance suite: one line per criterion, exit status 0 only if all pass.

#include "gpsafe/rollout.hpp"
#include "gpsafe/synthesis.hpp"
#include "gpsafe/validation.hpp"

#include "../test_support.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace gpsafe;
using nlohmann::json;

namespace {

// Pinned thresholds.
constexpr Index kBoundQueries = 10000;
constexpr double kBoundSeconds = 60;
constexpr Index kCalibrationQueries = 10000;
constexpr double kCalibrationCoverage = 0.99;
constexpr double kCalibrationDelta = 0.01;
constexpr double kCalibrationSeconds = 120;
constexpr double kSynthesisKMin = 1.0;
constexpr double kSynthesisKMax = 20.0;
constexpr double kReferenceTau = 0.174;
constexpr double kReferenceTauBand = 1.5;  // "near" means within a factor of 1.5
constexpr Index kReferenceDatasetSize = 2516;
constexpr double kDatasetTolerance = 0.2;
constexpr double kSynthesisSeconds = 1800;
constexpr Index kRolloutSteps = 2000;
constexpr int kFigureRollouts = 2;
constexpr double kRolloutSeconds = 300;
constexpr int kFeasibilitySamples = 100;
constexpr double kLowGain = 0.1;
constexpr double kFeasibilitySeconds = 900;
constexpr int kInvarianceSeeds = 20;
constexpr double kInvarianceSeconds = 1200;
constexpr double kAblationTauStar = 1.2;
constexpr double kAblationSeconds = 1800;
constexpr double kOracleTolerance = 1e-8;
constexpr int kProjectionQueries = 100;
constexpr int kBruteForceResolution = 201;
constexpr double kProjectionSlack = 1.05;
constexpr double kOracleSeconds = 300;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return json::parse(in);
}

// The arm application setup from configs/arm.json, fitted once.
struct ArmSetup {
  json config;
  std::unique_ptr<Environment> env;
  SynthesisConfig synthesis;
  double tau = 0.0;
  SafetyIndexParams params;
  SafeguardConfig safeguard;
  std::optional<ModelBuild> build;

  double l_phi(const SafetyIndexParams& p) const {
    const LipschitzBundle l = env->lipschitz();
    return safety_index_lipschitz(p, l.distance, l.distance_rate, env->max_distance());
  }
};

ArmSetup load_arm() {
  ArmSetup s;
  s.config = read_json(std::string(GPSAFE_CONFIG_DIR) + "/arm.json");
  s.env = make_environment(s.config.at("environment"));
  s.synthesis = s.config.at("synthesis").get<SynthesisConfig>();
  s.tau = s.config.at("application").at("tau").get<double>();
  s.params = s.config.at("application").at("params").get<SafetyIndexParams>();
  s.safeguard = s.config.value("safeguard", SafeguardConfig{});
  s.safeguard.seed = s.config.value("seed", std::uint64_t{0});
  s.build.emplace(build_model(*s.env, s.tau, s.synthesis));
  return s;
}

Outcome bound_soundness(const ArmSetup& arm) {
  Rng rng(1);
  const Box domain = arm.env->joint_box();
  const SuiteResult var = check_variance_bound(arm.build->model, domain, arm.tau, kBoundQueries, rng);
  const SuiteResult mean = check_mean_bound(arm.build->model, domain, arm.tau, kBoundQueries, rng);
  return {var.violations == 0 && mean.violations == 0,
          fmt("arm model N=%ld tau=%g: variance %ld/%ld violations (worst margin %.3g), mean %ld/%ld (worst margin %.3g)",
              long(arm.build->model.size()), arm.tau, long(var.violations), long(var.queries), var.worst_margin,
              long(mean.violations), long(mean.queries), mean.worst_margin)};
}

Outcome calibration() {
  // GP fitted directly to a grid of transitions of a random smooth field,
  // with three controls per state.
  SmoothFieldConfig fc;
  fc.control_gain = 10.0;
  const SmoothField field(fc);
  const int per_dim = 8;
  Dataset data(2, 1);
  for (int i = 0; i < per_dim; ++i) {
    for (int j = 0; j < per_dim; ++j) {
      for (double u : {-1.0, 0.0, 1.0}) {
        const Vector x = Eigen::Vector2d(-1 + 2.0 * (i + 0.5) / per_dim, -1 + 2.0 * (j + 0.5) / per_dim);
        data.add(x, Vector::Constant(1, u), field.step(x, Vector::Constant(1, u)));
      }
    }
  }
  SquaredExponential kernel;
  kernel.signal_variance = std::pow(fc.dt * fc.amplitude, 2);
  kernel.lengthscale = fc.lengthscale;
  GpFitOptions opt;
  opt.delta = kCalibrationDelta;
  opt.input_domain = field.joint_box();
  opt.dynamics_lipschitz = field.lipschitz().dynamics;
  opt.prior_mean = PriorMean::state;
  opt.grid_tau = 2.0 / per_dim;
  const GpModel base = GpModel::fit(kernel, data, opt);

  // Internal covering radius: halve until gamma is at most 1% of the median
  // beta sigma_f over the query box.
  Rng probe(7);
  std::vector<double> scale;
  for (int q = 0; q < 2000; ++q) scale.push_back(base.beta() * base.predict_joint(probe.uniform(field.joint_box())).sigma);
  std::nth_element(scale.begin(), scale.begin() + scale.size() / 2, scale.end());
  const double median = scale[scale.size() / 2];
  double tau = opt.grid_tau;
  GpModel model = base;
  for (int it = 0; it < 80; ++it) {
    opt.error_bound_tau = tau;
    model = GpModel::fit(kernel, data, opt);
    if (model.gamma() <= 0.01 * median) break;
    tau *= 0.5;
  }

  Rng rng(8);
  const SuiteResult s = check_calibration(model, field, kCalibrationQueries, rng);
  // Same queries with gamma = 0, as a diagnostic.
  Rng again(8);
  Index inside = 0;
  for (Index q = 0; q < kCalibrationQueries; ++q) {
    const Vector w = again.uniform(field.joint_box());
    const Prediction p = model.predict_joint(w);
    if ((field.step(w.head(2), w.tail(1)) - p.mean).lpNorm<1>() <= model.beta() * p.sigma) ++inside;
  }
  return {s.coverage >= kCalibrationCoverage,
          fmt("smooth field N=%ld delta=%g: coverage %.4f (need %.2f) with beta=%.3f gamma=%.3g (tau=%.3g); "
              "coverage with gamma=0: %.4f",
              long(model.size()), kCalibrationDelta, s.coverage, kCalibrationCoverage, model.beta(), model.gamma(),
              tau, double(inside) / double(kCalibrationQueries))};
}

Outcome synthesis_reproduction() {
  const json config = read_json(std::string(GPSAFE_CONFIG_DIR) + "/arm_strict.json");
  const auto env = make_environment(config.at("environment"));
  const Index reference_grid = grid_size(env->state_box(), kReferenceTau);
  try {
    const SynthesisResult r = synthesize(*env, config.at("synthesis").get<SynthesisConfig>());
    const SynthesisCertificate& c = r.certificate;
    const bool near = c.tau >= kReferenceTau / kReferenceTauBand && c.tau <= kReferenceTau * kReferenceTauBand;
    const bool size_ok = !near || std::abs(double(c.dataset_size) - double(kReferenceDatasetSize)) <=
                                      kDatasetTolerance * double(kReferenceDatasetSize);
    const bool ok = c.params.sigma == 0.0 && c.params.n == 1.0 && c.params.k >= kSynthesisKMin &&
                    c.params.k <= kSynthesisKMax && size_ok;
    return {ok, fmt("certificate tau=%g k=%.4g dataset=%ld (reference %ld within %.0f%% near tau=%g: %s)", c.tau,
                    c.params.k, long(c.dataset_size), long(kReferenceDatasetSize), 100 * kDatasetTolerance,
                    kReferenceTau, near ? (size_ok ? "ok" : "off") : "not applicable")};
  } catch (const SynthesisFailure& e) {
    std::ostringstream os;
    os << "no certificate; attempts:";
    for (const SynthesisAttempt& a : e.attempts()) {
      os << " [tau=" << a.tau << " grid=" << a.grid_points << " infsup_lb=" << a.infsup_lower_bound << "]";
    }
    os << "; " << e.what() << "; grid at tau=" << kReferenceTau << " has " << reference_grid << " points";
    return {false, os.str()};
  }
}

struct RolloutTotals {
  Index steps = 0;
  Index bound_violations = 0;
  Index unsafe_controls = 0;
  Index fallbacks = 0;
  Index positive_phi = 0;
  Index below_d_min = 0;
  double max_phi = -std::numeric_limits<double>::infinity();
  double min_distance = std::numeric_limits<double>::infinity();

  void add(const RolloutSummary& s) {
    steps += s.steps;
    bound_violations += s.bound_violations;
    unsafe_controls += s.unsafe_controls;
    fallbacks += s.fallbacks;
    positive_phi += s.positive_phi;
    below_d_min += s.below_d_min;
    max_phi = std::max(max_phi, s.max_phi);
    min_distance = std::min(min_distance, s.min_distance);
  }
};

RolloutTotals safeguarded_rollouts(const ArmSetup& arm, std::uint64_t seed, int runs) {
  const json rc = arm.config.value("rollout", json::object());
  const Index hold = rc.value("hold", Index{1});
  const double phi_min = rc.value("phi_min", -0.3);
  const SafetyBound bound(arm.build->model, arm.params, arm.env->measure_fn(), arm.l_phi(arm.params));
  const Safeguard safeguard(bound, arm.env->control_box(), arm.safeguard);
  RolloutTotals totals;
  for (int r = 0; r < runs; ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    const Vector x0 = sample_safe_state(*arm.env, arm.params, rng, phi_min, 0.0);
    const Policy policy =
        uniform_random_policy(arm.env->control_box(), mix_seed(seed, 1000 + static_cast<std::uint64_t>(r)), hold);
    totals.add(summarize_trace(*arm.env, arm.params, rollout(*arm.env, policy, &safeguard, arm.params, x0, kRolloutSteps)));
  }
  return totals;
}

Outcome figure_rollouts(const ArmSetup& arm) {
  const RolloutTotals t = safeguarded_rollouts(arm, arm.safeguard.seed, kFigureRollouts);
  return {t.bound_violations == 0 && t.unsafe_controls == 0,
          fmt("%d x %ld steps: phi_next > U_f at %ld steps, U_f >= threshold at %ld steps, %ld fallbacks, max phi %.4f",
              kFigureRollouts, long(kRolloutSteps), long(t.bound_violations), long(t.unsafe_controls),
              long(t.fallbacks), t.max_phi)};
}

Outcome feasibility(const ArmSetup& arm) {
  const json fc_json = arm.config.value("feasibility", json::object());
  FeasibilityConfig fc;
  fc.cells = fc_json.value("cells", std::vector<Index>{10, 10});
  fc.samples_per_cell = kFeasibilitySamples;
  fc.seed = arm.safeguard.seed;
  auto count = [&](const SafetyIndexParams& p) {
    const SafetyBound bound(arm.build->model, p, arm.env->measure_fn(), arm.l_phi(p));
    const Safeguard safeguard(bound, arm.env->control_box(), arm.safeguard);
    return feasibility_map(*arm.env, safeguard, fc).total();
  };
  SafetyIndexParams low = arm.params;
  low.k = kLowGain;
  const int at_k = count(arm.params), at_low = count(low);
  Index samples = fc.samples_per_cell;
  for (Index c : fc.cells) samples *= c;
  return {at_k == 0 && at_low > 0, fmt("k=%.3g: %d of %ld infeasible (need 0); k=%.3g: %d of %ld infeasible (need > 0)",
                                       arm.params.k, at_k, long(samples), kLowGain, at_low, long(samples))};
}

Outcome forward_invariance(const ArmSetup& arm) {
  const RolloutTotals t = safeguarded_rollouts(arm, 6, kInvarianceSeeds);
  return {t.positive_phi == 0 && t.below_d_min == 0 && t.fallbacks == 0,
          fmt("%d seeds x %ld steps: phi > 0 at %ld steps, d < d_min at %ld steps, %ld fallbacks, %ld bound "
              "violations; max phi %.4f, min d %.4f",
              kInvarianceSeeds, long(kRolloutSteps), long(t.positive_phi), long(t.below_d_min), long(t.fallbacks),
              long(t.bound_violations), t.max_phi, t.min_distance)};
}

Outcome ablation(const ArmSetup& arm) {
  // Fixed unfiltered trajectory; each model is scored on the same steps.
  Rng rng(3);
  Vector x0;
  do {
    x0 = rng.uniform(arm.env->state_box());
  } while (safety_index(arm.params, arm.env->measure(x0)) > 0.0);
  const auto trace = rollout(*arm.env, uniform_random_policy(arm.env->control_box(), 5, 100), nullptr, arm.params, x0,
                             kRolloutSteps);
  std::vector<double> gaps;
  std::ostringstream os;
  bool monotone = true;
  for (double f : {1.0, 7.0 / 8.0, 0.5, 3.0 / 8.0}) {
    const double tau = f * kAblationTauStar;
    const ModelBuild b = build_model(*arm.env, tau, arm.synthesis);
    const SafetyBound bound(b.model, arm.params, arm.env->measure_fn(), arm.l_phi(arm.params));
    double gap = 0.0;
    Index unsound = 0;
    for (const TraceRecord& r : trace) {
      const double u_f = bound.upper_bound(r.state, r.u);
      gap += u_f - r.phi_next;
      if (r.phi_next > u_f) ++unsound;
    }
    gap /= double(trace.size());
    if (!gaps.empty() && gap > gaps.back()) monotone = false;
    gaps.push_back(gap);
    os << " tau=" << tau << " N=" << b.model.size() << " gap=" << gap << " unsound=" << unsound << ";";
  }
  return {monotone, "mean U_f - phi_next as tau decreases:" + os.str()};
}

Outcome oracles(const ArmSetup& arm) {
  using namespace gpsafe::testing;
  // Relative error with a unit floor on the reference magnitude.
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  double worst_mean = 0.0, worst_sigma = 0.0;
  for (Index n : {10, 25, 50}) {
    Rng rng(static_cast<std::uint64_t>(n));
    GpFitOptions opt = toy_fit_options();
    opt.prior_mean = PriorMean::state;
    const GpModel m = GpModel::fit(toy_kernel(0.5, 0.3), random_dataset(n, rng), opt);
    for (int q = 0; q < 100; ++q) {
      const Vector w = rng.uniform(toy_joint_box());
      const Prediction p = m.predict_joint(w);
      const DirectPosterior d = direct_posterior(m, w);
      for (Index j = 0; j < d.mean.size(); ++j) worst_mean = std::max(worst_mean, rel(p.mean(j), d.mean(j)));
      const double sigma = double(m.state_dim()) * std::sqrt(std::max(0.0, d.variance));
      worst_sigma = std::max(worst_sigma, rel(p.sigma, sigma));
    }
  }
  const bool gp_ok = worst_mean <= kOracleTolerance && worst_sigma <= kOracleTolerance;

  // Safeguard projection against a brute-force control grid, on references
  // that fail the safe-control test.
  const SafetyBound bound(arm.build->model, arm.params, arm.env->measure_fn(), arm.l_phi(arm.params));
  const Safeguard safeguard(bound, arm.env->control_box(), arm.safeguard);
  const Box& cbox = arm.env->control_box();
  Rng rng(11);
  int checked = 0, within = 0;
  double worst_ratio = 0.0;
  for (int attempt = 0; attempt < 100 * kProjectionQueries && checked < kProjectionQueries; ++attempt) {
    const Vector x = sample_safe_state(*arm.env, arm.params, rng, -0.1, 0.0);
    const Vector u_ref = rng.uniform(cbox);
    const StateSafetyBound sb(bound, x);
    if (sb.upper_bound(u_ref) < sb.threshold()) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < kBruteForceResolution; ++a) {
      for (int b = 0; b < kBruteForceResolution; ++b) {
        Vector u(2);
        u(0) = cbox.lower()(0) + cbox.sides()(0) * a / (kBruteForceResolution - 1);
        u(1) = cbox.lower()(1) + cbox.sides()(1) * b / (kBruteForceResolution - 1);
        const double dist = (u - u_ref).norm();
        if (dist < best && sb.upper_bound(u) < sb.threshold()) best = dist;
      }
    }
    if (!std::isfinite(best)) continue;
    ++checked;
    const SafeguardResult r = safeguard.project(x, u_ref);
    const double ratio = (r.control - u_ref).norm() / best;
    worst_ratio = std::max(worst_ratio, ratio);
    if (r.status == SafeguardStatus::projected && r.upper_bound < r.threshold && ratio <= kProjectionSlack) ++within;
  }
  const bool sg_ok = checked == kProjectionQueries && within == checked;
  return {gp_ok && sg_ok,
          fmt("GP vs direct inverse (N<=50): worst mean rel err %.2g, sigma_f rel err %.2g (tol %.0e); safeguard "
              "within %.0f%% of %dx%d brute force on %d/%d queries (worst ratio %.4f)",
              worst_mean, worst_sigma, kOracleTolerance, 100 * (kProjectionSlack - 1), kBruteForceResolution,
              kBruteForceResolution, within, checked, worst_ratio)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, double limit, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limit) {
      o.passed = false;
      o.detail += fmt("; exceeded %.0f s", limit);
    }
    if (!o.passed) ++failures;
    std::cout << "criterion " << id << " " << (o.passed ? "PASS" : "FAIL") << " " << name << ": " << o.detail
              << fmt(" (%.1f s)", secs) << std::endl;
  };

  std::optional<ArmSetup> arm;
  try {
    arm.emplace(load_arm());
  } catch (const std::exception& e) {
    std::cout << "arm setup failed: " << e.what() << std::endl;
    return 1;
  }
  report(1, "bound soundness", kBoundSeconds, [&] { return bound_soundness(*arm); });
  report(2, "calibration", kCalibrationSeconds, [&] { return calibration(); });
  report(3, "synthesis reproduction", kSynthesisSeconds, [&] { return synthesis_reproduction(); });
  report(4, "safeguarded rollouts", kRolloutSeconds, [&] { return figure_rollouts(*arm); });
  report(5, "feasibility map", kFeasibilitySeconds, [&] { return feasibility(*arm); });
  report(6, "forward invariance", kInvarianceSeconds, [&] { return forward_invariance(*arm); });
  report(7, "ablation", kAblationSeconds, [&] { return ablation(*arm); });
  report(8, "oracle equivalence", kOracleSeconds, [&] { return oracles(*arm); });
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail") << std::endl;
  return failures == 0 ? 0 : 1;
}
