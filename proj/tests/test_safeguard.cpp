#include "gpsafe/rollout.hpp"
#include "gpsafe/synthesis.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

using namespace gpsafe;

namespace {

// Arm model at the application discretization, shared by the suite.
class ArmSafeguard : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    arm_ = std::make_unique<PlanarArm>();
    SynthesisConfig cfg;
    cfg.kernel.signal_variance = 1e-6;
    cfg.kernel.lengthscale = 1.0;
    cfg.kernel.input_scale = Vector(6);
    cfg.kernel.input_scale << 3, 3, 0.2, 0.2, 0.05, 0.05;
    cfg.prior_mean = PriorMean::state;
    cfg.dataset_controls = DatasetControls::all;
    build_ = std::make_unique<ModelBuild>(build_model(*arm_, 0.6, cfg));
    params_.k = 2.54;
    const LipschitzBundle l = arm_->lipschitz();
    const double l_phi = safety_index_lipschitz(params_, l.distance, l.distance_rate, arm_->max_distance());
    bound_ = std::make_unique<SafetyBound>(build_->model, params_, arm_->measure_fn(), l_phi);
    safeguard_ = std::make_unique<Safeguard>(*bound_, arm_->control_box());
  }
  static void TearDownTestSuite() {
    safeguard_.reset();
    bound_.reset();
    build_.reset();
    arm_.reset();
  }

  static std::unique_ptr<PlanarArm> arm_;
  static std::unique_ptr<ModelBuild> build_;
  static SafetyIndexParams params_;
  static std::unique_ptr<SafetyBound> bound_;
  static std::unique_ptr<Safeguard> safeguard_;
};

std::unique_ptr<PlanarArm> ArmSafeguard::arm_;
std::unique_ptr<ModelBuild> ArmSafeguard::build_;
SafetyIndexParams ArmSafeguard::params_;
std::unique_ptr<SafetyBound> ArmSafeguard::bound_;
std::unique_ptr<Safeguard> ArmSafeguard::safeguard_;

}  // namespace

TEST_F(ArmSafeguard, StateBoundMatchesPointwiseBound) {
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const Vector x = rng.uniform(arm_->state_box());
    const StateSafetyBound sb(*bound_, x);
    EXPECT_EQ(sb.threshold(), bound_->threshold(x));
    EXPECT_EQ(sb.threshold(), std::max(0.0, bound_->phi(x) - params_.eta));
    for (int q = 0; q < 10; ++q) {
      const Vector u = rng.uniform(arm_->control_box());
      const UpperBoundTerms a = sb.terms(u), b = bound_->terms(x, u);
      EXPECT_NEAR(a.value, b.value, 1e-9);
      EXPECT_NEAR(a.value, a.phi_mean + a.margin, 1e-15);
      EXPECT_GE(a.value, a.phi_mean);
      const auto below = sb.upper_bound_if_below(u, sb.threshold());
      EXPECT_EQ(below.has_value(), a.value < sb.threshold());
    }
  }
}

TEST_F(ArmSafeguard, KeepsSafeReference) {
  Rng rng(2);
  int checked = 0;
  for (int i = 0; i < 200 && checked < 10; ++i) {
    const Vector x = sample_safe_state(*arm_, params_, rng, -0.3, 0.0);
    const Vector u = rng.uniform(arm_->control_box());
    if (!bound_->is_safe(x, u)) continue;
    const SafeguardResult r = safeguard_->project(x, u);
    EXPECT_EQ(r.status, SafeguardStatus::nominal_safe);
    EXPECT_EQ(r.control, u);
    EXPECT_EQ(r.evaluations, 1);
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

// Against a 201 x 201 brute-force scan of the control box: the projected
// control is safe and no more than 5% farther than the nearest safe grid
// control.
TEST_F(ArmSafeguard, ProjectionMatchesBruteForce) {
  Rng rng(3);
  int checked = 0;
  for (int i = 0; i < 2000 && checked < 10; ++i) {
    const Vector x = sample_safe_state(*arm_, params_, rng, -0.1, 0.0);
    const Vector u_ref = rng.uniform(arm_->control_box());
    const StateSafetyBound sb(*bound_, x);
    if (sb.upper_bound(u_ref) < sb.threshold()) continue;
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 200; ++a) {
      for (int b = 0; b <= 200; ++b) {
        const Vector u = Eigen::Vector2d(-1 + 0.01 * a, -1 + 0.01 * b);
        const double dist = (u - u_ref).norm();
        if (dist < best && sb.upper_bound(u) < sb.threshold()) best = dist;
      }
    }
    if (!std::isfinite(best)) continue;
    const SafeguardResult r = safeguard_->project(x, u_ref);
    ASSERT_EQ(r.status, SafeguardStatus::projected);
    EXPECT_LT(r.upper_bound, r.threshold);
    EXPECT_NEAR(r.upper_bound, bound_->upper_bound(x, r.control), 1e-9);
    EXPECT_TRUE(arm_->control_box().contains(r.control, 1e-12));
    EXPECT_LE((r.control - u_ref).norm(), 1.05 * best) << "state " << x.transpose();
    ++checked;
  }
  EXPECT_EQ(checked, 10);
}

TEST_F(ArmSafeguard, DeterministicForAFixedSeed) {
  Rng rng(4);
  const Vector x = sample_safe_state(*arm_, params_, rng, -0.05, 0.0);
  const Vector u = Eigen::Vector2d(1.0, 1.0);
  const Safeguard other(*bound_, arm_->control_box());
  const SafeguardResult a = safeguard_->project(x, u), b = other.project(x, u);
  EXPECT_EQ(a.control, b.control);
  EXPECT_EQ(a.status, b.status);
  EXPECT_THROW(safeguard_->project(x, Vector::Zero(3)), InvalidArgument);
}

TEST_F(ArmSafeguard, FallbackReturnsScanArgmin) {
  // Above phi = eta the threshold is phi - eta; a state pushed hard toward
  // the wall has no safe control in one 1 ms step.
  const Vector x = Eigen::Vector4d(0.3, 0.05, 0.1, 0.1);
  ASSERT_GT(bound_->phi(x), params_.eta);
  ASSERT_FALSE(safeguard_->scan_has_safe(x));
  const SafeguardResult r = safeguard_->project(x, Eigen::Vector2d(0.5, 0.5));
  EXPECT_EQ(r.status, SafeguardStatus::infeasible_fallback);
  double lowest = std::numeric_limits<double>::infinity();
  for (const Vector& u : safeguard_->scan_controls()) lowest = std::min(lowest, bound_->upper_bound(x, u));
  EXPECT_NEAR(r.upper_bound, lowest, 1e-12);
  EXPECT_EQ(safeguard_->scan_controls().size(), 256u);
}

TEST_F(ArmSafeguard, RolloutIsDeterministicAndRoundTrips) {
  Rng rng(5);
  const Vector x0 = sample_safe_state(*arm_, params_, rng, -0.3, 0.0);
  const auto run = [&] {
    return rollout(*arm_, uniform_random_policy(arm_->control_box(), 9, 10), safeguard_.get(), params_, x0, 60);
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), 60u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].u, b[i].u);
    ASSERT_EQ(a[i].status, b[i].status);
    if (i + 1 < a.size()) {
      ASSERT_EQ(a[i + 1].state, arm_->step(a[i].state, a[i].u));
    }
  }
  const RolloutSummary s = summarize_trace(*arm_, params_, a);
  EXPECT_EQ(s.steps, 60);
  EXPECT_EQ(s.bound_violations, 0);
  EXPECT_EQ(s.unsafe_controls, 0);
  EXPECT_EQ(s.positive_phi, 0);
  EXPECT_EQ(s.below_d_min, 0);

  std::stringstream ss;
  write_trace_csv(ss, a, state_names(*arm_), control_names(*arm_));
  const std::string header = ss.str().substr(0, ss.str().find('\n'));
  EXPECT_EQ(header, "t,theta1,theta2,dtheta1,dtheta2,u1_ref,u2_ref,u1,u2,phi,phi_next,u_f,threshold,status");
  const auto back = read_trace_csv(ss, 4, 2);
  ASSERT_EQ(back.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(back[i].state, a[i].state);
    EXPECT_EQ(back[i].u, a[i].u);
    EXPECT_EQ(back[i].u_f, a[i].u_f);
    EXPECT_EQ(back[i].status, a[i].status);
  }
}

TEST_F(ArmSafeguard, FeasibilityMapShape) {
  FeasibilityConfig fc;
  fc.cells = {3, 2};
  fc.samples_per_cell = 4;
  const FeasibilityMap m = feasibility_map(*arm_, *safeguard_, fc);
  ASSERT_EQ(m.counts.size(), 6u);
  for (int c : m.counts) EXPECT_LE(c, 4);
  std::stringstream ss;
  write_feasibility_csv(ss, m);
  std::string line;
  int lines = 0;
  while (std::getline(ss, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 1);
  }
  EXPECT_EQ(lines, 3);
  fc.cells = {1, 1, 1, 1, 1};
  EXPECT_THROW(feasibility_map(*arm_, *safeguard_, fc), InvalidArgument);
}

TEST(Rollout, UnfilteredAndEmpty) {
  const DoubleIntegrator toy;
  SafetyIndexParams p;
  const Vector x0 = Eigen::Vector2d(0.2, 0.0);
  const auto t = rollout(toy, constant_policy(Vector::Constant(1, 50.0)), nullptr, p, x0, 5);
  ASSERT_EQ(t.size(), 5u);
  EXPECT_EQ(t[0].u(0), 20.0);  // clamped to the control box
  EXPECT_EQ(t[0].status, "unfiltered");
  EXPECT_TRUE(std::isnan(t[0].u_f));
  const RolloutSummary s = summarize_trace(toy, p, t);
  EXPECT_EQ(s.bound_violations, 0);
  EXPECT_EQ(s.fallbacks, 0);
  EXPECT_TRUE(rollout(toy, constant_policy(Vector::Zero(1)), nullptr, p, x0, 0).empty());
  const RolloutSummary e = summarize_trace(toy, p, {});
  const nlohmann::json j = e;
  EXPECT_TRUE(j.at("max_phi").is_null());
  EXPECT_THROW(rollout(toy, constant_policy(Vector::Zero(1)), nullptr, p, x0, -1), InvalidArgument);
}

TEST(Rollout, PolicyHoldsControls) {
  const Box box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
  const Policy p = uniform_random_policy(box, 3, 4);
  const Vector x = Vector::Zero(2);
  const Vector a = p(x, 0);
  EXPECT_EQ(p(x, 1), a);
  EXPECT_EQ(p(x, 3), a);
  EXPECT_NE(p(x, 4), a);
  EXPECT_THROW(uniform_random_policy(box, 3, 0), InvalidArgument);
}

TEST(Rollout, SampleSafeStateRespectsBounds) {
  const PlanarArm arm;
  SafetyIndexParams p;
  p.k = 2.54;
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const Vector x = sample_safe_state(arm, p, rng, -0.3, 0.0);
    const SafetyMeasure m = arm.measure(x);
    EXPECT_GE(m.d, p.d_min);
    EXPECT_LE(safety_index(p, m), 0.0);
    EXPECT_GE(safety_index(p, m), -0.3);
  }
  EXPECT_THROW(sample_safe_state(arm, p, rng, 50.0, 60.0, 100), Error);
}

TEST(Safeguard, StatusAndConfigJson) {
  for (auto s : {SafeguardStatus::nominal_safe, SafeguardStatus::projected, SafeguardStatus::infeasible_fallback}) {
    EXPECT_EQ(parse_safeguard_status(to_string(s)), s);
  }
  EXPECT_THROW(parse_safeguard_status("ok"), InvalidArgument);
  SafeguardConfig c;
  c.directions = 7;
  c.refine_rays = 2;
  const SafeguardConfig r = nlohmann::json(c).get<SafeguardConfig>();
  EXPECT_EQ(r.directions, 7);
  EXPECT_EQ(r.refine_rays, 2);
}
