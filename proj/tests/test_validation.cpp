#include "gpsafe/validation.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace gpsafe;
using namespace gpsafe::testing;

namespace {

// Double integrator that understates one Lipschitz constant.
class UnderstatedIntegrator : public DoubleIntegrator {
 public:
  LipschitzBundle lipschitz() const override {
    LipschitzBundle b = DoubleIntegrator::lipschitz();
    b.dynamics *= 0.5;
    return b;
  }
};

GpModel field_model(const SmoothField& field, Index per_dim) {
  Dataset data(2, 1);
  const Box box = field.joint_box();
  for (Index i = 0; i < per_dim; ++i)
    for (Index j = 0; j < per_dim; ++j)
      for (double u : {-1.0, 0.0, 1.0}) {
        const Vector x = Eigen::Vector2d(-1 + 2.0 * (i + 0.5) / per_dim, -1 + 2.0 * (j + 0.5) / per_dim);
        data.add(x, Vector::Constant(1, u), field.step(x, Vector::Constant(1, u)));
      }
  GpFitOptions opt;
  opt.input_domain = box;
  opt.dynamics_lipschitz = field.lipschitz().dynamics;
  opt.prior_mean = PriorMean::state;
  opt.grid_tau = 0.25;
  SquaredExponential k;
  k.signal_variance = 0.01;
  k.lengthscale = 0.5;
  return GpModel::fit(k, data, opt);
}

}  // namespace

TEST(Validation, LipschitzSuiteCatchesAnUnderstatedConstant) {
  Rng rng(1);
  const SuiteResult ok = check_lipschitz(DoubleIntegrator(), 20000, rng);
  EXPECT_TRUE(ok.passed);
  EXPECT_EQ(ok.violations, 0);
  EXPECT_GE(ok.worst_margin, 0.0);
  const SuiteResult bad = check_lipschitz(UnderstatedIntegrator(), 20000, rng);
  EXPECT_FALSE(bad.passed);
  EXPECT_GT(bad.violations, 0);
  EXPECT_LT(bad.worst_margin, 0.0);
  EXPECT_LE(bad.violating.size(), 10u);
  EXPECT_EQ(bad.violating.front().size(), 6u);
}

TEST(Validation, NearTrainingSamplesStayWithinTau) {
  Rng rng(2);
  const GpModel m = GpModel::fit(toy_kernel(), random_dataset(20, rng), toy_fit_options());
  for (int i = 0; i < 2000; ++i) {
    const Vector w = sample_near_training(m, toy_joint_box(), 0.2, rng);
    double nearest = 1e300;
    for (Index r = 0; r < m.size(); ++r) nearest = std::min(nearest, (m.inputs().row(r).transpose() - w).lpNorm<1>());
    ASSERT_LE(nearest, 0.2 + 1e-12);
    ASSERT_TRUE(toy_joint_box().contains(w));
  }
}

TEST(Validation, CalibrationPassesAndFailsWithoutBeta) {
  SmoothFieldConfig c;
  c.control_gain = 10.0;
  const SmoothField field(c);
  const GpModel m = field_model(field, 8);
  Rng rng(3);
  const SuiteResult good = check_calibration(m, field, 5000, rng);
  EXPECT_TRUE(good.passed) << good.coverage;
  EXPECT_EQ(good.required_coverage, 1.0 - m.delta());
  const SuiteResult sabotaged = check_calibration(m.with_beta(0.0), field, 5000, rng);
  EXPECT_FALSE(sabotaged.passed) << sabotaged.coverage;
  EXPECT_THROW(check_calibration(m, PlanarArm(), 10, rng), InvalidArgument);
}

TEST(Validation, ReportJsonRoundTrip) {
  SmoothFieldConfig c;
  c.control_gain = 10.0;
  const SmoothField field(c);
  const GpModel m = field_model(field, 6);
  ValidationConfig vc;
  vc.queries = 500;
  vc.lipschitz_pairs = 2000;
  vc.seed = 4;
  const ValidationReport r = validate_model(m, field, 0.25, vc);
  ASSERT_EQ(r.suites.size(), 4u);
  EXPECT_EQ(r.suites[0].name, "variance_bound");
  EXPECT_EQ(r.suites[3].name, "lipschitz");
  const nlohmann::json j = r;
  EXPECT_EQ(j.at("passed").get<bool>(), r.passed());
  const ValidationReport back = j.get<ValidationReport>();
  ASSERT_EQ(back.suites.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(back.suites[i].violations, r.suites[i].violations);
    EXPECT_EQ(back.suites[i].worst_margin, r.suites[i].worst_margin);
    EXPECT_EQ(back.suites[i].violating, r.suites[i].violating);
  }
  const ValidationReport again = validate_model(m, field, 0.25, vc);
  EXPECT_EQ(nlohmann::json(again), j);
}
