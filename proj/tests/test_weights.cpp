#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "certpol/genmodel.hpp"
#include "certpol/weights.hpp"

using namespace certpol;

namespace {

const CovariateSchema kOne({{"x", FeatureKind::continuous, {}}});

Dataset make(const std::vector<Sample>& s, Source src = Source::observational) { return Dataset(kOne, src, s); }

AssignmentModel linear() {
  return AssignmentModel([](std::span<const double> x) { return 0.2 + 0.1 * x[0]; });
}

}  // namespace

TEST(Weights, ObservationalFormula) {
  const std::vector<double> x{2.0};  // p(A=1|x) = 0.4
  const MiscalibrationConfig g1{1.0, Source::observational}, g2{2.0, Source::observational};
  EXPECT_NEAR(obs_weight(x, 1, 1, linear(), g1), 1.0 / 0.4, 1e-12);
  EXPECT_NEAR(obs_weight(x, 0, 0, linear(), g1), 1.0 / 0.6, 1e-12);
  EXPECT_NEAR(obs_weight(x, 1, 1, linear(), g2), 1.0 + 2.0 * (1.0 / 0.4 - 1.0), 1e-12);
  EXPECT_EQ(obs_weight(x, 1, 0, linear(), g2), 0.0);
}

TEST(Weights, TrialFormula) {
  const auto sel = SelectionModel::from_probability([](std::span<const double>) { return 0.25; }, 0.5, 0.5);
  const MiscalibrationConfig cfg{1.5, Source::trial};
  const std::vector<double> x{0.0};
  // gamma * (0.75 / 0.25) * 0.5 / 0.5
  EXPECT_NEAR(rct_weight(x, 1, 1, sel, cfg), 1.5 * 3.0 * 0.5 / 0.5, 1e-12);
  EXPECT_EQ(rct_weight(x, 0, 1, sel, cfg), 0.0);
}

TEST(Weights, ProbabilitiesAreClamped) {
  const auto extreme = AssignmentModel::constant(0.0);
  EXPECT_DOUBLE_EQ(extreme.p_treat(std::vector<double>{0.0}), kProbabilityClamp);
  EXPECT_THROW(AssignmentModel::constant(std::nan("")).p_treat(std::vector<double>{0.0}), DomainError);
}

TEST(Weights, ModelMustMatchRegime) {
  const auto d = make({{{1.0}, 1, 0}});
  EXPECT_THROW(make_terms(d, linear(), {1.0, Source::trial}), ConfigError);
  EXPECT_THROW(make_terms(d, linear(), {0.5, Source::observational}), ConfigError);
  const auto sel = SelectionModel::from_probability([](std::span<const double>) { return 0.5; }, -1.0);
  EXPECT_THROW(make_terms(d, sel, {1.0, Source::trial}), ConfigError);
}

TEST(Weights, HandComputedEstimates) {
  // p(A=1|x) = 0.2 + 0.1 x
  const auto d = make({{{2.0}, 1, 1}, {{2.0}, 1, 0}, {{3.0}, 0, 1}, {{4.0}, 0, 0}});
  const FrugalTree pi{{Rule{less_than(kOne, "x", 2.5), 1, true}}, 0};
  const MiscalibrationConfig cfg{1.0, Source::observational};
  const auto s = score_policy(d, pi, linear(), cfg);
  // losses: sample0 treated & agrees, W = 1/0.4; sample2 untreated & agrees, W = 1/0.5
  EXPECT_NEAR(s.objective, (2.5 + 2.0) / 4.0, 1e-12);
  EXPECT_NEAR(s.rho, 0.5, 1e-12);
  EXPECT_NEAR(s.constraint, 2.5 / 2.0, 1e-12);
  EXPECT_EQ(s.treated, 2u);
  EXPECT_NEAR(v_max(d, pi, linear(), cfg), 2.5 / 0.5, 1e-12);
}

TEST(Weights, TreatNoneHasZeroConstraintAndNoVmax) {
  const auto d = make({{{2.0}, 1, 1}, {{3.0}, 0, 1}});
  const MiscalibrationConfig cfg{1.0, Source::observational};
  EXPECT_EQ(treatment_risk_estimate(d, treat_none(), linear(), cfg), 0.0);
  EXPECT_THROW(v_max(d, treat_none(), linear(), cfg), DegenerateError);
}

TEST(Weights, GammaIsMonotone) {
  const auto d = sample_dataset(Scenario{Variant::obs_clean}, 500, 4);
  const Scenario sc{Variant::obs_clean};
  const FrugalTree pi{{Rule{less_than(d.schema(), "x1", 55.0), 1, true}}, 0};
  double prev_obj = 0.0, prev_con = 0.0;
  for (double g : {1.0, 1.3, 2.0, 4.0}) {
    const auto s = score_policy(d, pi, sc.nominal_model(), sc.miscalibration(g));
    EXPECT_GE(s.objective, prev_obj);
    EXPECT_GE(s.constraint, prev_con);
    prev_obj = s.objective;
    prev_con = s.constraint;
  }
}

TEST(Weights, VmaxBoundsEveryV) {
  const Scenario sc{Variant::obs_confounded};
  const auto d = sample_dataset(sc, 800, 9);
  for (double thr : {35.0, 50.0, 79.0}) {
    const FrugalTree pi{{Rule{less_than(d.schema(), "x1", thr), 1, true}}, 0};
    const auto w = weighted_samples(d, pi, sc.nominal_model(), sc.miscalibration(2.0));
    const double vm = v_max(d, pi, sc.nominal_model(), sc.miscalibration(2.0));
    for (const auto& s : w) EXPECT_LE(s.v, vm + 1e-12);
  }
}

TEST(Weights, WeightedSamplesAgreeWithScore) {
  const Scenario sc{Variant::rct_selected};
  const auto d = sample_dataset(sc, 400, 10);
  const FrugalTree pi{{Rule{less_than(d.schema(), "x2", 60.0), 0, true}}, 1};
  const auto cfg = sc.miscalibration(1.5);
  const auto w = weighted_samples(d, pi, sc.nominal_model(), cfg);
  const auto s = score_policy(d, pi, sc.nominal_model(), cfg);
  double obj = 0.0, v = 0.0;
  for (const auto& e : w) {
    obj += e.contributes_obj;
    v += e.v;
  }
  EXPECT_NEAR(obj / static_cast<double>(d.size()), s.objective, 1e-12);
  EXPECT_NEAR(v / static_cast<double>(d.size()), s.constraint, 1e-12);
  EXPECT_NEAR(proportion_treated(pi, d), s.rho, 1e-15);
}

TEST(Weights, ScoreIsOrderSensitiveOnlyThroughRounding) {
  // score_actions sums in index order; the same action vector always gives
  // bit-identical output
  const Scenario sc{Variant::obs_clean};
  const auto d = sample_dataset(sc, 300, 11);
  const auto terms = make_terms(d, sc.nominal_model(), sc.miscalibration(1.0));
  const auto acts = apply_all(FrugalTree{{Rule{less_than(d.schema(), "x1", 45.0), 1, true}}, 0}, d);
  EXPECT_EQ(score_actions(terms, acts), score_actions(terms, acts));
}

TEST(Weights, UnbiasedAtGammaOneOnCleanScenario) {
  const Scenario sc{Variant::obs_clean};
  const auto d = sample_dataset(sc, 40000, 12);
  const FrugalTree pi{{Rule{less_than(d.schema(), "x1", 50.0), 1, true}}, 0};
  const auto s = score_policy(d, pi, sc.nominal_model(), sc.miscalibration(1.0));
  EXPECT_NEAR(s.objective, 0.52, 0.02);
  EXPECT_NEAR(s.constraint, 0.10, 0.01);
  EXPECT_NEAR(s.rho, 0.40, 0.01);
}
