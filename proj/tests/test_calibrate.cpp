#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "certpol/calibrate.hpp"
#include "certpol/genmodel.hpp"

using namespace certpol;

namespace {

// A path with hand-set statistics; policy j treats when x1 < j so entries
// are distinguishable.
TolerancePath make_path(const std::vector<double>& ucb, const std::vector<double>& obj, std::size_t n = 100) {
  const auto schema = scenario_schema();
  TolerancePath p;
  p.n = n;
  for (std::size_t j = 0; j < ucb.size(); ++j) {
    PathEntry e;
    e.t = 0.1 * static_cast<double>(j + 1);
    e.policy = FrugalTree{{Rule{less_than(schema, "x1", 30.0 + static_cast<double>(j)), 1, true}}, 0};
    e.ucb = ucb[j];
    e.obj_n = obj[j];
    e.constraint_m = e.t - 0.01;
    p.entries.push_back(e);
  }
  return p;
}

}  // namespace

TEST(Grid, UniformPoints) {
  const auto g = ToleranceGrid::uniform(200, 0.5);
  ASSERT_EQ(g.points.size(), 200u);
  EXPECT_DOUBLE_EQ(g.points.front(), 0.0025);
  EXPECT_DOUBLE_EQ(g.points.back(), 0.5);
  EXPECT_THROW(ToleranceGrid::uniform(0, 0.5), ConfigError);
  EXPECT_THROW(ToleranceGrid::uniform(10, 1.0), ConfigError);
  EXPECT_THROW((ToleranceGrid{{0.2, 0.1}}.validate()), ConfigError);
  EXPECT_THROW((ToleranceGrid{{0.0, 0.1}}.validate()), ConfigError);
}

TEST(HighProb, PicksLowestObjectiveInsideAdmissiblePrefix) {
  const auto p = make_path({0.05, 0.08, 0.30, 0.09}, {0.7, 0.6, 0.1, 0.2});
  const auto r = select_high_prob(p, 0.1);
  EXPECT_TRUE(r.feasible);
  ASSERT_TRUE(r.index.has_value());
  // entry 3 has a low ucb but lies past the first violation
  EXPECT_EQ(*r.index, 1u);
  EXPECT_DOUBLE_EQ(r.t_n, 0.2);
  EXPECT_EQ(r.policy, p.entries[1].policy);
  EXPECT_TRUE(r.diagnostics[1].admissible);
  EXPECT_FALSE(r.diagnostics[3].admissible);
}

TEST(HighProb, StrictInequalityAndFallback) {
  const auto p = make_path({0.1, 0.05}, {0.5, 0.4});
  const auto r = select_high_prob(p, 0.1);
  EXPECT_FALSE(r.feasible);
  EXPECT_TRUE(std::isnan(r.t_n));
  EXPECT_EQ(r.policy, treat_none());
  EXPECT_FALSE(r.index.has_value());
}

TEST(HighProb, TiesGoToSmallerT) {
  const auto p = make_path({0.01, 0.02, 0.03}, {0.4, 0.3, 0.3});
  EXPECT_EQ(*select_high_prob(p, 0.5).index, 1u);
}

TEST(HighProb, ConstraintSlackAtTau) {
  const auto p = make_path({0.01, 0.02, 0.03}, {0.4, 0.3, 0.3});
  EXPECT_NEAR(select_high_prob(p, 0.25).constraint_slack, 0.01, 1e-12);
  EXPECT_TRUE(std::isnan(select_high_prob(p, 0.05).constraint_slack));
}

TEST(Average, CriterionIsNotAPrefixRule) {
  auto p = make_path({0, 0, 0}, {0.5, 0.2, 0.3}, 9);
  const std::vector<double> rn{0.05, 0.2, 0.06}, vbar{0.5, 0.5, 0.5};
  for (std::size_t j = 0; j < 3; ++j) {
    p.entries[j].constraint_n = rn[j];
    p.entries[j].conformal = vbar[j];
  }
  const auto r = select_average(p, 0.1);
  // criteria: (9*0.05+0.5)/10 = 0.095, (9*0.2+0.5)/10 = 0.23, (9*0.06+0.5)/10 = 0.104
  EXPECT_NEAR(r.diagnostics[0].criterion, 0.095, 1e-12);
  EXPECT_TRUE(r.diagnostics[0].admissible);
  EXPECT_FALSE(r.diagnostics[1].admissible);
  EXPECT_FALSE(r.diagnostics[2].admissible);
  EXPECT_EQ(*r.index, 0u);
  const auto wide = select_average(p, 0.104 + 1e-9);
  EXPECT_EQ(*wide.index, 2u);
}

TEST(Average, SaturatedQuantileForcesFallback) {
  auto p = make_path({0, 0}, {0.5, 0.2}, 50);
  for (auto& e : p.entries) {
    e.constraint_n = 0.0;
    e.conformal = 10.0;  // v_max
  }
  EXPECT_FALSE(select_average(p, 0.15).feasible);   // 10/51 > 0.15
  EXPECT_TRUE(select_average(p, 0.2).feasible);     // 10/51 <= 0.2
}

TEST(Average, NeedsConformalValues) {
  const auto p = make_path({0.0}, {0.5});
  EXPECT_THROW(select_average(p, 0.1), ArgumentError);
}

TEST(Path, EndToEndOnCleanScenario) {
  const Scenario sc{Variant::obs_clean};
  const auto data = sample_dataset(sc, 1500, 21);
  const auto parts = split(data, {{0.4, 0.2, 0.4}, 5});
  LearnConfig lc;
  lc.cfg = sc.miscalibration(1.0);
  lc.model = sc.nominal_model();
  lc.bins = 60;
  const auto grid = ToleranceGrid::uniform(40, 0.5);
  const auto swept = sweep(parts[0], grid, lc);
  ASSERT_EQ(swept.size(), 40u);
  for (const auto& s : swept) EXPECT_LE(s.train.constraint, s.t);

  PathOptions opts;
  opts.alpha = 0.1;
  opts.d_l = &parts[1];
  const auto path = evaluate_path(swept, parts[2], lc.model, lc.cfg, opts);
  EXPECT_EQ(path.n, parts[2].size());
  for (const auto& e : path.entries) {
    if (e.rho_n == 0.0) {
      EXPECT_EQ(e.ucb, 0.0);
      EXPECT_EQ(e.v_max, 0.0);
    } else {
      EXPECT_GE(e.ucb, e.constraint_n - 1e-12);
      EXPECT_LE(e.ucb, e.v_max + 1e-12);
    }
    EXPECT_FALSE(std::isnan(e.conformal));
    // recompute directly
    const auto s = score_policy(parts[2], e.policy, lc.model, lc.cfg);
    EXPECT_DOUBLE_EQ(s.objective, e.obj_n);
    EXPECT_DOUBLE_EQ(s.constraint, e.constraint_n);
  }

  const auto hp = select_high_prob(path, 0.2);
  const auto again = select_high_prob(evaluate_path(swept, parts[2], lc.model, lc.cfg, opts), 0.2);
  EXPECT_EQ(hp.policy, again.policy);
  EXPECT_EQ(hp.index, again.index);
  if (hp.feasible) {
    EXPECT_LT(path.entries[*hp.index].ucb, 0.2);
  }
}

TEST(Path, TreatNoneOnlyPathHasZeroBounds) {
  const Scenario sc{Variant::obs_clean};
  const auto d = sample_dataset(sc, 200, 22);
  std::vector<SweepEntry> swept{{0.1, treat_none(), {}}, {0.2, treat_none(), {}}};
  const auto path = evaluate_path(swept, d, sc.nominal_model(), sc.miscalibration(1.0), {});
  for (const auto& e : path.entries) {
    EXPECT_EQ(e.ucb, 0.0);
    EXPECT_EQ(e.constraint_n, 0.0);
  }
  const auto r = select_high_prob(path, 0.05);
  EXPECT_TRUE(r.feasible);
  EXPECT_EQ(*r.index, 0u);
}

TEST(Output, JsonAndCsvCarryDiagnostics) {
  const auto p = make_path({0.05, 0.2}, {0.6, 0.5});
  const auto r = select_high_prob(p, 0.1);
  const auto j = to_json(r, scenario_schema());
  EXPECT_EQ(j["method"], "high-prob");
  EXPECT_EQ(j["feasible"], true);
  EXPECT_DOUBLE_EQ(j["t_n"].get<double>(), 0.1);
  EXPECT_EQ(j["diagnostics"].size(), 2u);
  EXPECT_TRUE(j["diagnostics"][0]["conformal"].is_null());
  EXPECT_EQ(j["policy"]["rules"][0]["feature"], "x1");

  std::ostringstream csv;
  write_diagnostics_csv(csv, r);
  const auto text = csv.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,obj_n,constraint_n,ucb,v_max,conformal,criterion,admissible");
  EXPECT_NE(text.find("\n0.1,0.6,0,0.05,0,,0.05,1\n"), std::string::npos);

  const auto infeasible = to_json(select_high_prob(p, 0.01), scenario_schema());
  EXPECT_TRUE(infeasible["t_n"].is_null());
  EXPECT_EQ(infeasible["policy"]["default_action"], 0);
}
