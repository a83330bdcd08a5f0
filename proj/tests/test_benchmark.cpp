#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "certpol/benchmark.hpp"
#include "certpol/genmodel.hpp"

using namespace certpol;

namespace {

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// x ~ U(-2, 2), g ~ {a, b, c}; A ~ Bernoulli(logistic(b0 + b1 x + bg[g]))
Dataset logistic_data(std::size_t n, double b0, double b1, const std::vector<double>& bg, std::uint64_t seed) {
  const CovariateSchema s({{"x", FeatureKind::continuous, {}}, {"g", FeatureKind::categorical, {"a", "b", "c"}}});
  CounterRng rng(seed);
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(-2.0, 2.0);
    const auto g = rng.below(3);
    const int a = rng.bernoulli(logistic(b0 + b1 * x + bg[g])) ? 1 : 0;
    samples.push_back({{x, static_cast<double>(g)}, a, 0});
  }
  return Dataset(s, Source::observational, samples);
}

}  // namespace

TEST(Logistic, ConstantFeatureGivesLogitOfMean) {
  const CovariateSchema s({{"x", FeatureKind::continuous, {}}});
  std::vector<Sample> samples;
  for (int i = 0; i < 40; ++i) samples.push_back({{3.0}, i < 10 ? 1 : 0, 0});
  const auto m = fit_logistic(Dataset(s, Source::observational, samples), {"x"});
  EXPECT_TRUE(m.converged);
  EXPECT_NEAR(m.intercept, std::log(0.25 / 0.75), 1e-9);
  EXPECT_NEAR(m.coefficients[0], 0.0, 1e-12);
  EXPECT_NEAR(m.predict(std::vector<double>{3.0}), 0.25, 1e-9);
}

TEST(Logistic, RecoversGeneratingModel) {
  const auto d = logistic_data(40000, -0.3, 1.2, {0.0, 0.8, -0.5}, 1);
  const auto m = fit_logistic(d, {"x", "g"});
  EXPECT_TRUE(m.converged);
  ASSERT_EQ(m.columns.size(), 3u);  // x plus two indicators
  for (double x : {-1.5, 0.0, 1.0})
    for (int g = 0; g < 3; ++g) {
      const double truth = logistic(-0.3 + 1.2 * x + std::vector<double>{0.0, 0.8, -0.5}[g]);
      EXPECT_NEAR(m.predict(std::vector<double>{x, static_cast<double>(g)}), truth, 0.025);
    }
}

TEST(Logistic, ScoreEquationsHoldAtOptimum) {
  // at the MLE the residuals are orthogonal to every column
  const auto d = logistic_data(2000, 0.4, -0.7, {0.0, 0.3, 0.3}, 2);
  const auto m = fit_logistic(d, {"x", "g"});
  double sum_res = 0.0;
  std::vector<double> dot(m.columns.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double r = d.action(i) - m.predict(d.row(i));
    sum_res += r;
    for (std::size_t k = 0; k < dot.size(); ++k) dot[k] += r * m.columns[k].value(d.row(i));
  }
  EXPECT_NEAR(sum_res / 2000.0, 0.0, 1e-8);
  for (std::size_t k = 0; k < dot.size(); ++k)
    EXPECT_NEAR(dot[k] / 2000.0, kLogisticRidge * m.coefficients[static_cast<Eigen::Index>(k)], 1e-8);
}

TEST(Logistic, SeparableDataStaysFinite) {
  const CovariateSchema s({{"x", FeatureKind::continuous, {}}});
  std::vector<Sample> samples;
  for (int i = 0; i < 30; ++i) samples.push_back({{static_cast<double>(i)}, i >= 15 ? 1 : 0, 0});
  const auto m = fit_logistic(Dataset(s, Source::observational, samples), {"x"});
  EXPECT_TRUE(std::isfinite(m.coefficients[0]));
  EXPECT_GT(m.coefficients[0], 5.0);
  EXPECT_GT(m.predict(std::vector<double>{29.0}), 0.99);
}

TEST(Logistic, Errors) {
  const CovariateSchema s({{"x", FeatureKind::continuous, {}}});
  const Dataset one(s, Source::observational, std::vector<Sample>{{{1.0}, 1, 0}, {{2.0}, 1, 0}});
  EXPECT_THROW(fit_logistic(one, {"x"}), DegenerateError);
  const std::vector<int> target{0, 1};
  EXPECT_THROW(fit_logistic(one, {"y"}, std::span<const int>(target)), SchemaError);
  EXPECT_NO_THROW(fit_logistic(one, {"x"}, std::span<const int>(target)));
}

TEST(Reliability, WellSpecifiedModelIsCalibrated) {
  const auto d = logistic_data(20000, 0.2, 1.0, {0.0, 0.0, 0.0}, 3);
  const auto m = fit_logistic(d, {"x"});
  const auto bins = reliability_bins(d, m, 5);
  ASSERT_EQ(bins.size(), 5u);
  std::size_t total = 0;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    total += bins[b].count;
    EXPECT_LE(bins[b].odds_low, bins[b].odds_high);
    if (b > 0) {
      EXPECT_GE(bins[b].odds_low, bins[b - 1].odds_high);
    }
    const double ratio = bins[b].empirical_odds / bins[b].mean_nominal_odds;
    EXPECT_GT(ratio, 1.0 / 1.5);
    EXPECT_LT(ratio, 1.5);
  }
  EXPECT_EQ(total, d.size());
}

TEST(Reliability, EdgeCases) {
  const auto d = logistic_data(103, 0.0, 1.0, {0.0, 0.0, 0.0}, 4);
  const auto m = fit_logistic(d, {"x"});
  const auto one = reliability_bins(d, m, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].count, 103u);
  const auto seven = reliability_bins(d, m, 7);
  std::size_t total = 0;
  for (const auto& b : seven) total += b.count;
  EXPECT_EQ(total, 103u);
  EXPECT_THROW(reliability_bins(d, m, 0), ConfigError);
  EXPECT_THROW(reliability_bins(d, m, 104), ConfigError);

  // nobody treated in a bin reads as infinite odds
  const CovariateSchema s({{"x", FeatureKind::continuous, {}}});
  std::vector<Sample> samples;
  for (int i = 0; i < 10; ++i) samples.push_back({{static_cast<double>(i)}, i >= 5 ? 1 : 0, 0});
  const Dataset sep(s, Source::observational, samples);
  const auto bins = reliability_bins(sep, fit_logistic(sep, {"x"}), 2);
  EXPECT_TRUE(std::isinf(bins[1].empirical_odds));
  std::ostringstream out;
  write_reliability_csv(out, bins);
  EXPECT_NE(out.str().find(",inf,5\n"), std::string::npos);
}

TEST(SuggestGamma, Quantiles) {
  const std::vector<double> ones(10, 1.0);
  EXPECT_DOUBLE_EQ(suggest_gamma(ones), 1.0);
  const std::vector<double> pair{0.5, 2.0};
  EXPECT_NEAR(suggest_gamma(pair, 1.0), 2.0, 1e-12);
  // 20 values: |log r| = k/10 for k = 1..20; the 0.95 quantile is the 19th
  std::vector<double> r, inv;
  for (int k = 1; k <= 20; ++k) {
    r.push_back(std::exp((k % 2 ? 1.0 : -1.0) * k / 10.0));
    inv.push_back(1.0 / r.back());
  }
  EXPECT_NEAR(suggest_gamma(r), std::exp(1.9), 1e-12);
  EXPECT_DOUBLE_EQ(suggest_gamma(r), suggest_gamma(inv));
  EXPECT_NEAR(suggest_gamma(r, 0.5), std::exp(1.0), 1e-12);
  EXPECT_THROW(suggest_gamma(r, 0.0), DomainError);
  EXPECT_THROW(suggest_gamma(std::vector<double>{1.0, 0.0}), DomainError);
  EXPECT_THROW(suggest_gamma(std::vector<double>{}), ArgumentError);
}

TEST(SuggestGamma, EcdfSupport) {
  const std::vector<double> v{2.0, 1.0, 2.0, 3.0};
  const auto e = ecdf(v);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0], (std::pair<double, double>{1.0, 0.25}));
  EXPECT_EQ(e[1], (std::pair<double, double>{2.0, 0.75}));
  EXPECT_EQ(e[2], (std::pair<double, double>{3.0, 1.0}));
  std::ostringstream out;
  write_ecdf_csv(out, v);
  EXPECT_EQ(out.str(), "ratio,ecdf\n1,0.25\n2,0.75\n3,1\n");
}

TEST(OmittedCovariate, NullCovariateBarelyMovesOdds) {
  const auto d = logistic_data(5000, 0.0, 1.0, {0.0, 0.0, 0.0}, 5);
  const auto r = omitted_covariate_ratios(d, "g", {"x", "g"});
  EXPECT_EQ(r.ratios.size(), d.size());
  EXPECT_LT(suggest_gamma(r.ratios), 1.1);
  EXPECT_THROW(omitted_covariate_ratios(d, "z", {"x", "g"}), ConfigError);
}

TEST(OmittedCovariate, SpreadGrowsWithEffectSize) {
  double prev = 1.0;
  for (double effect : {0.3, 1.0, 2.0}) {
    const auto d = logistic_data(5000, 0.0, 0.5, {0.0, effect, -effect}, 6);
    const double g = suggest_gamma(omitted_covariate_ratios(d, "g", {"x", "g"}).ratios);
    EXPECT_GT(g, prev);
    prev = g;
  }
}

TEST(OmittedCovariate, ConfoundedScenarioPointsAtGammaTwo) {
  const auto d = sample_dataset(Scenario{Variant::obs_confounded}, 20000, 7, {true});
  const auto with_u = omitted_covariate_ratios(d, "u_low", {"x1", "x2", "u_low"});
  EXPECT_NEAR(suggest_gamma(with_u.ratios), 2.0, 0.3);
  const auto without_x2 = omitted_covariate_ratios(d, "x2", {"x1", "x2", "u_low"});
  EXPECT_LT(suggest_gamma(without_x2.ratios), 1.1);
}
