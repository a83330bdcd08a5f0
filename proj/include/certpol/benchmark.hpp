#pragma once
// Benchmarking a credible gamma: logistic nominal models, reliability bins
// of assignment odds, and odds ratios between nested models that differ by
// one omitted covariate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "certpol/data.hpp"
#include "certpol/error.hpp"
#include "certpol/weights.hpp"

namespace certpol {

// One column of the expanded design matrix.
struct FeatureColumn {
  std::string feature;
  std::size_t index = 0;  // position in the covariate schema
  FeatureKind kind = FeatureKind::continuous;
  std::size_t category = 0;  // one-hot level for categorical columns
  double mean = 0.0;         // standardization for continuous columns
  double scale = 1.0;

  double value(std::span<const double> x) const {
    const double v = x[index];
    if (kind == FeatureKind::categorical) return static_cast<std::size_t>(v) == category ? 1.0 : 0.0;
    return (v - mean) / scale;
  }
};

// Continuous features are standardized with the dataset's mean and standard
// deviation; categorical features get one indicator per non-reference level.
inline std::vector<FeatureColumn> build_feature_map(const Dataset& d, const std::vector<std::string>& features) {
  std::vector<FeatureColumn> map;
  const auto& schema = d.schema();
  for (const auto& name : features) {
    const std::size_t j = schema.require(name);
    const auto& f = schema[j];
    if (f.kind == FeatureKind::categorical) {
      for (std::size_t c = 1; c < f.categories.size(); ++c)
        map.push_back(FeatureColumn{name, j, FeatureKind::categorical, c, 0.0, 1.0});
      continue;
    }
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) mean += d.value(i, j);
    mean /= static_cast<double>(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) sq += (d.value(i, j) - mean) * (d.value(i, j) - mean);
    const double sd = std::sqrt(sq / static_cast<double>(d.size()));
    map.push_back(FeatureColumn{name, j, FeatureKind::continuous, 0, mean, sd > 0.0 ? sd : 1.0});
  }
  return map;
}

struct LogisticModel {
  std::vector<FeatureColumn> columns;
  Eigen::VectorXd coefficients;  // aligned with columns
  double intercept = 0.0;
  bool converged = false;
  std::size_t iterations = 0;

  // Fitted P(target = 1 | x).
  double predict(std::span<const double> x) const {
    double z = intercept;
    for (std::size_t k = 0; k < columns.size(); ++k) z += coefficients[static_cast<Eigen::Index>(k)] * columns[k].value(x);
    return 1.0 / (1.0 + std::exp(-z));
  }

  AssignmentModel assignment_model() const {
    return AssignmentModel([m = *this](std::span<const double> x) { return m.predict(x); });
  }
};

inline constexpr double kLogisticRidge = 1e-6;
inline constexpr double kLogisticTolerance = 1e-8;
inline constexpr std::size_t kLogisticMaxIter = 100;

namespace detail {

// mean log-likelihood minus the ridge penalty on non-intercept coefficients
inline double penalized_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd z = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    // log(1 + e^z) computed without overflow
    const double softplus = z[i] > 0 ? z[i] + std::log1p(std::exp(-z[i])) : std::log1p(std::exp(z[i]));
    ll += y[i] * z[i] - softplus;
  }
  ll /= static_cast<double>(z.size());
  return ll - 0.5 * kLogisticRidge * beta.tail(beta.size() - 1).squaredNorm();
}

}  // namespace detail

// Newton / IRLS fit of a logistic regression of `target` (defaults to the
// action column) on `features`.
inline LogisticModel fit_logistic(const Dataset& d, const std::vector<std::string>& features,
                                  std::optional<std::span<const int>> target = std::nullopt) {
  if (d.empty()) throw ArgumentError("cannot fit a model on an empty dataset");
  const std::span<const int> y_raw = target ? *target : std::span<const int>(d.actions());
  if (y_raw.size() != d.size()) throw ArgumentError("target length does not match the dataset");
  bool has0 = false, has1 = false;
  for (int v : y_raw) {
    if (v != 0 && v != 1) throw ArgumentError("logistic target must be binary");
    has0 = has0 || v == 0;
    has1 = has1 || v == 1;
  }
  if (!(has0 && has1)) throw DegenerateError("logistic target needs both classes");

  LogisticModel model;
  model.columns = build_feature_map(d, features);
  const auto n = static_cast<Eigen::Index>(d.size());
  const auto k = static_cast<Eigen::Index>(model.columns.size()) + 1;
  Eigen::MatrixXd X(n, k);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = d.row(static_cast<std::size_t>(i));
    X(i, 0) = 1.0;
    for (Eigen::Index c = 1; c < k; ++c) X(i, c) = model.columns[static_cast<std::size_t>(c - 1)].value(row);
    y[i] = y_raw[static_cast<std::size_t>(i)];
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd ridge = Eigen::VectorXd::Constant(k, kLogisticRidge);
  ridge[0] = 0.0;
  double current = detail::penalized_loglik(X, y, beta);
  for (std::size_t it = 0; it < kLogisticMaxIter; ++it) {
    const Eigen::VectorXd p = (1.0 + (-(X * beta).array()).exp()).inverse().matrix();
    const Eigen::VectorXd grad = X.transpose() * (y - p) / static_cast<double>(n) - ridge.cwiseProduct(beta);
    model.iterations = it;
    if (grad.norm() <= kLogisticTolerance) {
      model.converged = true;
      break;
    }
    const Eigen::VectorXd w = p.array() * (1.0 - p.array());
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X / static_cast<double>(n);
    H.diagonal() += ridge;
    const Eigen::VectorXd step = H.ldlt().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = beta + step;
    double value = detail::penalized_loglik(X, y, next);
    while (value < current && scale > 1e-10) {
      scale *= 0.5;
      next = beta + scale * step;
      value = detail::penalized_loglik(X, y, next);
    }
    beta = next;
    current = value;
  }
  if (!beta.allFinite()) throw DegenerateError("logistic fit diverged");
  model.intercept = beta[0];
  model.coefficients = beta.tail(k - 1);
  return model;
}

struct ReliabilityBin {
  double odds_low = 0.0;  // nominal odds range covered by the bin
  double odds_high = 0.0;
  double mean_nominal_odds = 0.0;
  double empirical_odds = 0.0;  // #(A=0) / #(A=1); +inf when no A=1
  std::size_t count = 0;
};

// Nominal odds (1 - p1) / p1 per sample, split into equal-count bins in
// increasing order, each compared with the observed odds of its members.
inline std::vector<ReliabilityBin> reliability_bins(const Dataset& d, const LogisticModel& model,
                                                    std::size_t n_bins = 5) {
  if (d.empty()) throw ArgumentError("reliability bins of an empty dataset");
  if (n_bins < 1 || n_bins > d.size()) throw ConfigError("n_bins must lie in [1, sample count]");
  const std::size_t n = d.size();
  std::vector<double> odds(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p1 = clamp_probability(model.predict(d.row(i)));
    odds[i] = (1.0 - p1) / p1;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return odds[a] < odds[b]; });

  std::vector<ReliabilityBin> bins;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t lo = b * n / n_bins, hi = (b + 1) * n / n_bins;
    ReliabilityBin r;
    r.count = hi - lo;
    r.odds_low = odds[order[lo]];
    r.odds_high = odds[order[hi - 1]];
    std::size_t a0 = 0, a1 = 0;
    for (std::size_t k = lo; k < hi; ++k) {
      r.mean_nominal_odds += odds[order[k]];
      (d.action(order[k]) == 1 ? a1 : a0) += 1;
    }
    r.mean_nominal_odds /= static_cast<double>(r.count);
    r.empirical_odds = a1 == 0 ? std::numeric_limits<double>::infinity()
                               : static_cast<double>(a0) / static_cast<double>(a1);
    bins.push_back(r);
  }
  return bins;
}

struct OmittedRatios {
  std::string omitted;
  std::vector<double> ratios;  // per sample, in dataset order
  LogisticModel full;
  LogisticModel reduced;
};

// Ratio of full-model to reduced-model odds of the observed action, with
// odds taken as (1 - p(A|x)) / p(A|x). Both models are fit in-sample.
inline OmittedRatios omitted_covariate_ratios(const Dataset& d, const std::string& omit,
                                              const std::vector<std::string>& features) {
  if (std::find(features.begin(), features.end(), omit) == features.end())
    throw ConfigError("omitted covariate '" + omit + "' is not among the model features");
  std::vector<std::string> rest;
  for (const auto& f : features)
    if (f != omit) rest.push_back(f);
  OmittedRatios out;
  out.omitted = omit;
  out.full = fit_logistic(d, features);
  out.reduced = fit_logistic(d, rest);
  out.ratios.resize(d.size());
  auto odds = [](double p1, int a) {
    const double p = clamp_probability(a == 1 ? p1 : 1.0 - p1);
    return (1.0 - p) / p;
  };
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto x = d.row(i);
    out.ratios[i] = odds(out.full.predict(x), d.action(i)) / odds(out.reduced.predict(x), d.action(i));
  }
  return out;
}

// Support points of the empirical CDF: sorted distinct values with the
// fraction of values at or below each.
inline std::vector<std::pair<double, double>> ecdf(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i + 1 == v.size() || v[i + 1] != v[i])
      out.emplace_back(v[i], static_cast<double>(i + 1) / static_cast<double>(v.size()));
  return out;
}

// exp of the q-quantile (inverse empirical CDF) of |log r|: the narrowest
// band [1/g, g] holding a fraction q of the ratios.
inline double suggest_gamma(std::span<const double> ratios, double coverage_quantile = 0.95) {
  if (ratios.empty()) throw ArgumentError("suggest_gamma of an empty list");
  if (!(coverage_quantile > 0.0 && coverage_quantile <= 1.0))
    throw DomainError("coverage quantile must lie in (0,1]");
  std::vector<double> dev;
  dev.reserve(ratios.size());
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("odds ratios must be positive and finite");
    dev.push_back(std::abs(std::log(r)));
  }
  std::sort(dev.begin(), dev.end());
  const double pos = std::ceil(coverage_quantile * static_cast<double>(dev.size()) - 1e-9);
  const auto rank = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(dev.size())));
  return std::max(1.0, std::exp(dev[rank - 1]));
}

inline void write_reliability_csv(std::ostream& out, const std::vector<ReliabilityBin>& bins) {
  out << "bin,mean_nominal_odds,empirical_odds,count\n";
  for (std::size_t b = 0; b < bins.size(); ++b)
    out << b + 1 << ',' << detail::format_double(bins[b].mean_nominal_odds) << ','
        << (std::isinf(bins[b].empirical_odds) ? std::string("inf") : detail::format_double(bins[b].empirical_odds))
        << ',' << bins[b].count << '\n';
}

inline void write_ecdf_csv(std::ostream& out, std::span<const double> ratios) {
  out << "ratio,ecdf\n";
  for (const auto& [r, f] : ecdf(ratios)) out << detail::format_double(r) << ',' << detail::format_double(f) << '\n';
}

}  // namespace certpol
