#pragma once
// Synthetic scenarios with known ground truth, and the Monte Carlo harness
// that measures how often learned policies keep their true treatment risk
// below tau.
//
// Population: X = (x1, x2) ~ Uniform(30, 80)^2, U ~ Uniform(0, 1).
// Nominal propensity: sigma_nom(x) = sigmoid(0.5 - (x1 - 30) / 50).
//
//   obs-clean       A ~ Bern(sigma_nom), loss | A=1 ~ Bern(0.01 (x1 - 30))
//   obs-confounded  A ~ Bern(h(sigma_nom, U)),
//                   loss | A=1 ~ Bern((U < 0.5 ? 0.02 : 0.002) (x1 - 30))
//   rct-selected    trial membership S ~ Bern(h(sigma_nom, U)), A ~ Bern(0.5),
//                   loss as obs-confounded; patients are the S=0 part
//
// with h(s, U) = s / (2 - s) for U < 0.5 and s / (0.5 + 0.5 s) otherwise:
// the two branches shift the nominal odds by exactly a factor of 2 either way.
// Untreated loss is Bern(0.8) everywhere.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "certpol/calibrate.hpp"
#include "certpol/data.hpp"
#include "certpol/error.hpp"
#include "certpol/policy.hpp"
#include "certpol/rng.hpp"
#include "certpol/weights.hpp"

namespace certpol {

enum class Variant { obs_clean, obs_confounded, rct_selected };

inline constexpr double kCovariateLow = 30.0;
inline constexpr double kCovariateHigh = 80.0;
inline constexpr double kUntreatedLoss = 0.8;
inline constexpr std::size_t kDefaultTruthPrecision = 18000;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double sigma_nom(double x1) { return sigmoid(0.5 - (x1 - kCovariateLow) / 50.0); }

// Odds-shifted probability used for confounded assignment and trial selection.
inline double shifted_probability(double s, double u) {
  return u < 0.5 ? s / (2.0 - s) : s / (0.5 + 0.5 * s);
}

inline std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::obs_clean: return "obs-clean";
    case Variant::obs_confounded: return "obs-confounded";
    case Variant::rct_selected: return "rct-selected";
  }
  return "";
}

inline Variant parse_variant(std::string_view name) {
  if (name == "obs-clean") return Variant::obs_clean;
  if (name == "obs-confounded") return Variant::obs_confounded;
  if (name == "rct-selected") return Variant::rct_selected;
  throw ConfigError("unknown scenario '" + std::string(name) + "'");
}

struct Scenario {
  Variant variant = Variant::obs_clean;

  Source source() const { return variant == Variant::rct_selected ? Source::trial : Source::observational; }

  // P(L=1 | A=1, x1, u)
  double treated_loss(double x1, double u) const {
    const double slope = variant == Variant::obs_clean ? 0.01 : (u < 0.5 ? 0.02 : 0.002);
    return slope * (x1 - kCovariateLow);
  }

  // Treated loss slope averaged over U within the patient population where
  // U is independent of X (observational variants only).
  double mean_treated_slope() const { return variant == Variant::obs_clean ? 0.01 : 0.5 * 0.02 + 0.5 * 0.002; }

  double p_assign(double x1, double u) const {
    const double s = sigma_nom(x1);
    return variant == Variant::obs_confounded ? shifted_probability(s, u) : s;
  }

  double p_select(double x1, double u) const { return shifted_probability(sigma_nom(x1), u); }

  // p(S=1) / p(S=0) for the trial variant, by composite Simpson over x1
  // with the U integral done exactly (two branches of mass 1/2).
  double marginal_ratio() const {
    constexpr int kIntervals = 4000;
    const double h = (kCovariateHigh - kCovariateLow) / kIntervals;
    double acc = 0.0;
    for (int i = 0; i <= kIntervals; ++i) {
      const double x1 = kCovariateLow + h * i;
      const double s = sigma_nom(x1);
      const double f = 0.5 * shifted_probability(s, 0.0) + 0.5 * shifted_probability(s, 1.0);
      acc += f * ((i == 0 || i == kIntervals) ? 1.0 : (i % 2 ? 4.0 : 2.0));
    }
    const double p1 = acc * h / 3.0 / (kCovariateHigh - kCovariateLow);
    return p1 / (1.0 - p1);
  }

  // The nominal model a learner is handed: sigma_nom as propensity, or as
  // selection probability with the exact marginal ratio for trial data.
  NominalModel nominal_model() const {
    const auto x1_of = [](std::span<const double> x) { return x[0]; };
    if (variant == Variant::rct_selected)
      return SelectionModel::from_probability([x1_of](std::span<const double> x) { return sigma_nom(x1_of(x)); },
                                              marginal_ratio(), 0.5);
    return AssignmentModel([x1_of](std::span<const double> x) { return sigma_nom(x1_of(x)); });
  }

  MiscalibrationConfig miscalibration(double gamma) const { return MiscalibrationConfig{gamma, source()}; }
};

struct SampleOptions {
  // Adds the confounder indicator 1{U < 0.5} as categorical covariate "u_low"
  // (codes "0", "1"). Off by default: U is unobserved.
  bool materialize_u = false;
};

inline CovariateSchema scenario_schema(const SampleOptions& opts = {}) {
  std::vector<Feature> f{{"x1", FeatureKind::continuous, {}}, {"x2", FeatureKind::continuous, {}}};
  if (opts.materialize_u) f.push_back({"u_low", FeatureKind::categorical, {"0", "1"}});
  return CovariateSchema(std::move(f));
}

// n i.i.d. samples from the scenario's data distribution (patient
// population for observational variants, trial population otherwise).
inline Dataset sample_dataset(const Scenario& sc, std::size_t n, std::uint64_t seed, const SampleOptions& opts = {}) {
  if (n < 1) throw ConfigError("sample size must be at least 1");
  CounterRng rng(seed);
  const auto schema = scenario_schema(opts);
  const std::size_t p = schema.size();
  std::vector<double> values;
  values.reserve(n * p);
  std::vector<int> a(n), l(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x1, x2, u;
    while (true) {
      x1 = rng.uniform(kCovariateLow, kCovariateHigh);
      x2 = rng.uniform(kCovariateLow, kCovariateHigh);
      u = rng.uniform();
      if (sc.variant != Variant::rct_selected || rng.bernoulli(sc.p_select(x1, u))) break;
    }
    const double p_a = sc.variant == Variant::rct_selected ? 0.5 : sc.p_assign(x1, u);
    a[i] = rng.bernoulli(p_a) ? 1 : 0;
    const double p_l = a[i] == 1 ? sc.treated_loss(x1, u) : kUntreatedLoss;
    l[i] = rng.bernoulli(p_l) ? 1 : 0;
    values.push_back(x1);
    values.push_back(x2);
    if (opts.materialize_u) values.push_back(u < 0.5 ? 1.0 : 0.0);
  }
  return Dataset(schema, sc.source(), std::move(values), std::move(a), std::move(l));
}

// Ground truth of a policy in the patient population (S=0).
struct TruthReport {
  double r_true = 0.0;    // P(L=1)
  double t_true = 0.0;    // P(L=1 | A=1); 0 when nobody is treated
  double rho_true = 0.0;  // P(A=1)
  double untreated_loss = kUntreatedLoss;  // P(L=1 | A=0)
  double se_r = 0.0;      // Monte Carlo standard errors, 0 for closed form
  double se_t = 0.0;
  bool closed_form = false;
};

namespace detail {

struct Box {
  double lo[2] = {kCovariateLow, kCovariateLow};
  double hi[2] = {kCovariateHigh, kCovariateHigh};
  double mass() const { return std::max(0.0, hi[0] - lo[0]) * std::max(0.0, hi[1] - lo[1]); }
  // integral of (x1 - 30) over the box
  double moment() const {
    if (!(hi[0] > lo[0]) || !(hi[1] > lo[1])) return 0.0;
    const double a = lo[0] - kCovariateLow, b = hi[0] - kCovariateLow;
    return (hi[1] - lo[1]) * (b * b - a * a) / 2.0;
  }
};

// Axis index (0 for x1, 1 for x2) of a threshold rule, if the tree only
// uses thresholds on x1/x2.
inline std::optional<std::vector<int>> box_axes(const FrugalTree& tree) {
  std::vector<int> axes;
  for (const auto& r : tree.rules) {
    if (!std::holds_alternative<LessThan>(r.predicate.test)) return std::nullopt;
    if (r.predicate.feature == "x1" && r.predicate.index == 0)
      axes.push_back(0);
    else if (r.predicate.feature == "x2" && r.predicate.index == 1)
      axes.push_back(1);
    else
      return std::nullopt;
  }
  return axes;
}

}  // namespace detail

// Exact risks for observational scenarios and trees made of x1/x2 threshold
// rules: each rule cuts the remaining rectangle into an exiting and a
// continuing rectangle, and the loss is linear in x1 on each.
inline std::optional<TruthReport> closed_form_risks(const Scenario& sc, const FrugalTree& tree) {
  if (sc.variant == Variant::rct_selected) return std::nullopt;
  const auto axes = detail::box_axes(tree);
  if (!axes) return std::nullopt;
  const double area = (kCovariateHigh - kCovariateLow) * (kCovariateHigh - kCovariateLow);
  double treated_mass = 0.0, treated_moment = 0.0, untreated_mass = 0.0;
  auto assign = [&](const detail::Box& b, int action) {
    if (action == 1) {
      treated_mass += b.mass();
      treated_moment += b.moment();
    } else {
      untreated_mass += b.mass();
    }
  };
  detail::Box rest;
  for (std::size_t k = 0; k < tree.rules.size(); ++k) {
    const auto& r = tree.rules[k];
    const int ax = (*axes)[k];
    const double thr = std::get<LessThan>(r.predicate.test).threshold;
    detail::Box below = rest, above = rest;
    below.hi[ax] = std::clamp(thr, rest.lo[ax], rest.hi[ax]);
    above.lo[ax] = std::clamp(thr, rest.lo[ax], rest.hi[ax]);
    assign(r.exit_on ? below : above, r.exit_action);
    rest = r.exit_on ? above : below;
  }
  assign(rest, tree.default_action);

  const double slope = sc.mean_treated_slope();
  TruthReport t;
  t.closed_form = true;
  t.rho_true = treated_mass / area;
  t.t_true = treated_mass > 0.0 ? slope * treated_moment / treated_mass : 0.0;
  t.untreated_loss = kUntreatedLoss;
  t.r_true = (slope * treated_moment + kUntreatedLoss * untreated_mass) / area;
  return t;
}

// Monte Carlo risks from `precision` fresh patient-population draws. Loss
// probabilities are averaged rather than sampled.
inline TruthReport monte_carlo_risks(const Scenario& sc, const FrugalTree& tree, std::size_t precision,
                                     std::uint64_t seed) {
  if (precision < 2) throw ConfigError("Monte Carlo precision must be at least 2");
  CounterRng rng(seed);
  const bool materialized = std::any_of(tree.rules.begin(), tree.rules.end(),
                                        [](const Rule& r) { return r.predicate.feature == "u_low"; });
  std::vector<double> x(materialized ? 3 : 2);
  double sum_all = 0.0, sq_all = 0.0, sum_t = 0.0, sq_t = 0.0, sum_u = 0.0;
  std::size_t treated = 0;
  for (std::size_t i = 0; i < precision; ++i) {
    double u;
    while (true) {
      x[0] = rng.uniform(kCovariateLow, kCovariateHigh);
      x[1] = rng.uniform(kCovariateLow, kCovariateHigh);
      u = rng.uniform();
      // patients are the non-selected part of the base population
      if (sc.variant != Variant::rct_selected || !rng.bernoulli(sc.p_select(x[0], u))) break;
    }
    if (materialized) x[2] = u < 0.5 ? 1.0 : 0.0;
    const int act = certpol::apply(tree, x);
    const double p = act == 1 ? sc.treated_loss(x[0], u) : kUntreatedLoss;
    sum_all += p;
    sq_all += p * p;
    if (act == 1) {
      ++treated;
      sum_t += p;
      sq_t += p * p;
    } else {
      sum_u += p;
    }
  }
  const double n = static_cast<double>(precision);
  TruthReport t;
  t.rho_true = static_cast<double>(treated) / n;
  t.r_true = sum_all / n;
  t.se_r = std::sqrt(std::max(0.0, sq_all / n - t.r_true * t.r_true) / n);
  if (treated > 0) {
    const double nt = static_cast<double>(treated);
    t.t_true = sum_t / nt;
    t.se_t = treated > 1 ? std::sqrt(std::max(0.0, sq_t / nt - t.t_true * t.t_true) / nt) : 0.0;
  }
  t.untreated_loss = treated < precision ? sum_u / (n - static_cast<double>(treated)) : kUntreatedLoss;
  return t;
}

// Closed form when available, Monte Carlo otherwise.
inline TruthReport true_risks(const Scenario& sc, const FrugalTree& tree, std::size_t precision = kDefaultTruthPrecision,
                              std::uint64_t seed = 0) {
  if (auto exact = closed_form_risks(sc, tree)) return *exact;
  return monte_carlo_risks(sc, tree, precision, seed);
}

struct ExperimentConfig {
  Scenario scenario;
  std::vector<double> taus;
  Method method = Method::high_prob;
  double gamma = 1.0;
  double alpha = 0.1;
  std::vector<std::size_t> sizes{1000, 1000};  // (m, n) or (m, l, n)
  std::size_t reps = 200;
  std::uint64_t seed = 0;
  ToleranceGrid grid = ToleranceGrid::uniform(200, 0.5);
  std::size_t max_depth = 1;
  std::size_t bins = 200;
  std::size_t truth_precision = kDefaultTruthPrecision;
  std::size_t workers = 1;

  void validate() const {
    if (reps < 1) throw ConfigError("reps must be at least 1");
    if (taus.empty()) throw ConfigError("tau list is empty");
    for (double tau : taus)
      if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
    if (!(gamma >= 1.0)) throw ConfigError("gamma must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    const std::size_t parts = method == Method::high_prob ? 2 : 3;
    if (sizes.size() != parts)
      throw ConfigError(std::string(method_name(method)) + " needs " + std::to_string(parts) + " split sizes");
    for (auto s : sizes)
      if (s < 1) throw ConfigError("split sizes must be positive");
    grid.validate();
  }
};

struct TauSummary {
  double tau = 0.0;
  double mean_t_true = 0.0, q10_t_true = 0.0, q90_t_true = 0.0;
  double mean_r_true = 0.0, q10_r_true = 0.0, q90_r_true = 0.0;
  double coverage = 0.0;       // fraction of replications with t_true <= tau
  double feasible_rate = 0.0;  // fraction that did not fall back to treat-none
};

struct ExperimentResult {
  std::vector<TauSummary> rows;
  // outcomes[rep][tau index]
  std::vector<std::vector<TruthReport>> outcomes;
  std::vector<std::vector<char>> feasible;
};

// Linear-interpolation percentile (numpy default).
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// One replication: fresh data, split, sweep, calibrate for every tau, and
// ground-truth evaluation. All randomness derives from (seed, rep).
inline void run_replication(const ExperimentConfig& c, std::size_t rep, std::vector<TruthReport>& outcomes,
                            std::vector<char>& feasible) {
  const std::uint64_t key = derive_key(c.seed, rep);
  std::size_t total = 0;
  for (auto s : c.sizes) total += s;
  const auto data = sample_dataset(c.scenario, total, derive_key(key, 1));
  SplitSpec spec;
  for (auto s : c.sizes) spec.fractions.push_back(static_cast<double>(s) / static_cast<double>(total));
  spec.seed = derive_key(key, 2);
  const auto parts = split(data, spec);

  LearnConfig lc;
  lc.max_depth = c.max_depth;
  lc.bins = c.bins;
  lc.cfg = c.scenario.miscalibration(c.gamma);
  lc.model = c.scenario.nominal_model();
  const auto swept = sweep(parts[0], c.grid, lc);
  PathOptions opts;
  opts.alpha = c.alpha;
  const Dataset& d_n = parts.back();
  if (c.method == Method::average) opts.d_l = &parts[1];
  const auto path = evaluate_path(swept, d_n, lc.model, lc.cfg, opts);

  outcomes.resize(c.taus.size());
  feasible.resize(c.taus.size());
  for (std::size_t k = 0; k < c.taus.size(); ++k) {
    const auto r = c.method == Method::high_prob ? select_high_prob(path, c.taus[k]) : select_average(path, c.taus[k]);
    outcomes[k] = true_risks(c.scenario, r.policy, c.truth_precision, derive_key(key, 100 + k));
    feasible[k] = r.feasible ? 1 : 0;
  }
}

inline ExperimentResult mc_experiment(const ExperimentConfig& c) {
  c.validate();
  ExperimentResult res;
  res.outcomes.resize(c.reps);
  res.feasible.resize(c.reps);
  const std::size_t workers = std::max<std::size_t>(1, std::min(c.workers, c.reps));
  if (workers == 1) {
    for (std::size_t rep = 0; rep < c.reps; ++rep) run_replication(c, rep, res.outcomes[rep], res.feasible[rep]);
  } else {
    // strided assignment; each replication writes only its own slot
    std::vector<std::thread> pool;
    std::mutex err_mu;
    std::exception_ptr err;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t rep = w; rep < c.reps; rep += workers)
            run_replication(c, rep, res.outcomes[rep], res.feasible[rep]);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!err) err = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
  }

  for (std::size_t k = 0; k < c.taus.size(); ++k) {
    std::vector<double> ts, rs;
    std::size_t covered = 0, feas = 0;
    for (std::size_t rep = 0; rep < c.reps; ++rep) {
      const auto& o = res.outcomes[rep][k];
      ts.push_back(o.t_true);
      rs.push_back(o.r_true);
      covered += o.t_true <= c.taus[k];
      feas += res.feasible[rep][k];
    }
    TauSummary s;
    s.tau = c.taus[k];
    const double reps = static_cast<double>(c.reps);
    for (std::size_t rep = 0; rep < c.reps; ++rep) {
      s.mean_t_true += ts[rep] / reps;
      s.mean_r_true += rs[rep] / reps;
    }
    s.q10_t_true = percentile(ts, 0.1);
    s.q90_t_true = percentile(ts, 0.9);
    s.q10_r_true = percentile(rs, 0.1);
    s.q90_r_true = percentile(rs, 0.9);
    s.coverage = static_cast<double>(covered) / reps;
    s.feasible_rate = static_cast<double>(feas) / reps;
    res.rows.push_back(s);
  }
  return res;
}

inline void write_experiment_csv(std::ostream& out, const ExperimentResult& r) {
  out << "tau,mean_t_true,q10_t_true,q90_t_true,mean_r_true,q10_r_true,q90_r_true,coverage\n";
  using detail::format_double;
  for (const auto& s : r.rows)
    out << format_double(s.tau) << ',' << format_double(s.mean_t_true) << ',' << format_double(s.q10_t_true) << ','
        << format_double(s.q90_t_true) << ',' << format_double(s.mean_r_true) << ','
        << format_double(s.q10_r_true) << ',' << format_double(s.q90_r_true) << ',' << format_double(s.coverage)
        << '\n';
}

}  // namespace certpol
