#pragma once
// Tolerance sweep and selection of the certified nominal tolerance.
//
// A policy is learned on D_m for every nominal tolerance t of a grid. On a
// held-out split each policy gets an upper confidence bound on its
// treatment-risk bound. The high-probability rule picks, inside the longest
// grid prefix whose bounds all stay below tau, the t with the lowest
// held-out population-risk estimate. The average rule uses a conformal
// quantile from a third split instead of the prefix condition.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "certpol/bounds.hpp"
#include "certpol/data.hpp"
#include "certpol/error.hpp"
#include "certpol/learner.hpp"
#include "certpol/policy.hpp"
#include "certpol/weights.hpp"

namespace certpol {

struct ToleranceGrid {
  std::vector<double> points;

  // count equally spaced points in (0, upper]: upper*j/count, j = 1..count
  static ToleranceGrid uniform(std::size_t count, double upper) {
    if (count < 1) throw ConfigError("tolerance grid needs at least one point");
    if (!(upper > 0.0 && upper < 1.0)) throw ConfigError("tolerance grid upper end must lie in (0,1)");
    ToleranceGrid g;
    for (std::size_t j = 1; j <= count; ++j)
      g.points.push_back(upper * static_cast<double>(j) / static_cast<double>(count));
    return g;
  }

  void validate() const {
    if (points.empty()) throw ConfigError("tolerance grid is empty");
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (!(points[j] > 0.0 && points[j] < 1.0)) throw ConfigError("tolerance grid points must lie in (0,1)");
      if (j > 0 && !(points[j] > points[j - 1])) throw ConfigError("tolerance grid must be strictly increasing");
    }
  }
};

struct SweepEntry {
  double t = 0.0;
  FrugalTree policy;
  PolicyScore train;  // estimates on D_m
};

// One learned policy per grid point. The learner's candidate cache is
// shared across t, so the cost is dominated by the first grid point.
inline std::vector<SweepEntry> sweep(const Dataset& d_m, const ToleranceGrid& grid, const LearnConfig& config) {
  grid.validate();
  if (d_m.empty()) throw ArgumentError("cannot sweep on an empty dataset");
  TreeLearner learner(d_m, config);
  std::vector<SweepEntry> out;
  out.reserve(grid.points.size());
  for (double t : grid.points) {
    auto r = learner.learn(t);
    out.push_back(SweepEntry{t, std::move(r.tree), r.score});
  }
  return out;
}

struct PathEntry {
  double t = 0.0;
  FrugalTree policy;
  double obj_m = 0.0;         // population-risk estimate on D_m
  double constraint_m = 0.0;  // treatment-risk estimate on D_m
  double obj_n = 0.0;         // population-risk estimate on D_n
  double constraint_n = 0.0;  // treatment-risk estimate on D_n, R_n(t)
  double rho_n = 0.0;
  double v_max = 0.0;  // 0 when the policy treats nobody in D_n
  double ucb = 0.0;    // Bentkus bound on D_n; 0 when nobody treated
  double conformal = std::numeric_limits<double>::quiet_NaN();  // quantile on D_l, average rule only
};

struct TolerancePath {
  std::vector<PathEntry> entries;
  std::size_t n = 0;  // size of D_n
  double alpha = 0.1;
};

struct PathOptions {
  double alpha = 0.1;
  const Dataset* d_l = nullptr;  // set for the average-guarantee rule
};

// Held-out statistics for every swept policy. Policies repeat along the
// grid, so statistics are computed once per distinct tree.
inline TolerancePath evaluate_path(const std::vector<SweepEntry>& swept, const Dataset& d_n,
                                   const NominalModel& model, const MiscalibrationConfig& cfg,
                                   const PathOptions& opts) {
  if (d_n.empty()) throw ArgumentError("calibration split is empty");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  const auto terms_n = make_terms(d_n, model, cfg);
  std::optional<SampleTerms> terms_l;
  if (opts.d_l) {
    if (opts.d_l->empty()) throw ArgumentError("conformal split is empty");
    terms_l = make_terms(*opts.d_l, model, cfg);
  }

  TolerancePath path;
  path.n = d_n.size();
  path.alpha = opts.alpha;
  std::vector<std::pair<const FrugalTree*, std::size_t>> seen;  // tree -> entry index
  for (const auto& s : swept) {
    PathEntry e;
    e.t = s.t;
    e.policy = s.policy;
    e.obj_m = s.train.objective;
    e.constraint_m = s.train.constraint;
    const PathEntry* prior = nullptr;
    for (const auto& [tree, idx] : seen)
      if (*tree == s.policy) prior = &path.entries[idx];
    if (prior) {
      e.obj_n = prior->obj_n;
      e.constraint_n = prior->constraint_n;
      e.rho_n = prior->rho_n;
      e.v_max = prior->v_max;
      e.ucb = prior->ucb;
      e.conformal = prior->conformal;
    } else {
      const auto actions = apply_all(s.policy, d_n);
      const auto score = score_actions(terms_n, actions);
      e.obj_n = score.objective;
      e.constraint_n = score.constraint;
      e.rho_n = score.rho;
      if (score.treated > 0) {
        e.v_max = v_max(terms_n, actions);
        e.ucb = bentkus_ucb(
            UcbInput{std::min(score.constraint, e.v_max), static_cast<long>(d_n.size()), opts.alpha, e.v_max});
      }
      if (terms_l) {
        const auto actions_l = apply_all(s.policy, *opts.d_l);
        const auto v = constraint_values(*terms_l, actions_l);
        e.conformal = conformal_quantile(v, opts.alpha);
      }
      seen.emplace_back(&s.policy, path.entries.size());
    }
    path.entries.push_back(std::move(e));
  }
  return path;
}

enum class Method { high_prob, average };

struct Diagnostic {
  double t = 0.0;
  double obj_n = 0.0;
  double constraint_n = 0.0;
  double ucb = 0.0;
  double v_max = 0.0;
  double conformal = std::numeric_limits<double>::quiet_NaN();
  double criterion = 0.0;  // compared against tau: ucb or the conformal mix
  bool admissible = false;
};

struct CalibrationResult {
  double tau = 0.0;
  double t_n = std::numeric_limits<double>::quiet_NaN();  // NaN when infeasible
  FrugalTree policy;
  bool feasible = false;
  std::optional<std::size_t> index;  // grid index of t_n
  // t - constraint_m at the largest grid point t <= tau: how far the nominal
  // policy at tau is from meeting its constraint with equality.
  double constraint_slack = std::numeric_limits<double>::quiet_NaN();
  Method method = Method::high_prob;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline double slack_at(const TolerancePath& path, double tau) {
  double slack = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : path.entries)
    if (e.t <= tau) slack = e.t - e.constraint_m;
  return slack;
}

// argmin of obj_n over admissible entries; ties go to the smaller t.
inline void choose(const TolerancePath& path, CalibrationResult& r) {
  for (std::size_t j = 0; j < path.entries.size(); ++j) {
    if (!r.diagnostics[j].admissible) continue;
    if (!r.index || path.entries[j].obj_n < path.entries[*r.index].obj_n) r.index = j;
  }
  if (r.index) {
    r.feasible = true;
    r.t_n = path.entries[*r.index].t;
    r.policy = path.entries[*r.index].policy;
  } else {
    r.feasible = false;
    r.policy = treat_none();
  }
}

inline Diagnostic diagnostic_of(const PathEntry& e) {
  Diagnostic d;
  d.t = e.t;
  d.obj_n = e.obj_n;
  d.constraint_n = e.constraint_n;
  d.ucb = e.ucb;
  d.v_max = e.v_max;
  d.conformal = e.conformal;
  return d;
}

}  // namespace detail

// Admissible set: the longest grid prefix on which tau > ucb(t') for every t'.
inline CalibrationResult select_high_prob(const TolerancePath& path, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
  CalibrationResult r;
  r.tau = tau;
  r.method = Method::high_prob;
  r.constraint_slack = detail::slack_at(path, tau);
  r.diagnostics.reserve(path.entries.size());
  bool open = true;
  for (const auto& e : path.entries) {
    auto d = detail::diagnostic_of(e);
    d.criterion = e.ucb;
    open = open && tau > e.ucb;
    d.admissible = open;
    r.diagnostics.push_back(d);
  }
  detail::choose(path, r);
  return r;
}

// Admissible set: every t with tau >= (n * R_n(t) + Vbar(t)) / (n + 1).
inline CalibrationResult select_average(const TolerancePath& path, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("tau must lie in (0,1)");
  CalibrationResult r;
  r.tau = tau;
  r.method = Method::average;
  r.constraint_slack = detail::slack_at(path, tau);
  r.diagnostics.reserve(path.entries.size());
  const double n = static_cast<double>(path.n);
  for (const auto& e : path.entries) {
    if (std::isnan(e.conformal)) throw ArgumentError("average rule needs conformal quantiles from a D_l split");
    auto d = detail::diagnostic_of(e);
    d.criterion = (n * e.constraint_n + e.conformal) / (n + 1.0);
    d.admissible = tau >= d.criterion;
    r.diagnostics.push_back(d);
  }
  detail::choose(path, r);
  return r;
}

inline const char* method_name(Method m) { return m == Method::high_prob ? "high-prob" : "average"; }

inline nlohmann::json to_json(const CalibrationResult& r, const CovariateSchema& schema) {
  nlohmann::json diag = nlohmann::json::array();
  for (const auto& d : r.diagnostics) {
    nlohmann::json row{{"t", d.t},     {"obj_n", d.obj_n},         {"constraint_n", d.constraint_n},
                       {"ucb", d.ucb}, {"v_max", d.v_max},         {"criterion", d.criterion},
                       {"admissible", d.admissible}};
    row["conformal"] = std::isnan(d.conformal) ? nlohmann::json(nullptr) : nlohmann::json(d.conformal);
    diag.push_back(std::move(row));
  }
  nlohmann::json j;
  j["method"] = method_name(r.method);
  j["tau"] = r.tau;
  j["feasible"] = r.feasible;
  j["t_n"] = r.feasible ? nlohmann::json(r.t_n) : nlohmann::json(nullptr);
  j["constraint_slack"] = std::isnan(r.constraint_slack) ? nlohmann::json(nullptr) : nlohmann::json(r.constraint_slack);
  j["policy"] = to_json(r.policy, schema);
  j["diagnostics"] = std::move(diag);
  return j;
}

inline void write_diagnostics_csv(std::ostream& out, const CalibrationResult& r) {
  out << "t,obj_n,constraint_n,ucb,v_max,conformal,criterion,admissible\n";
  for (const auto& d : r.diagnostics) {
    out << detail::format_double(d.t) << ',' << detail::format_double(d.obj_n) << ','
        << detail::format_double(d.constraint_n) << ',' << detail::format_double(d.ucb) << ','
        << detail::format_double(d.v_max) << ',' << (std::isnan(d.conformal) ? "" : detail::format_double(d.conformal))
        << ',' << detail::format_double(d.criterion) << ',' << (d.admissible ? 1 : 0) << '\n';
  }
}

}  // namespace certpol
