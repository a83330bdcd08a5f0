#pragma once
// Worst-case importance weights under a bounded odds miscalibration and the
// weighted plug-in estimates of population and treatment risk built on them.
//
// Observational data:  W = [1 + gamma * (1/p(A|x) - 1)] * 1{A = pi(x)}
// Trial data:          W = gamma * odds_sel(x) * p(S=1)/p(S=0) * 1{A = pi(x)} / p(A)
//
// With gamma = 1 and a correct nominal model both reduce to the exact
// importance weight, so the estimates are unbiased for R(pi) and T(pi).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "certpol/data.hpp"
#include "certpol/error.hpp"
#include "certpol/policy.hpp"

namespace certpol {

inline constexpr double kProbabilityClamp = 1e-6;

inline double clamp_probability(double p) {
  if (std::isnan(p)) throw DomainError("nominal model returned NaN");
  return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

using CovariateFn = std::function<double(std::span<const double>)>;

// Nominal assignment model p(A=1 | x).
class AssignmentModel {
 public:
  AssignmentModel() = default;
  explicit AssignmentModel(CovariateFn p_treat) : p_treat_(std::move(p_treat)) {}

  static AssignmentModel constant(double p) {
    return AssignmentModel([p](std::span<const double>) { return p; });
  }

  double p_treat(std::span<const double> x) const { return clamp_probability(p_treat_(x)); }

  // Probability of the observed action.
  double p_action(std::span<const double> x, int a) const {
    const double p1 = p_treat(x);
    return a == 1 ? p1 : 1.0 - p1;
  }

 private:
  CovariateFn p_treat_;
};

// Nominal selection model for trial data.
struct SelectionModel {
  CovariateFn selection_odds;   // p(S=0|x) / p(S=1|x)
  double marginal_ratio = 1.0;  // p(S=1) / p(S=0)
  double p_treat_trial = 0.5;   // randomized p(A=1)

  // Odds built from a nominal p(S=1|x); the probability is clamped first.
  static SelectionModel from_probability(CovariateFn p_select, double marginal_ratio, double p_treat_trial = 0.5) {
    return SelectionModel{[f = std::move(p_select)](std::span<const double> x) {
                            const double p = clamp_probability(f(x));
                            return (1.0 - p) / p;
                          },
                          marginal_ratio, p_treat_trial};
  }

  void validate() const {
    if (!(marginal_ratio > 0.0) || !std::isfinite(marginal_ratio))
      throw ConfigError("marginal_ratio must be positive");
    if (!(p_treat_trial > 0.0 && p_treat_trial < 1.0)) throw ConfigError("p_treat_trial must lie in (0,1)");
  }

  double odds(std::span<const double> x) const {
    const double o = selection_odds(x);
    if (!(o > 0.0) || !std::isfinite(o)) throw DomainError("selection odds must be positive and finite");
    return o;
  }
};

using NominalModel = std::variant<AssignmentModel, SelectionModel>;

struct MiscalibrationConfig {
  double gamma = 1.0;
  Source regime = Source::observational;

  void validate() const {
    if (!(gamma >= 1.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be >= 1");
  }
};

inline double obs_weight(std::span<const double> x, int a, int policy_action, const AssignmentModel& model,
                         const MiscalibrationConfig& cfg) {
  if (a != policy_action) return 0.0;
  return 1.0 + cfg.gamma * (1.0 / model.p_action(x, a) - 1.0);
}

inline double obs_weight(const Sample& s, int policy_action, const AssignmentModel& model,
                         const MiscalibrationConfig& cfg) {
  return obs_weight(s.x, s.a, policy_action, model, cfg);
}

inline double rct_weight(std::span<const double> x, int a, int policy_action, const SelectionModel& model,
                         const MiscalibrationConfig& cfg) {
  if (a != policy_action) return 0.0;
  const double p_a = a == 1 ? model.p_treat_trial : 1.0 - model.p_treat_trial;
  return cfg.gamma * model.odds(x) * model.marginal_ratio / p_a;
}

inline double rct_weight(const Sample& s, int policy_action, const SelectionModel& model,
                         const MiscalibrationConfig& cfg) {
  return rct_weight(s.x, s.a, policy_action, model, cfg);
}

inline void check_model(const NominalModel& model, const MiscalibrationConfig& cfg) {
  cfg.validate();
  const bool obs = std::holds_alternative<AssignmentModel>(model);
  if (obs != (cfg.regime == Source::observational))
    throw ConfigError(obs ? "trial regime needs a selection model" : "observational regime needs an assignment model");
  if (const auto* sel = std::get_if<SelectionModel>(&model)) sel->validate();
}

inline double bounded_weight(std::span<const double> x, int a, int policy_action, const NominalModel& model,
                             const MiscalibrationConfig& cfg) {
  if (const auto* am = std::get_if<AssignmentModel>(&model)) return obs_weight(x, a, policy_action, *am, cfg);
  return rct_weight(x, a, policy_action, std::get<SelectionModel>(model), cfg);
}

// Per-sample quantities that do not depend on the policy. A policy only
// decides, per sample, whether loss_if_treat or loss_if_control counts.
struct SampleTerms {
  std::vector<double> loss_if_treat;    // L * 1{A=1} * W at policy action 1
  std::vector<double> loss_if_control;  // L * 1{A=0} * W at policy action 0
  std::vector<double> treat_weight;     // W at A = policy action = 1 (for v_max)
  std::vector<std::uint8_t> observed_treated;  // A == 1

  std::size_t size() const noexcept { return loss_if_treat.size(); }
};

inline SampleTerms make_terms(const Dataset& d, const NominalModel& model, const MiscalibrationConfig& cfg) {
  check_model(model, cfg);
  SampleTerms t;
  t.loss_if_treat.resize(d.size());
  t.loss_if_control.resize(d.size());
  t.treat_weight.resize(d.size());
  t.observed_treated.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto x = d.row(i);
    const int a = d.action(i);
    const double w = bounded_weight(x, a, a, model, cfg);
    const bool loss = d.loss(i) == 1;
    t.loss_if_treat[i] = (loss && a == 1) ? w : 0.0;
    t.loss_if_control[i] = (loss && a == 0) ? w : 0.0;
    t.treat_weight[i] = a == 1 ? w : bounded_weight(x, 1, 1, model, cfg);
    t.observed_treated[i] = a == 1 ? 1 : 0;
  }
  return t;
}

struct PolicyScore {
  double objective = 0.0;   // mean of L * W
  double constraint = 0.0;  // mean of V = L * 1{A=1} / rho * W; 0 when nobody treated
  double rho = 0.0;         // proportion treated
  std::size_t treated = 0;

  bool operator==(const PolicyScore&) const = default;
};

// Sums run in sample order so that any two callers scoring the same action
// vector get bit-identical results.
inline PolicyScore score_actions(const SampleTerms& t, std::span<const int> actions) {
  double obj = 0.0, treated_loss = 0.0;
  std::size_t treated = 0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] == 1) {
      obj += t.loss_if_treat[i];
      treated_loss += t.loss_if_treat[i];
      ++treated;
    } else {
      obj += t.loss_if_control[i];
    }
  }
  const double n = static_cast<double>(actions.size());
  PolicyScore s;
  s.objective = actions.empty() ? 0.0 : obj / n;
  s.treated = treated;
  s.rho = actions.empty() ? 0.0 : static_cast<double>(treated) / n;
  s.constraint = treated == 0 ? 0.0 : treated_loss / static_cast<double>(treated);
  return s;
}

inline double proportion_treated(const FrugalTree& policy, const Dataset& d) {
  if (d.empty()) throw ArgumentError("proportion treated of an empty dataset");
  std::size_t treated = 0;
  for (std::size_t i = 0; i < d.size(); ++i) treated += certpol::apply(policy, d.row(i)) == 1;
  return static_cast<double>(treated) / static_cast<double>(d.size());
}

inline PolicyScore score_policy(const Dataset& d, const FrugalTree& policy, const NominalModel& model,
                                const MiscalibrationConfig& cfg) {
  const auto terms = make_terms(d, model, cfg);
  const auto actions = apply_all(policy, d);
  return score_actions(terms, actions);
}

// Plug-in estimate of the population-risk bound, mean of L * W.
inline double population_risk_estimate(const Dataset& d, const FrugalTree& policy, const NominalModel& model,
                                       const MiscalibrationConfig& cfg) {
  if (d.empty()) throw ArgumentError("risk estimate on an empty dataset");
  return score_policy(d, policy, model, cfg).objective;
}

// Plug-in estimate of the treatment-risk bound, mean of V. Exactly 0 when
// the policy treats nobody in `d`.
inline double treatment_risk_estimate(const Dataset& d, const FrugalTree& policy, const NominalModel& model,
                                      const MiscalibrationConfig& cfg) {
  if (d.empty()) throw ArgumentError("risk estimate on an empty dataset");
  return score_policy(d, policy, model, cfg).constraint;
}

// Largest value V can take on `d`: the largest treat weight among samples
// that were treated and that the policy treats, divided by rho. If the policy
// treats no sample observed with A=1, every V is 0 and the maximum runs over
// all samples the policy treats instead, so the result stays positive.
inline double v_max(const SampleTerms& t, std::span<const int> actions) {
  double agreeing = 0.0, any = 0.0;
  std::size_t treated = 0;
  bool has_agreeing = false;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] != 1) continue;
    ++treated;
    any = std::max(any, t.treat_weight[i]);
    if (t.observed_treated[i]) {
      has_agreeing = true;
      agreeing = std::max(agreeing, t.treat_weight[i]);
    }
  }
  if (treated == 0) throw DegenerateError("v_max undefined: the policy treats nobody");
  const double w = has_agreeing ? agreeing : any;
  return w * static_cast<double>(actions.size()) / static_cast<double>(treated);
}

inline double v_max(const Dataset& d, const FrugalTree& policy, const NominalModel& model,
                    const MiscalibrationConfig& cfg) {
  return v_max(make_terms(d, model, cfg), apply_all(policy, d));
}

struct WeightedSample {
  double w = 0.0;                // W
  double v = 0.0;                // L * 1{A=1} / rho * W
  double contributes_obj = 0.0;  // L * W
};

inline std::vector<double> constraint_values(const SampleTerms& t, std::span<const int> actions) {
  std::size_t treated = 0;
  for (int a : actions) treated += a == 1;
  std::vector<double> v(actions.size(), 0.0);
  if (treated == 0) return v;
  const double rho = static_cast<double>(treated) / static_cast<double>(actions.size());
  for (std::size_t i = 0; i < actions.size(); ++i)
    if (actions[i] == 1) v[i] = t.loss_if_treat[i] / rho;
  return v;
}

inline std::vector<WeightedSample> weighted_samples(const Dataset& d, const FrugalTree& policy,
                                                    const NominalModel& model, const MiscalibrationConfig& cfg) {
  check_model(model, cfg);
  const auto terms = make_terms(d, model, cfg);
  const auto actions = apply_all(policy, d);
  const auto v = constraint_values(terms, actions);
  std::vector<WeightedSample> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    out[i].w = bounded_weight(d.row(i), d.action(i), actions[i], model, cfg);
    out[i].v = v[i];
    out[i].contributes_obj = d.loss(i) * out[i].w;
  }
  return out;
}

}  // namespace certpol
