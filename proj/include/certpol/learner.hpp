#pragma once
// Constrained greedy induction of fast-and-frugal trees, and an exhaustive
// enumerator used as a test oracle.
//
// Both minimize the weighted population-risk estimate over the training set
// subject to the weighted treatment-risk estimate being at most t. Candidate
// scores do not depend on t, so a TreeLearner can be reused across a whole
// tolerance grid and only re-filters cached scores for feasibility.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "certpol/data.hpp"
#include "certpol/error.hpp"
#include "certpol/policy.hpp"
#include "certpol/weights.hpp"

namespace certpol {

struct LearnConfig {
  std::size_t max_depth = 1;
  std::size_t bins = 200;
  MiscalibrationConfig cfg;
  NominalModel model;
  double t = 0.1;  // nominal tolerance in (0,1)
  std::vector<std::string> features;  // features rules may test; empty means all

  void validate() const {
    if (max_depth < 1) throw ConfigError("max_depth must be at least 1");
    if (bins < 1) throw ConfigError("bins must be at least 1");
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("nominal tolerance t must lie in (0,1)");
    check_model(model, cfg);
  }
};

struct ScoredTree {
  FrugalTree tree;
  PolicyScore score;
};

struct LearnResult {
  FrugalTree tree;
  PolicyScore score;
  // Trees stored along the grown branch, in growth order.
  std::vector<ScoredTree> stored;
};

// Candidate predicates in tie-break order: schema order of features, then
// ascending threshold (continuous) or category index (categorical, one
// category per set). A nonempty `features` restricts the candidates to the
// named features.
inline std::vector<Predicate> candidate_predicates(const Dataset& d, std::size_t bins,
                                                   const std::vector<std::string>& features = {}) {
  std::vector<Predicate> out;
  const auto& schema = d.schema();
  for (const auto& name : features) schema.require(name);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    if (!features.empty() && std::find(features.begin(), features.end(), f.name) == features.end()) continue;
    if (f.kind == FeatureKind::continuous) {
      for (double thr : discretize(d, f.name, bins)) out.push_back(Predicate{f.name, j, LessThan{thr}});
    } else {
      for (std::size_t k = 0; k < f.categories.size(); ++k) out.push_back(Predicate{f.name, j, InSet{{k}}});
    }
  }
  return out;
}

class TreeLearner {
 public:
  TreeLearner(const Dataset& train, std::size_t max_depth, std::size_t bins, const NominalModel& model,
              const MiscalibrationConfig& cfg, const std::vector<std::string>& features = {})
      : max_depth_(max_depth) {
    if (train.empty()) throw ArgumentError("cannot learn from an empty dataset");
    if (max_depth < 1) throw ConfigError("max_depth must be at least 1");
    terms_ = make_terms(train, model, cfg);
    predicates_ = candidate_predicates(train, bins, features);
    n_ = train.size();
    bits_.resize(predicates_.size() * n_);
    for (std::size_t p = 0; p < predicates_.size(); ++p)
      for (std::size_t i = 0; i < n_; ++i) bits_[p * n_ + i] = predicates_[p](train.row(i)) ? 1 : 0;
    for (int d : {0, 1}) {
      const std::vector<int> actions(n_, d);
      empties_[d] = score_actions(terms_, actions);
    }
  }

  explicit TreeLearner(const Dataset& train, const LearnConfig& c)
      : TreeLearner(train, c.max_depth, c.bins, c.model, c.cfg, c.features) {}

  LearnResult learn(double t) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("nominal tolerance t must lie in (0,1)");
    auto feasible = [t](const PolicyScore& s) { return s.constraint <= t; };

    // Empty trees: treat-none is always feasible; treat-all only if its
    // constraint estimate is within t.
    LearnResult result;
    int start = 0;
    if (feasible(empties_[1]) && empties_[1].objective < empties_[0].objective) start = 1;
    Node current = root(start);
    result.stored.push_back({current.tree, current.score});

    for (std::size_t depth = 1; depth <= max_depth_; ++depth) {
      const auto& cands = candidates_for(current);
      const Candidate* best = nullptr;
      for (const auto& c : cands)
        if (feasible(c.score) && (!best || c.score.objective < best->score.objective)) best = &c;
      if (!best || !(best->score.objective < current.score.objective)) break;
      current = extend(current, *best);
      result.stored.push_back({current.tree, current.score});
    }

    // Stored objectives strictly decrease, so the last stored tree is the
    // minimizer; the scan keeps the earliest (shortest) on exact ties.
    const ScoredTree* pick = &result.stored.front();
    for (const auto& s : result.stored)
      if (feasible(s.score) && s.score.objective < pick->score.objective) pick = &s;
    result.tree = pick->tree;
    result.score = pick->score;
    return result;
  }

  const SampleTerms& terms() const noexcept { return terms_; }
  const std::vector<Predicate>& predicates() const noexcept { return predicates_; }

 private:
  struct Candidate {
    std::size_t predicate;
    bool exit_on;
    int exit_action;
    int default_action;
    PolicyScore score;
  };

  // A grown tree plus, per sample, the action it receives if it exits before
  // the default (-1 if it reaches the default).
  struct Node {
    FrugalTree tree;
    PolicyScore score;
    std::vector<std::int8_t> exited;
  };

  struct CacheEntry {
    std::vector<Rule> rules;
    std::vector<Candidate> candidates;
  };

  Node root(int default_action) const {
    return Node{FrugalTree{{}, default_action}, empties_[default_action], std::vector<std::int8_t>(n_, -1)};
  }

  // All one-rule extensions (predicate x exit_on x exit_action x default),
  // enumerated in tie-break order. Cached by rule prefix: the default of the
  // current tree does not affect its extensions.
  const std::vector<Candidate>& candidates_for(const Node& node) {
    for (const auto& e : cache_)
      if (e.rules == node.tree.rules) return e.candidates;

    std::vector<Candidate> out;
    out.reserve(predicates_.size() * 8);
    for (std::size_t p = 0; p < predicates_.size(); ++p) {
      // combo index k = (exit_on False ? 4 : 0) + exit_action * 2 + default
      std::array<double, 8> obj{}, treated_loss{};
      std::array<std::size_t, 8> treated{};
      const std::uint8_t* bits = bits_.data() + p * n_;
      for (std::size_t i = 0; i < n_; ++i) {
        const double c1 = terms_.loss_if_treat[i];
        const double c0 = terms_.loss_if_control[i];
        for (std::size_t k = 0; k < 8; ++k) {
          const bool exit_on = k < 4;
          const int exit_action = static_cast<int>((k >> 1) & 1);
          const int def = static_cast<int>(k & 1);
          int act;
          if (node.exited[i] >= 0)
            act = node.exited[i];
          else
            act = (bits[i] == 1) == exit_on ? exit_action : def;
          // same accumulation order as score_actions
          if (act == 1) {
            obj[k] += c1;
            treated_loss[k] += c1;
            ++treated[k];
          } else {
            obj[k] += c0;
          }
        }
      }
      for (std::size_t k = 0; k < 8; ++k) {
        PolicyScore s;
        const double n = static_cast<double>(n_);
        s.objective = obj[k] / n;
        s.treated = treated[k];
        s.rho = static_cast<double>(treated[k]) / n;
        s.constraint = treated[k] == 0 ? 0.0 : treated_loss[k] / static_cast<double>(treated[k]);
        out.push_back(Candidate{p, k < 4, static_cast<int>((k >> 1) & 1), static_cast<int>(k & 1), s});
      }
    }
    cache_.push_back(CacheEntry{node.tree.rules, std::move(out)});
    return cache_.back().candidates;
  }

  Node extend(const Node& node, const Candidate& c) const {
    Node next;
    next.tree = node.tree;
    next.tree.rules.push_back(Rule{predicates_[c.predicate], c.exit_action, c.exit_on});
    next.tree.default_action = c.default_action;
    next.score = c.score;
    next.exited = node.exited;
    const std::uint8_t* bits = bits_.data() + c.predicate * n_;
    for (std::size_t i = 0; i < n_; ++i)
      if (next.exited[i] < 0 && (bits[i] == 1) == c.exit_on) next.exited[i] = static_cast<std::int8_t>(c.exit_action);
    return next;
  }

  std::size_t max_depth_;
  std::size_t n_ = 0;
  SampleTerms terms_;
  std::vector<Predicate> predicates_;
  std::vector<std::uint8_t> bits_;  // predicate-major truth table
  std::array<PolicyScore, 2> empties_{};
  std::vector<CacheEntry> cache_;
};

inline LearnResult learn_constrained(const Dataset& train, const LearnConfig& config) {
  config.validate();
  TreeLearner learner(train, config);
  return learner.learn(config.t);
}

// Number of trees with at most `max_depth` rules over `predicates` candidate
// predicates, counting both default actions.
inline double count_trees(std::size_t predicates, std::size_t max_depth) {
  double per_default = 0.0, layer = 1.0;
  for (std::size_t k = 0; k <= max_depth; ++k) {
    per_default += layer;
    layer *= 4.0 * static_cast<double>(predicates);
  }
  return 2.0 * per_default;
}

inline constexpr double kExhaustiveBudget = 1e6;

// Brute force over every tree with at most max_depth rules. Trees are visited
// in tie-break order (fewer rules; then per rule: feature, threshold,
// exit_on true first, exit_action 0 first; then default 0 first) and the
// first feasible minimizer is kept.
inline LearnResult exhaustive_learn(const Dataset& train, const LearnConfig& config) {
  config.validate();
  if (train.empty()) throw ArgumentError("cannot learn from an empty dataset");
  const auto preds = candidate_predicates(train, config.bins, config.features);
  if (count_trees(preds.size(), config.max_depth) > kExhaustiveBudget)
    throw CapacityError("exhaustive search space exceeds " + std::to_string(static_cast<long>(kExhaustiveBudget)) +
                        " trees");
  const auto terms = make_terms(train, config.model, config.cfg);

  LearnResult best;
  bool have = false;
  auto visit = [&](const FrugalTree& tree) {
    const auto actions = apply_all(tree, train);
    const auto s = score_actions(terms, actions);
    if (s.constraint > config.t) return;
    if (!have || s.objective < best.score.objective) {
      best.tree = tree;
      best.score = s;
      have = true;
    }
  };

  FrugalTree tree;
  for (std::size_t depth = 0; depth <= config.max_depth; ++depth) {
    // odometer over `depth` rule slots, each slot = predicate * 4 + side/action
    std::vector<std::size_t> slot(depth, 0);
    const std::size_t per_slot = preds.size() * 4;
    if (depth > 0 && per_slot == 0) break;
    while (true) {
      tree.rules.clear();
      for (auto s : slot) {
        const std::size_t p = s / 4;
        const bool exit_on = (s % 4) < 2;
        const int exit_action = static_cast<int>(s % 2);
        tree.rules.push_back(Rule{preds[p], exit_action, exit_on});
      }
      for (int d : {0, 1}) {
        tree.default_action = d;
        visit(tree);
      }
      std::size_t k = depth;
      while (k > 0 && ++slot[k - 1] == per_slot) slot[--k] = 0;
      if (k == 0) break;
    }
  }
  return best;
}

}  // namespace certpol
