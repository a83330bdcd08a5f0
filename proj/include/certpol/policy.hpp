#pragma once
// Fast-and-frugal tree policies: an ordered list of single-variable rules,
// each of which exits with a fixed action on one branch, followed by a
// default action.

#include <algorithm>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "certpol/data.hpp"
#include "certpol/error.hpp"

namespace certpol {

struct LessThan {
  double threshold = 0.0;
  bool operator==(const LessThan&) const = default;
};

// Membership in a set of category indices (sorted, unique).
struct InSet {
  std::vector<std::size_t> categories;
  bool operator==(const InSet&) const = default;
};

struct Predicate {
  std::string feature;
  std::size_t index = 0;  // column in the schema
  std::variant<LessThan, InSet> test;

  bool operator()(std::span<const double> x) const {
    const double v = x[index];
    if (const auto* lt = std::get_if<LessThan>(&test)) return v < lt->threshold;
    const auto& cats = std::get<InSet>(test).categories;
    return std::binary_search(cats.begin(), cats.end(), static_cast<std::size_t>(v));
  }

  bool operator==(const Predicate&) const = default;
};

struct Rule {
  Predicate predicate;
  int exit_action = 1;
  bool exit_on = true;  // branch of the predicate that terminates

  bool operator==(const Rule&) const = default;
};

struct FrugalTree {
  std::vector<Rule> rules;
  int default_action = 0;

  bool operator==(const FrugalTree&) const = default;
};

inline FrugalTree treat_none() { return FrugalTree{{}, 0}; }
inline FrugalTree treat_all() { return FrugalTree{{}, 1}; }

inline Predicate less_than(const CovariateSchema& schema, std::string_view feature, double threshold) {
  const std::size_t j = schema.require(feature);
  if (schema[j].kind != FeatureKind::continuous)
    throw SchemaError("'lt' predicate on categorical feature '" + std::string(feature) + "'");
  return Predicate{schema[j].name, j, LessThan{threshold}};
}

inline Predicate in_set(const CovariateSchema& schema, std::string_view feature, std::vector<std::string> codes) {
  const std::size_t j = schema.require(feature);
  if (schema[j].kind != FeatureKind::categorical)
    throw SchemaError("'in' predicate on continuous feature '" + std::string(feature) + "'");
  std::vector<std::size_t> cats;
  for (const auto& c : codes) {
    const auto k = schema.category_index(j, c);
    if (!k) throw SchemaError("unknown category '" + c + "' for feature '" + std::string(feature) + "'");
    cats.push_back(*k);
  }
  std::sort(cats.begin(), cats.end());
  cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
  if (cats.empty() || cats.size() >= schema[j].categories.size())
    throw SchemaError("'in' predicate must name a nonempty proper subset of categories");
  return Predicate{schema[j].name, j, InSet{std::move(cats)}};
}

// Throws SchemaError when a rule references a feature the schema lacks or
// uses the wrong test for the feature's kind.
inline void validate(const FrugalTree& tree, const CovariateSchema& schema) {
  if (tree.default_action != 0 && tree.default_action != 1) throw SchemaError("default_action must be 0 or 1");
  for (const auto& r : tree.rules) {
    const auto& p = r.predicate;
    const auto j = schema.index_of(p.feature);
    if (!j || *j != p.index) throw SchemaError("policy feature '" + p.feature + "' not in schema");
    const bool categorical = schema[*j].kind == FeatureKind::categorical;
    if (categorical != std::holds_alternative<InSet>(p.test))
      throw SchemaError("predicate on '" + p.feature + "' does not match the feature kind");
    if (const auto* s = std::get_if<InSet>(&p.test)) {
      if (s->categories.empty() || s->categories.size() >= schema[*j].categories.size() ||
          s->categories.back() >= schema[*j].categories.size())
        throw SchemaError("'in' predicate on '" + p.feature + "' is not a proper subset");
    }
    if (r.exit_action != 0 && r.exit_action != 1) throw SchemaError("exit_action must be 0 or 1");
  }
}

inline int apply(const FrugalTree& tree, std::span<const double> x) {
  for (const auto& r : tree.rules) {
    if (r.predicate.index >= x.size()) throw ArgumentError("covariate vector does not match the policy schema");
    if (r.predicate(x) == r.exit_on) return r.exit_action;
  }
  return tree.default_action;
}

inline std::vector<int> apply_all(const FrugalTree& tree, const Dataset& d) {
  std::vector<int> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = certpol::apply(tree, d.row(i));
  return out;
}

// JSON document:
//   {"rules": [{"feature": "x1", "op": "lt", "value": 40.7,
//               "exit_on": true, "exit_action": 1}, ...],
//    "default_action": 0}
// "in" rules carry an array of category codes as "value".
inline nlohmann::json to_json(const FrugalTree& tree, const CovariateSchema& schema) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : tree.rules) {
    nlohmann::json jr;
    jr["feature"] = r.predicate.feature;
    if (const auto* lt = std::get_if<LessThan>(&r.predicate.test)) {
      jr["op"] = "lt";
      jr["value"] = lt->threshold;
    } else {
      jr["op"] = "in";
      nlohmann::json codes = nlohmann::json::array();
      for (auto k : std::get<InSet>(r.predicate.test).categories)
        codes.push_back(schema[r.predicate.index].categories.at(k));
      jr["value"] = codes;
    }
    jr["exit_on"] = r.exit_on;
    jr["exit_action"] = r.exit_action;
    rules.push_back(std::move(jr));
  }
  return {{"rules", rules}, {"default_action", tree.default_action}};
}

inline FrugalTree tree_from_json(const nlohmann::json& j, const CovariateSchema& schema) {
  FrugalTree tree;
  try {
    tree.default_action = j.at("default_action").get<int>();
    for (const auto& jr : j.at("rules")) {
      Rule r;
      const auto feature = jr.at("feature").get<std::string>();
      const auto op = jr.at("op").get<std::string>();
      if (op == "lt")
        r.predicate = less_than(schema, feature, jr.at("value").get<double>());
      else if (op == "in")
        r.predicate = in_set(schema, feature, jr.at("value").get<std::vector<std::string>>());
      else
        throw SchemaError("unknown predicate op '" + op + "'");
      r.exit_on = jr.at("exit_on").get<bool>();
      r.exit_action = jr.at("exit_action").get<int>();
      tree.rules.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed policy document: ") + e.what());
  }
  validate(tree, schema);
  return tree;
}

// One line per rule, e.g. "if x1 < 40.7 then 1".
inline std::string describe(const FrugalTree& tree, const CovariateSchema& schema) {
  std::ostringstream os;
  for (const auto& r : tree.rules) {
    const auto& p = r.predicate;
    os << "if " << (r.exit_on ? "" : "not ");
    if (const auto* lt = std::get_if<LessThan>(&p.test)) {
      os << p.feature << " < " << detail::format_double(lt->threshold);
    } else {
      os << p.feature << " in {";
      const auto& cats = std::get<InSet>(p.test).categories;
      for (std::size_t k = 0; k < cats.size(); ++k)
        os << (k ? "," : "") << schema[p.index].categories.at(cats[k]);
      os << '}';
    }
    os << " then " << r.exit_action << '\n';
  }
  os << "otherwise " << tree.default_action << '\n';
  return os.str();
}

}  // namespace certpol
