#pragma once
// Tabular samples (covariates, binary action, binary loss), CSV ingestion,
// seeded splitting and equal-width covariate discretization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "certpol/error.hpp"
#include "certpol/rng.hpp"

namespace certpol {

enum class FeatureKind { continuous, categorical };

// Observational data come from the patient population (S=0); trial data
// from the selected trial population (S=1).
enum class Source { observational, trial };

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::string> categories;  // only for categorical features

  bool operator==(const Feature&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_view(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

class CovariateSchema {
 public:
  CovariateSchema() = default;

  explicit CovariateSchema(std::vector<Feature> features) : features_(std::move(features)) {
    for (std::size_t j = 0; j < features_.size(); ++j) {
      const auto& f = features_[j];
      if (f.name.empty()) throw SchemaError("feature names must be nonempty");
      if (!index_.emplace(f.name, j).second) throw SchemaError("duplicate feature name '" + f.name + "'");
      if (f.kind == FeatureKind::categorical) {
        if (f.categories.size() < 2)
          throw SchemaError("categorical feature '" + f.name + "' needs at least two categories");
        std::unordered_set<std::string> seen;
        for (const auto& c : f.categories)
          if (!seen.insert(c).second)
            throw SchemaError("duplicate category '" + c + "' in feature '" + f.name + "'");
      } else if (!f.categories.empty()) {
        throw SchemaError("continuous feature '" + f.name + "' cannot list categories");
      }
    }
  }

  std::size_t size() const noexcept { return features_.size(); }
  const Feature& operator[](std::size_t j) const { return features_.at(j); }
  const std::vector<Feature>& features() const noexcept { return features_; }

  std::optional<std::size_t> index_of(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t require(std::string_view name) const {
    if (auto j = index_of(name)) return *j;
    throw SchemaError("unknown feature '" + std::string(name) + "'");
  }

  // Category code -> stored value (the category's index).
  std::optional<std::size_t> category_index(std::size_t feature, std::string_view code) const {
    const auto& cats = features_.at(feature).categories;
    const auto it = std::find(cats.begin(), cats.end(), code);
    if (it == cats.end()) return std::nullopt;
    return static_cast<std::size_t>(it - cats.begin());
  }

  bool operator==(const CovariateSchema& o) const { return features_ == o.features_; }

 private:
  std::vector<Feature> features_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Sidecar format, one feature per line, order defines column indices:
//   age = continuous
//   gender = categorical: male, female
// Blank lines and lines starting with '#' are ignored.
inline CovariateSchema parse_schema(std::istream& in) {
  std::vector<Feature> features;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw SchemaError("schema line " + std::to_string(lineno) + ": expected 'name = kind'");
    Feature f;
    f.name = std::string(detail::trim(body.substr(0, eq)));
    auto rhs = detail::trim(body.substr(eq + 1));
    if (rhs == "continuous") {
      f.kind = FeatureKind::continuous;
    } else if (rhs.starts_with("categorical")) {
      f.kind = FeatureKind::categorical;
      rhs.remove_prefix(std::string_view("categorical").size());
      rhs = detail::trim(rhs);
      if (rhs.empty() || rhs.front() != ':')
        throw SchemaError("schema line " + std::to_string(lineno) + ": categorical needs ': code, code, ...'");
      rhs.remove_prefix(1);
      for (auto code : detail::split_view(rhs, ',')) f.categories.emplace_back(detail::trim(code));
    } else {
      throw SchemaError("schema line " + std::to_string(lineno) + ": unknown kind '" + std::string(rhs) + "'");
    }
    features.push_back(std::move(f));
  }
  return CovariateSchema(std::move(features));
}

inline CovariateSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open schema file '" + path + "'");
  return parse_schema(in);
}

inline void write_schema(std::ostream& out, const CovariateSchema& schema) {
  for (const auto& f : schema.features()) {
    out << f.name << " = ";
    if (f.kind == FeatureKind::continuous) {
      out << "continuous\n";
      continue;
    }
    out << "categorical:";
    for (std::size_t k = 0; k < f.categories.size(); ++k) out << (k ? ", " : " ") << f.categories[k];
    out << '\n';
  }
}

// One observation. Categorical covariates hold their category index.
struct Sample {
  std::vector<double> x;
  int a = 0;
  int l = 0;
};

// Immutable after construction. Covariates are stored row-major.
class Dataset {
 public:
  Dataset() = default;

  Dataset(CovariateSchema schema, Source source, std::vector<double> values, std::vector<int> actions,
          std::vector<int> losses)
      : schema_(std::move(schema)),
        source_(source),
        values_(std::move(values)),
        actions_(std::move(actions)),
        losses_(std::move(losses)) {
    const std::size_t p = schema_.size();
    if (actions_.size() != losses_.size() || values_.size() != actions_.size() * p)
      throw ArgumentError("dataset column lengths disagree");
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      if ((actions_[i] != 0 && actions_[i] != 1) || (losses_[i] != 0 && losses_[i] != 1))
        throw ArgumentError("sample " + std::to_string(i) + ": action and loss must be 0 or 1");
      check_row(i);
    }
  }

  Dataset(CovariateSchema schema, Source source, const std::vector<Sample>& samples)
      : Dataset(pack(std::move(schema), source, samples)) {}

  std::size_t size() const noexcept { return actions_.size(); }
  bool empty() const noexcept { return actions_.empty(); }
  const CovariateSchema& schema() const noexcept { return schema_; }
  Source source() const noexcept { return source_; }

  std::span<const double> row(std::size_t i) const {
    const std::size_t p = schema_.size();
    return {values_.data() + i * p, p};
  }
  double value(std::size_t i, std::size_t j) const { return values_[i * schema_.size() + j]; }
  int action(std::size_t i) const { return actions_[i]; }
  int loss(std::size_t i) const { return losses_[i]; }
  const std::vector<int>& actions() const noexcept { return actions_; }
  const std::vector<int>& losses() const noexcept { return losses_; }

  Sample sample(std::size_t i) const {
    auto r = row(i);
    return Sample{{r.begin(), r.end()}, actions_[i], losses_[i]};
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = value(i, j);
    return out;
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    const std::size_t p = schema_.size();
    std::vector<double> values;
    values.reserve(indices.size() * p);
    std::vector<int> a, l;
    a.reserve(indices.size());
    l.reserve(indices.size());
    for (auto i : indices) {
      auto r = row(i);
      values.insert(values.end(), r.begin(), r.end());
      a.push_back(actions_[i]);
      l.push_back(losses_[i]);
    }
    Dataset out;
    out.schema_ = schema_;
    out.source_ = source_;
    out.values_ = std::move(values);
    out.actions_ = std::move(a);
    out.losses_ = std::move(l);
    return out;
  }

 private:
  static Dataset pack(CovariateSchema schema, Source source, const std::vector<Sample>& samples) {
    const std::size_t p = schema.size();
    std::vector<double> values;
    values.reserve(samples.size() * p);
    std::vector<int> a, l;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].x.size() != p)
        throw ArgumentError("sample " + std::to_string(i) + ": expected " + std::to_string(p) + " covariates");
      values.insert(values.end(), samples[i].x.begin(), samples[i].x.end());
      a.push_back(samples[i].a);
      l.push_back(samples[i].l);
    }
    return Dataset(std::move(schema), source, std::move(values), std::move(a), std::move(l));
  }

  void check_row(std::size_t i) const {
    for (std::size_t j = 0; j < schema_.size(); ++j) {
      const double v = value(i, j);
      if (!std::isfinite(v)) throw ArgumentError("sample " + std::to_string(i) + ": non-finite covariate");
      const auto& f = schema_[j];
      if (f.kind == FeatureKind::categorical &&
          (v < 0 || v != std::floor(v) || v >= static_cast<double>(f.categories.size())))
        throw ArgumentError("sample " + std::to_string(i) + ": invalid category index for '" + f.name + "'");
    }
  }

  CovariateSchema schema_;
  Source source_ = Source::observational;
  std::vector<double> values_;
  std::vector<int> actions_;
  std::vector<int> losses_;
};

struct CsvColumns {
  std::string action = "a";
  std::string loss = "l";
};

// Comma-separated, header row first, no quoting. Columns not named by the
// schema or `cols` are ignored. Missing values are rejected.
inline Dataset read_csv(std::istream& in, const CovariateSchema& schema, const CsvColumns& cols, Source source) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty CSV: missing header row");
  const auto header = detail::split_view(detail::trim(line), ',');
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t c = 0; c < header.size(); ++c) pos.emplace(std::string(detail::trim(header[c])), c);
  auto locate = [&](const std::string& name) {
    const auto it = pos.find(name);
    if (it == pos.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> feature_col(schema.size());
  for (std::size_t j = 0; j < schema.size(); ++j) feature_col[j] = locate(schema[j].name);
  const std::size_t a_col = locate(cols.action);
  const std::size_t l_col = locate(cols.loss);

  std::vector<double> values;
  std::vector<int> actions, losses;
  std::size_t row = 0;
  auto binary = [&](std::string_view cell, const std::string& name) {
    const auto v = detail::parse_double(cell);
    if (!v || (*v != 0.0 && *v != 1.0))
      throw ParseError(row, "column '" + name + "' must be 0 or 1, got '" + std::string(detail::trim(cell)) + "'");
    return static_cast<int>(*v);
  };
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_view(line, ',');
    if (cells.size() != header.size())
      throw ParseError(row, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto cell = detail::trim(cells[feature_col[j]]);
      if (cell.empty()) throw ParseError(row, "missing value for '" + schema[j].name + "'");
      if (schema[j].kind == FeatureKind::categorical) {
        const auto k = schema.category_index(j, cell);
        if (!k) throw ParseError(row, "unknown category '" + std::string(cell) + "' for '" + schema[j].name + "'");
        values.push_back(static_cast<double>(*k));
      } else {
        const auto v = detail::parse_double(cell);
        if (!v) throw ParseError(row, "non-numeric value '" + std::string(cell) + "' for '" + schema[j].name + "'");
        values.push_back(*v);
      }
    }
    actions.push_back(binary(cells[a_col], cols.action));
    losses.push_back(binary(cells[l_col], cols.loss));
  }
  return Dataset(schema, source, std::move(values), std::move(actions), std::move(losses));
}

inline Dataset load_csv(const std::string& path, const CovariateSchema& schema, const CsvColumns& cols,
                        Source source) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path + "'");
  return read_csv(in, schema, cols, source);
}

// Extra columns are written after the action and loss columns; each must
// hold one value per sample.
struct ExtraColumn {
  std::string name;
  std::vector<double> values;
};

inline void write_csv(std::ostream& out, const Dataset& d, const CsvColumns& cols = {},
                      std::span<const ExtraColumn> extra = {}) {
  const auto& schema = d.schema();
  for (std::size_t j = 0; j < schema.size(); ++j) out << schema[j].name << ',';
  out << cols.action << ',' << cols.loss;
  for (const auto& e : extra) out << ',' << e.name;
  out << '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const double v = d.value(i, j);
      if (schema[j].kind == FeatureKind::categorical)
        out << schema[j].categories[static_cast<std::size_t>(v)];
      else
        out << detail::format_double(v);
      out << ',';
    }
    out << d.action(i) << ',' << d.loss(i);
    for (const auto& e : extra) out << ',' << detail::format_double(e.values.at(i));
    out << '\n';
  }
}

struct SplitSpec {
  std::vector<double> fractions;
  std::uint64_t seed = 0;
};

// Part sizes before assignment: floor of each target, leftover samples go
// one at a time to the earliest parts.
inline std::vector<std::size_t> split_sizes(std::size_t n, std::span<const double> fractions) {
  if (fractions.empty()) throw ConfigError("split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("split fractions must sum to 1");
  std::vector<std::size_t> sizes(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    // the epsilon keeps 0.29*100 from flooring to 28
    sizes[k] = static_cast<std::size_t>(std::floor(fractions[k] * static_cast<double>(n) + 1e-9));
    assigned += sizes[k];
  }
  for (std::size_t k = 0; assigned < n; k = (k + 1) % sizes.size(), ++assigned) ++sizes[k];
  return sizes;
}

// Uniform (unstratified) random partition. Within each part the original
// row order is kept.
inline std::vector<Dataset> split(const Dataset& d, const SplitSpec& spec) {
  if (d.empty()) throw ArgumentError("cannot split an empty dataset");
  const auto sizes = split_sizes(d.size(), spec.fractions);
  std::vector<std::size_t> perm(d.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(spec.seed);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<Dataset> parts;
  parts.reserve(sizes.size());
  auto first = perm.begin();
  for (auto sz : sizes) {
    std::vector<std::size_t> idx(first, first + static_cast<std::ptrdiff_t>(sz));
    std::sort(idx.begin(), idx.end());
    parts.push_back(d.subset(idx));
    first += static_cast<std::ptrdiff_t>(sz);
  }
  return parts;
}

// Equal-width interior thresholds over the observed range:
// min + j*(max-min)/(bins+1), j = 1..bins. Empty for a constant feature.
inline std::vector<double> discretize(const Dataset& d, std::string_view feature, std::size_t bins) {
  const std::size_t j = d.schema().require(feature);
  if (d.schema()[j].kind != FeatureKind::continuous)
    throw SchemaError("cannot discretize categorical feature '" + std::string(feature) + "'");
  if (bins < 1) throw ConfigError("bins must be at least 1");
  if (d.empty()) return {};
  double lo = d.value(0, j), hi = lo;
  for (std::size_t i = 1; i < d.size(); ++i) {
    lo = std::min(lo, d.value(i, j));
    hi = std::max(hi, d.value(i, j));
  }
  if (!(lo < hi)) return {};
  std::vector<double> out(bins);
  const double width = (hi - lo) / static_cast<double>(bins + 1);
  for (std::size_t k = 0; k < bins; ++k) out[k] = lo + static_cast<double>(k + 1) * width;
  return out;
}

}  // namespace certpol
