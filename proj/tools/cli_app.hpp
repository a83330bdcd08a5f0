#pragma once
// The certpol command-line tool. run_cli takes argv-style arguments and
// returns the process exit code, so tests can drive it in-process.
//
// Exit codes: 0 success (an infeasible calibration with its fallback policy
// counts as success), 1 runtime or I/O failure, 2 usage or configuration
// error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "certpol/certpol.hpp"

#ifndef CERTPOL_VERSION
#define CERTPOL_VERSION "0.1.0"
#endif

namespace certpol::cli {

namespace fs = std::filesystem;

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Drops the "out" entry from a CLI11 config dump, so the hash identifies
// the computation and not where its results were written.
inline std::string config_without_output(const std::string& dump) {
  std::istringstream in(dump);
  std::string line, kept;
  while (std::getline(in, line))
    if (line.rfind("out=", 0) != 0 && line.rfind("out =", 0) != 0) kept += line + '\n';
  return kept;
}

struct RunInfo {
  std::string command;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

inline std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

// Metadata goes to "<file>.meta" so data files stay plain tables.
inline void write_meta(const fs::path& file, const RunInfo& info,
                       const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  auto out = open_output(fs::path(file.string() + ".meta"));
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << info.config_hash;
  out << "tool = certpol " << CERTPOL_VERSION << '\n'
      << "command = " << info.command << '\n'
      << "seed = " << info.seed << '\n'
      << "config_hash = " << hash.str() << '\n';
  for (const auto& [k, v] : extra) out << k << " = " << v << '\n';
}

template <class Fn>
void write_file(const fs::path& path, const RunInfo& info, Fn&& body,
                const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  {
    auto out = open_output(path);
    body(out);
    if (!out) throw Error("failed writing '" + path.string() + "'");
  }
  write_meta(path, info, extra);
}

inline Source parse_regime(const std::string& s) {
  if (s == "observational" || s == "obs") return Source::observational;
  if (s == "trial" || s == "rct") return Source::trial;
  throw ConfigError("unknown regime '" + s + "' (expected observational or trial)");
}

inline Method parse_method(const std::string& s) {
  if (s == "high-prob") return Method::high_prob;
  if (s == "average") return Method::average;
  throw ConfigError("unknown method '" + s + "' (expected high-prob or average)");
}

// Options shared by commands that read a dataset and need a nominal model.
struct DataOptions {
  std::string data;
  std::string schema;  // defaults to "<data>.schema"
  std::string action_col = "a";
  std::string loss_col = "l";
  std::string regime = "observational";
  std::string nominal_col;  // p(A=1|x) (observational) or p(S=1|x) (trial)
  std::optional<double> marginal_ratio;
  double p_treat_trial = 0.5;
  double gamma = 1.0;

  void add_to(CLI::App* app) {
    app->add_option("--data", data, "Dataset CSV")->required()->check(CLI::ExistingFile);
    app->add_option("--schema", schema, "Schema sidecar (default: <data>.schema)");
    app->add_option("--action-col", action_col, "Action column name")->capture_default_str();
    app->add_option("--loss-col", loss_col, "Loss column name")->capture_default_str();
    app->add_option("--regime", regime, "observational or trial")->capture_default_str();
    app->add_option("--nominal-col", nominal_col,
                    "Column with the nominal p(A=1|x) (observational) or p(S=1|x) (trial)");
    app->add_option("--marginal-ratio", marginal_ratio, "p(S=1)/p(S=0) for trial data");
    app->add_option("--p-treat-trial", p_treat_trial, "Randomized p(A=1) in the trial")->capture_default_str();
    app->add_option("--gamma", gamma, "Miscalibration degree (>= 1)")->capture_default_str();
  }
};

struct LoadedData {
  CovariateSchema schema;  // covariates the policy may use
  Dataset data;            // covariates plus the nominal column, if any
  NominalModel model;
  MiscalibrationConfig cfg;
  std::string model_origin;
};

inline LoadedData load_data(const DataOptions& o) {
  const Source source = parse_regime(o.regime);
  const auto schema = load_schema(o.schema.empty() ? o.data + ".schema" : o.schema);
  MiscalibrationConfig cfg{o.gamma, source};
  cfg.validate();
  const CsvColumns cols{o.action_col, o.loss_col};

  if (o.nominal_col.empty()) {
    if (source == Source::trial) throw ConfigError("trial regime needs --nominal-col with p(S=1|x)");
    auto d = load_csv(o.data, schema, cols, source);
    std::vector<std::string> names;
    for (const auto& f : schema.features()) names.push_back(f.name);
    const auto fit = fit_logistic(d, names);
    return LoadedData{schema, std::move(d), fit.assignment_model(), cfg,
                      std::string("logistic fit on all covariates") + (fit.converged ? "" : " (not converged)")};
  }

  if (schema.index_of(o.nominal_col)) throw ConfigError("nominal column '" + o.nominal_col + "' is a covariate");
  auto features = schema.features();
  features.push_back(Feature{o.nominal_col, FeatureKind::continuous, {}});
  const std::size_t idx = features.size() - 1;
  auto d = load_csv(o.data, CovariateSchema(features), cols, source);
  const auto read = [idx](std::span<const double> x) { return x[idx]; };
  if (source == Source::observational)
    return LoadedData{schema, std::move(d), AssignmentModel(read), cfg, "column " + o.nominal_col};
  if (!o.marginal_ratio) throw ConfigError("trial regime needs --marginal-ratio");
  return LoadedData{schema, std::move(d), SelectionModel::from_probability(read, *o.marginal_ratio, o.p_treat_trial),
                    cfg, "column " + o.nominal_col};
}

inline std::vector<std::string> feature_names(const CovariateSchema& s) {
  std::vector<std::string> out;
  for (const auto& f : s.features()) out.push_back(f.name);
  return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::string scenario;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  std::string out;
  bool with_u = false;
};

inline int cmd_simulate(const SimulateOptions& o, const RunInfo& info, std::ostream& log) {
  const Scenario sc{parse_variant(o.scenario)};
  if (o.n < 1) throw ConfigError("--n must be at least 1");
  const auto d = sample_dataset(sc, o.n, o.seed, SampleOptions{o.with_u});
  ExtraColumn p{"p_nominal", {}};
  for (std::size_t i = 0; i < d.size(); ++i) p.values.push_back(sigma_nom(d.value(i, 0)));
  const std::vector<ExtraColumn> extra{p};
  std::vector<std::pair<std::string, std::string>> meta{
      {"scenario", std::string(variant_name(sc.variant))}, {"n", std::to_string(o.n)}};
  if (sc.variant == Variant::rct_selected) meta.emplace_back("marginal_ratio", detail::format_double(sc.marginal_ratio()));
  const fs::path out(o.out);
  write_file(out, info, [&](std::ostream& s) { write_csv(s, d, {}, extra); }, meta);
  write_file(fs::path(o.out + ".schema"), info, [&](std::ostream& s) { write_schema(s, d.schema()); });
  log << "wrote " << d.size() << " rows to " << o.out << '\n';
  if (sc.variant == Variant::rct_selected)
    log << "marginal_ratio = " << detail::format_double(sc.marginal_ratio()) << '\n';
  return 0;
}

// ------------------------------------------------------------------- learn

struct LearnOptions {
  DataOptions data;
  double tau = 0.0;
  double alpha = 0.1;
  std::string method = "high-prob";
  std::vector<double> split;
  std::string preset = "synthetic";
  std::size_t grid_count = 0;
  double grid_upper = 0.0;
  std::size_t max_depth = 0;
  std::size_t bins = 200;
  std::uint64_t seed = 0;
  std::string out = ".";
};

inline int cmd_learn(const LearnOptions& o, const RunInfo& info, std::ostream& log) {
  if (!(o.tau > 0.0 && o.tau < 1.0)) throw ConfigError("--tau must lie in (0,1)");
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("--alpha must lie in (0,1)");
  const Method method = parse_method(o.method);
  if (o.preset != "synthetic" && o.preset != "star") throw ConfigError("unknown preset '" + o.preset + "'");
  const bool star = o.preset == "star";
  const std::size_t count = o.grid_count ? o.grid_count : (star ? 100 : 200);
  const double upper = o.grid_upper > 0.0 ? o.grid_upper : (star ? 0.8 : 0.5);
  const auto grid = ToleranceGrid::uniform(count, upper);

  auto loaded = load_data(o.data);
  SplitSpec spec{o.split, o.seed};
  if (spec.fractions.empty())
    spec.fractions = method == Method::high_prob ? std::vector<double>{0.5, 0.5} : std::vector<double>{0.5, 0.1, 0.4};
  const std::size_t parts_needed = method == Method::high_prob ? 2 : 3;
  if (spec.fractions.size() != parts_needed)
    throw ConfigError(std::string(method_name(method)) + " needs " + std::to_string(parts_needed) + " split fractions");
  const auto parts = split(loaded.data, spec);
  for (const auto& p : parts)
    if (p.empty()) throw ConfigError("a split part is empty; use more data or larger fractions");

  LearnConfig lc;
  lc.max_depth = o.max_depth ? o.max_depth : (star ? 3 : 1);
  lc.bins = o.bins;
  lc.cfg = loaded.cfg;
  lc.model = loaded.model;
  lc.features = feature_names(loaded.schema);
  lc.validate();

  const auto swept = sweep(parts[0], grid, lc);
  PathOptions popts;
  popts.alpha = o.alpha;
  if (method == Method::average) popts.d_l = &parts[1];
  const auto path = evaluate_path(swept, parts.back(), lc.model, lc.cfg, popts);
  const auto result = method == Method::high_prob ? select_high_prob(path, o.tau) : select_average(path, o.tau);

  const fs::path dir(o.out);
  const std::vector<std::pair<std::string, std::string>> meta{{"nominal_model", loaded.model_origin}};
  write_file(dir / "policy.json", info, [&](std::ostream& s) { s << to_json(result.policy, loaded.schema).dump(2) << '\n'; },
             meta);
  write_file(dir / "calibration.json", info,
             [&](std::ostream& s) { s << to_json(result, loaded.schema).dump(2) << '\n'; }, meta);
  write_file(dir / "diagnostics.csv", info, [&](std::ostream& s) { write_diagnostics_csv(s, result); }, meta);

  std::ostringstream summary;
  summary << "method: " << method_name(method) << '\n'
          << "tau: " << o.tau << "  alpha: " << o.alpha << "  gamma: " << o.data.gamma << '\n'
          << "split sizes:";
  for (const auto& p : parts) summary << ' ' << p.size();
  summary << '\n' << "nominal model: " << loaded.model_origin << '\n';
  summary << "feasible: " << (result.feasible ? "true" : "false") << '\n';
  if (result.feasible) {
    const auto& e = path.entries[*result.index];
    summary << "t_n: " << result.t_n << '\n'
            << "population risk bound (held out): " << e.obj_n << '\n'
            << "treatment risk bound (held out): " << e.constraint_n << '\n';
    if (method == Method::high_prob) summary << "upper confidence bound: " << e.ucb << '\n';
  } else {
    summary << "t_n: none (fallback policy treats nobody)\n";
  }
  if (!std::isnan(result.constraint_slack)) summary << "in-sample constraint slack at tau: " << result.constraint_slack << '\n';
  summary << "policy:\n" << describe(result.policy, loaded.schema) << '\n';
  write_file(dir / "summary.txt", info, [&](std::ostream& s) { s << summary.str(); }, meta);
  log << summary.str();
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  std::string policy;
  DataOptions data;
  std::string scenario;
  bool with_u = false;
  bool monte_carlo = false;
  std::size_t precision = kDefaultTruthPrecision;
  std::uint64_t seed = 0;
  std::string out;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid JSON in '" + path + "': " + e.what());
  }
}

inline int cmd_evaluate(const EvaluateOptions& o, bool on_dataset, const RunInfo& info, std::ostream& log) {
  const auto j = read_json_file(o.policy);
  nlohmann::json report;
  if (on_dataset) {
    auto loaded = load_data(o.data);
    const auto tree = tree_from_json(j, loaded.schema);
    const auto s = score_policy(loaded.data, tree, loaded.model, loaded.cfg);
    report = {{"source", "dataset"},         {"n", loaded.data.size()},     {"gamma", o.data.gamma},
              {"objective", s.objective},    {"constraint", s.constraint}, {"rho", s.rho},
              {"nominal_model", loaded.model_origin}};
    report["v_max"] = s.treated > 0 ? nlohmann::json(v_max(loaded.data, tree, loaded.model, loaded.cfg))
                                    : nlohmann::json(nullptr);
  } else {
    const Scenario sc{parse_variant(o.scenario)};
    const auto tree = tree_from_json(j, scenario_schema(SampleOptions{o.with_u}));
    if (o.precision < 2) throw ConfigError("--precision must be at least 2");
    const auto t = o.monte_carlo ? monte_carlo_risks(sc, tree, o.precision, o.seed)
                                 : true_risks(sc, tree, o.precision, o.seed);
    report = {{"source", "scenario"}, {"scenario", std::string(variant_name(sc.variant))},
              {"r_true", t.r_true},   {"t_true", t.t_true},
              {"rho_true", t.rho_true}, {"untreated_loss", t.untreated_loss},
              {"se_r", t.se_r},       {"se_t", t.se_t},
              {"closed_form", t.closed_form}};
  }
  for (const auto& [k, v] : report.items()) log << k << " = " << v.dump() << '\n';
  if (!o.out.empty()) write_file(fs::path(o.out), info, [&](std::ostream& s) { s << report.dump(2) << '\n'; });
  return 0;
}

// ----------------------------------------------------------------- mc-eval

struct McEvalOptions {
  std::string scenario;
  double gamma = 1.0;
  double alpha = 0.1;
  std::string method = "high-prob";
  std::size_t reps = 200;
  std::vector<std::size_t> sizes;
  std::vector<double> taus{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40};
  std::size_t grid_count = 200;
  double grid_upper = 0.5;
  std::size_t max_depth = 1;
  std::size_t bins = 200;
  std::size_t precision = kDefaultTruthPrecision;
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::string out;
};

inline int cmd_mc_eval(const McEvalOptions& o, const RunInfo& info, std::ostream& log) {
  ExperimentConfig c;
  c.scenario = Scenario{parse_variant(o.scenario)};
  c.method = parse_method(o.method);
  c.gamma = o.gamma;
  c.alpha = o.alpha;
  c.reps = o.reps;
  c.sizes = o.sizes;
  if (c.sizes.empty())
    c.sizes = c.method == Method::high_prob ? std::vector<std::size_t>{1000, 1000}
                                            : std::vector<std::size_t>{1000, 200, 800};
  c.taus = o.taus;
  c.seed = o.seed;
  c.grid = ToleranceGrid::uniform(o.grid_count, o.grid_upper);
  c.max_depth = o.max_depth;
  c.bins = o.bins;
  c.truth_precision = o.precision;
  c.workers = o.workers;
  if (c.truth_precision < 2) throw ConfigError("--precision must be at least 2");
  const auto r = mc_experiment(c);
  write_file(fs::path(o.out), info, [&](std::ostream& s) { write_experiment_csv(s, r); },
             {{"scenario", std::string(variant_name(c.scenario.variant))},
              {"method", method_name(c.method)},
              {"reps", std::to_string(c.reps)}});
  log << "tau,coverage,mean_t_true,mean_r_true\n";
  for (const auto& row : r.rows)
    log << detail::format_double(row.tau) << ',' << detail::format_double(row.coverage) << ','
        << detail::format_double(row.mean_t_true) << ',' << detail::format_double(row.mean_r_true) << '\n';
  return 0;
}

// --------------------------------------------------------- benchmark-gamma

struct BenchmarkOptions {
  std::string data;
  std::string schema;
  std::string action_col = "a";
  std::string loss_col = "l";
  std::vector<std::string> features;
  std::vector<std::string> omit;
  std::size_t n_bins = 5;
  double quantile = 0.95;
  std::uint64_t seed = 0;
  std::string out = ".";
};

inline int cmd_benchmark_gamma(const BenchmarkOptions& o, const RunInfo& info, std::ostream& log) {
  if (!(o.quantile > 0.0 && o.quantile <= 1.0)) throw ConfigError("--quantile must lie in (0,1]");
  const auto schema = load_schema(o.schema.empty() ? o.data + ".schema" : o.schema);
  const auto d = load_csv(o.data, schema, CsvColumns{o.action_col, o.loss_col}, Source::observational);
  const auto features = o.features.empty() ? feature_names(schema) : o.features;
  for (const auto& f : features) schema.require(f);
  const auto omit = o.omit.empty() ? features : o.omit;

  const fs::path dir(o.out);
  const auto model = fit_logistic(d, features);
  const auto bins = reliability_bins(d, model, o.n_bins);
  write_file(dir / "reliability.csv", info, [&](std::ostream& s) { write_reliability_csv(s, bins); },
             {{"converged", model.converged ? "true" : "false"}});
  if (!model.converged) log << "warning: nominal model fit did not converge\n";

  log << "covariate,suggest_gamma\n";
  for (const auto& name : omit) {
    const auto r = omitted_covariate_ratios(d, name, features);
    const double g = suggest_gamma(r.ratios, o.quantile);
    write_file(dir / ("ratios_" + name + ".csv"), info, [&](std::ostream& s) { write_ecdf_csv(s, r.ratios); },
               {{"omitted", name},
                {"suggest_gamma", detail::format_double(g)},
                {"quantile", detail::format_double(o.quantile)},
                {"ecdf_sample", "in-sample"},
                {"converged", (r.full.converged && r.reduced.converged) ? "true" : "false"}});
    log << name << ',' << detail::format_double(g) << '\n';
  }
  return 0;
}

// ------------------------------------------------------------------- entry

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Certified treatment policies under bounded miscalibration", "certpol"};
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags win");
  app.set_version_flag("--version", std::string("certpol ") + CERTPOL_VERSION);
  app.require_subcommand(1);

  SimulateOptions sim;
  auto* s_sim = app.add_subcommand("simulate", "Draw a synthetic dataset");
  s_sim->add_option("--scenario", sim.scenario, "obs-clean, obs-confounded or rct-selected")->required();
  s_sim->add_option("--n", sim.n, "Number of samples")->required();
  s_sim->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  s_sim->add_option("--out", sim.out, "Output CSV path")->required();
  s_sim->add_flag("--with-u", sim.with_u, "Add the confounder indicator u_low as a covariate");

  LearnOptions learn;
  auto* s_learn = app.add_subcommand("learn", "Learn and calibrate a policy");
  learn.data.add_to(s_learn);
  s_learn->add_option("--tau", learn.tau, "Target treatment risk")->required();
  s_learn->add_option("--alpha", learn.alpha, "Miscoverage level")->capture_default_str();
  s_learn->add_option("--method", learn.method, "high-prob or average")->capture_default_str();
  s_learn->add_option("--split", learn.split, "Split fractions (m,n) or (m,l,n)")->delimiter(',');
  s_learn->add_option("--preset", learn.preset, "synthetic or star")->capture_default_str();
  s_learn->add_option("--grid-count", learn.grid_count, "Tolerance grid size (default by preset)");
  s_learn->add_option("--grid-upper", learn.grid_upper, "Tolerance grid upper end (default by preset)");
  s_learn->add_option("--max-depth", learn.max_depth, "Maximum number of rules (default by preset)");
  s_learn->add_option("--bins", learn.bins, "Thresholds per continuous feature")->capture_default_str();
  s_learn->add_option("--seed", learn.seed, "Split seed")->capture_default_str();
  s_learn->add_option("--out", learn.out, "Output directory")->capture_default_str();

  EvaluateOptions eval;
  auto* s_eval = app.add_subcommand("evaluate", "Evaluate a policy on a dataset or a scenario");
  s_eval->add_option("--policy", eval.policy, "Policy JSON")->required()->check(CLI::ExistingFile);
  auto* o_data = s_eval->add_option("--data", eval.data.data, "Dataset CSV")->check(CLI::ExistingFile);
  s_eval->add_option("--schema", eval.data.schema, "Schema sidecar (default: <data>.schema)");
  s_eval->add_option("--action-col", eval.data.action_col, "Action column name")->capture_default_str();
  s_eval->add_option("--loss-col", eval.data.loss_col, "Loss column name")->capture_default_str();
  s_eval->add_option("--regime", eval.data.regime, "observational or trial")->capture_default_str();
  s_eval->add_option("--nominal-col", eval.data.nominal_col, "Nominal probability column");
  s_eval->add_option("--marginal-ratio", eval.data.marginal_ratio, "p(S=1)/p(S=0) for trial data");
  s_eval->add_option("--p-treat-trial", eval.data.p_treat_trial, "Randomized p(A=1)")->capture_default_str();
  s_eval->add_option("--gamma", eval.data.gamma, "Miscalibration degree")->capture_default_str();
  auto* o_scen = s_eval->add_option("--scenario", eval.scenario, "Scenario for ground-truth risks");
  o_data->excludes(o_scen);
  s_eval->add_flag("--with-u", eval.with_u, "Policy may use the u_low covariate");
  s_eval->add_flag("--monte-carlo", eval.monte_carlo, "Force Monte Carlo ground truth");
  s_eval->add_option("--precision", eval.precision, "Monte Carlo sample count")->capture_default_str();
  s_eval->add_option("--seed", eval.seed, "Monte Carlo seed")->capture_default_str();
  s_eval->add_option("--out", eval.out, "Write the report as JSON");

  McEvalOptions mc;
  auto* s_mc = app.add_subcommand("mc-eval", "Monte Carlo coverage experiment");
  s_mc->add_option("--scenario", mc.scenario, "Scenario")->required();
  s_mc->add_option("--gamma", mc.gamma, "Miscalibration degree")->capture_default_str();
  s_mc->add_option("--alpha", mc.alpha, "Miscoverage level")->capture_default_str();
  s_mc->add_option("--method", mc.method, "high-prob or average")->capture_default_str();
  s_mc->add_option("--reps", mc.reps, "Replications")->capture_default_str();
  s_mc->add_option("--sizes", mc.sizes, "Split sizes (m,n) or (m,l,n)")->delimiter(',');
  s_mc->add_option("--taus", mc.taus, "Target risks")->delimiter(',')->capture_default_str();
  s_mc->add_option("--grid-count", mc.grid_count, "Tolerance grid size")->capture_default_str();
  s_mc->add_option("--grid-upper", mc.grid_upper, "Tolerance grid upper end")->capture_default_str();
  s_mc->add_option("--max-depth", mc.max_depth, "Maximum number of rules")->capture_default_str();
  s_mc->add_option("--bins", mc.bins, "Thresholds per continuous feature")->capture_default_str();
  s_mc->add_option("--precision", mc.precision, "Monte Carlo truth sample count")->capture_default_str();
  s_mc->add_option("--workers", mc.workers, "Worker threads")->capture_default_str();
  s_mc->add_option("--seed", mc.seed, "Random seed")->capture_default_str();
  s_mc->add_option("--out", mc.out, "Output CSV")->required();

  BenchmarkOptions bench;
  auto* s_bench = app.add_subcommand("benchmark-gamma", "Benchmark a credible gamma range");
  s_bench->add_option("--data", bench.data, "Dataset CSV")->required()->check(CLI::ExistingFile);
  s_bench->add_option("--schema", bench.schema, "Schema sidecar (default: <data>.schema)");
  s_bench->add_option("--action-col", bench.action_col, "Action column name")->capture_default_str();
  s_bench->add_option("--loss-col", bench.loss_col, "Loss column name")->capture_default_str();
  s_bench->add_option("--features", bench.features, "Model covariates (default: all)")->delimiter(',');
  s_bench->add_option("--omit", bench.omit, "Covariates to omit in turn (default: each feature)")->delimiter(',');
  s_bench->add_option("--bins", bench.n_bins, "Reliability bins")->capture_default_str();
  s_bench->add_option("--quantile", bench.quantile, "Coverage quantile for suggest_gamma")->capture_default_str();
  s_bench->add_option("--seed", bench.seed, "Recorded in metadata")->capture_default_str();
  s_bench->add_option("--out", bench.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    RunInfo info;
    info.command = sub->get_name();
    info.config_hash = fnv1a(info.command + "\n" + config_without_output(sub->config_to_str(true, false)));
    if (sub == s_sim) {
      info.seed = sim.seed;
      return cmd_simulate(sim, info, out);
    }
    if (sub == s_learn) {
      info.seed = learn.seed;
      return cmd_learn(learn, info, out);
    }
    if (sub == s_eval) {
      if (eval.scenario.empty() == eval.data.data.empty())
        throw ConfigError("evaluate needs exactly one of --data or --scenario");
      info.seed = eval.seed;
      return cmd_evaluate(eval, !eval.data.data.empty(), info, out);
    }
    if (sub == s_mc) {
      info.seed = mc.seed;
      return cmd_mc_eval(mc, info, out);
    }
    info.seed = bench.seed;
    return cmd_benchmark_gamma(bench, info, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace certpol::cli
