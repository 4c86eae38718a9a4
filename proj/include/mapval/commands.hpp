#pragma once

// The four CLI commands as library functions: simulate, fit, validate, report.
// Each writes into an output directory and returns the list of files written.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapval/decision.hpp"
#include "mapval/graph.hpp"
#include "mapval/io/config.hpp"
#include "mapval/io/csv.hpp"
#include "mapval/io/digest.hpp"
#include "mapval/io/draws.hpp"
#include "mapval/io/geojson.hpp"
#include "mapval/io/results.hpp"
#include "mapval/io/svg.hpp"
#include "mapval/sampler.hpp"
#include "mapval/simulation.hpp"
#include "mapval/summary.hpp"

namespace mapval::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* kToolName = "mapval";
inline constexpr const char* kToolVersion = "0.1.0";

/// Bad command-line usage (unknown model name and the like); exit status 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that cannot be used; exit status 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> models;
  std::optional<std::string> rules;
  std::optional<int> threads;
  std::optional<std::string> geometry;
};

inline std::vector<ModelFamily> parse_models(const std::string& text) {
  std::vector<ModelFamily> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    start = comma == std::string::npos ? text.size() + 1 : comma + 1;
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) continue;
    try {
      out.push_back(parse_model_family(tok));
    } catch (const std::invalid_argument&) {
      throw UsageError("unknown model '" + tok + "' (expected rem, sem or scm)");
    }
  }
  if (out.empty()) throw UsageError("no models given");
  return out;
}

inline io::RunConfig load_run_config(const std::string& config_path, const Overrides& o) {
  io::RunConfig c = config_path.empty() ? io::RunConfig{} : io::load_config(config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.models) c.models = parse_models(*o.models);
  if (o.rules) {
    try {
      c.rules = parse_rules(*o.rules);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    if (c.rules.empty()) throw UsageError("no rules given");
  }
  if (o.threads) {
    if (*o.threads < 1) throw UsageError("--threads must be at least 1");
    c.threads = *o.threads;
  }
  if (o.geometry) c.geometry = *o.geometry;
  return c;
}

// ---------------------------------------------------------------------------
// Manifest

/// Provenance record. The digest covers everything except timestamps and the
/// thread count, so reruns of the same inputs produce identical outputs.
class Manifest {
 public:
  Manifest(std::string command, const io::RunConfig& cfg) : command_(std::move(command)), config_(io::config_to_json(cfg)) {}

  void add_input(const std::string& role, const std::string& path) {
    inputs_[role] = {{"path", fs::path(path).filename().string()}, {"sha256", io::sha256_file(path)}};
  }
  void add_parameter(const std::string& key, const json& value) { params_[key] = value; }

  json core() const {
    json cfg = config_;
    cfg.erase("threads");
    // Paths differ between machines; the input digests identify the files.
    for (const char* k : {"geometry", "edges"})
      if (cfg.contains(k) && !cfg[k].get<std::string>().empty()) cfg[k] = fs::path(cfg[k].get<std::string>()).filename().string();
    auto& pop = cfg["study"]["population"];
    if (!pop["file"].get<std::string>().empty()) pop["file"] = fs::path(pop["file"].get<std::string>()).filename().string();
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"command", command_},
            {"seed", config_.at("seed")},
            {"config", cfg},
            {"inputs", inputs_},
            {"parameters", params_}};
  }
  std::string digest() const { return io::sha256_hex(core().dump()); }

  /// Comment lines placed at the top of every CSV output.
  std::vector<std::string> csv_comments() const {
    json cfg = core()["config"];
    return {std::string(" ") + kToolName + " " + kToolVersion + " " + command_, " manifest_sha256=" + digest(),
            " seed=" + std::to_string(config_.at("seed").get<std::uint64_t>()), " config=" + cfg.dump()};
  }
  std::string svg_comment() const { return std::string(kToolName) + " manifest_sha256=" + digest(); }

  json full(const std::vector<std::string>& outputs, const std::string& started, const std::string& finished) const {
    json j = core();
    j["manifest_sha256"] = digest();
    j["resolved_config"] = config_;
    j["outputs"] = outputs;
    j["timestamps"] = {{"started_utc", started}, {"finished_utc", finished}};
    return j;
  }

 private:
  std::string command_;
  json config_;
  json inputs_ = json::object();
  json params_ = json::object();
};

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Single owner of the files written into one output directory.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }
  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + (dir_ / name).string());
    files_.push_back(name);
  }
  void note(const std::string& name) { files_.push_back(name); }
  const fs::path& path() const { return dir_; }
  const std::vector<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

inline void write_manifest(OutputDir& out, const Manifest& m, const std::string& started) {
  std::vector<std::string> outputs = out.files();
  out.write("manifest.json", m.full(outputs, started, utc_now()).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Inputs

struct StudyArea {
  std::shared_ptr<const AreaGraph> graph;
  std::vector<io::GeoFeature> features;  // empty when the graph came from an edge list
};

inline std::vector<std::pair<std::string, std::string>> read_edge_list(const std::string& path) {
  const io::CsvTable t = io::read_csv(path);
  const int a = t.require("src"), b = t.require("dst");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& r : t.rows) out.emplace_back(r[a], r[b]);
  return out;
}

/// Graph from the configured geometry (queen contiguity) or edge list. With
/// both present, the geometry fixes the area order and the edge list the adjacency.
inline StudyArea load_study_area(const io::RunConfig& cfg, Manifest* manifest) {
  StudyArea s;
  if (cfg.geometry.empty() && cfg.edges.empty()) throw UsageError("no geometry or edge list given");
  std::vector<std::string> ids;
  if (!cfg.geometry.empty()) {
    s.features = io::read_geojson(cfg.geometry);
    if (manifest) manifest->add_input("geometry", cfg.geometry);
    for (const auto& f : s.features) ids.push_back(f.geometry.id);
  }
  if (!cfg.edges.empty()) {
    const auto edges = read_edge_list(cfg.edges);
    if (manifest) manifest->add_input("edges", cfg.edges);
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<int>(i);
    const bool fixed = !ids.empty();
    std::vector<std::pair<int, int>> ix;
    auto id_of = [&](const std::string& id) {
      auto it = index.find(id);
      if (it != index.end()) return it->second;
      if (fixed) throw DataError("edge list names area '" + id + "' absent from the geometry");
      index[id] = static_cast<int>(ids.size());
      ids.push_back(id);
      return static_cast<int>(ids.size()) - 1;
    };
    for (const auto& [a, b] : edges) {
      const int i = id_of(a), j = id_of(b);
      ix.emplace_back(i, j);
    }
    s.graph = std::make_shared<const AreaGraph>(build_adjacency_from_edges(static_cast<int>(ids.size()), ix, ids));
  } else {
    s.graph = std::make_shared<const AreaGraph>(build_queen_adjacency(io::geometries(s.features), cfg.snap_tolerance));
  }
  return s;
}

/// Study population: a CSV (area_id,pop) or a numeric feature property,
/// optionally rescaled to a target mean.
inline Eigen::VectorXd load_population(const io::RunConfig& cfg, const StudyArea& area, Manifest* manifest) {
  const AreaGraph& g = *area.graph;
  Eigen::VectorXd pop(g.n_areas());
  const auto& pc = cfg.study.population;
  if (!pc.file.empty()) {
    const io::CsvTable t = io::read_csv(pc.file);
    if (manifest) manifest->add_input("population", pc.file);
    const int id = t.require("area_id"), p = t.require("pop");
    std::vector<bool> seen(g.n_areas(), false);
    for (const auto& r : t.rows) {
      if (!g.contains(r[id])) throw DataError("population file names unknown area '" + r[id] + "'");
      const int i = g.index_of(r[id]);
      if (seen[i]) throw DataError("population file repeats area '" + r[id] + "'");
      seen[i] = true;
      pop[i] = io::parse_double(r[p], "pop");
    }
    for (int i = 0; i < g.n_areas(); ++i)
      if (!seen[i]) throw DataError("population file lacks area '" + g.area_ids()[i] + "'");
  } else {
    if (area.features.empty()) throw UsageError("population: no geometry properties to read; give study.population.file");
    for (const auto& f : area.features) {
      const auto& props = f.properties;
      if (!props.contains(pc.property) || !props[pc.property].is_number())
        throw DataError("area '" + f.geometry.id + "' has no numeric property '" + pc.property + "'");
      pop[g.index_of(f.geometry.id)] = props[pc.property].get<double>();
    }
  }
  if (!(pop.array() > 0.0).all()) throw DataError("populations must be positive");
  if (pc.scale_mean > 0.0) pop *= pc.scale_mean / pop.mean();
  return pop;
}

inline std::map<ModelFamily, ModelSpec> model_specs(const io::RunConfig& cfg) {
  std::map<ModelFamily, ModelSpec> m;
  for (auto f : {ModelFamily::REM, ModelFamily::SEM, ModelFamily::SCM}) m[f] = io::make_spec(f, cfg.priors);
  return m;
}

// ---------------------------------------------------------------------------
// report

inline void write_aggregates(OutputDir& out, const io::CsvTable& results, const std::vector<std::string>& comments,
                             const std::string& svg_comment) {
  const auto groups = io::aggregate_metrics(results);
  out.write("aggregate_metrics.csv", io::aggregate_metrics_csv(groups, comments));
  out.write("rr_global_summary.csv", io::rr_summary_csv(io::aggregate_rr(results), comments));
  for (const auto& m : io::metric_names()) {
    const io::HeatmapTable h = io::heatmap_table(groups, m);
    if (!h.any()) continue;
    out.write("heatmap_" + m + ".csv", io::heatmap_csv(h, comments));
    out.write("heatmap_" + m + ".svg",
              io::heatmap_svg(h.row_labels, h.col_labels, h.cells, "Mean " + m + " over replicates", svg_comment));
  }
}

inline std::vector<std::string> cmd_report(const std::string& results_path, const io::RunConfig& cfg,
                                           const fs::path& out_dir) {
  const std::string started = utc_now();
  const io::CsvTable t = io::read_csv(results_path);
  io::check_results_schema(t);
  Manifest m("report", cfg);
  m.add_input("results", results_path);
  OutputDir out(out_dir);
  write_aggregates(out, t, m.csv_comments(), m.svg_comment());
  write_manifest(out, m, started);
  return out.files();
}

// ---------------------------------------------------------------------------
// simulate

inline std::vector<std::string> cmd_simulate(const io::RunConfig& cfg, const fs::path& out_dir,
                                             std::ostream* log = &std::cerr) {
  const std::string started = utc_now();
  if (cfg.study.scenarios.empty()) throw UsageError("simulate: config has no study.scenarios");
  Manifest man("simulate", cfg);
  const StudyArea area = load_study_area(cfg, &man);
  const Eigen::VectorXd pop = load_population(cfg, area, &man);

  // Record the fixed S3 clusters so every setting can be traced to the same areas.
  json clusters = json::array();
  for (const auto& sc : cfg.study.scenarios) {
    if (sc.scenario != Scenario::S3) continue;
    const ClusterPlan plan = plan_clusters(*area.graph, sc.cluster);
    auto ids = [&](const std::vector<int>& v) {
      json a = json::array();
      for (int i : v) a.push_back(area.graph->area_ids()[i]);
      return a;
    };
    clusters.push_back({{"primary", ids(plan.primary)}, {"secondary", ids(plan.secondary)}});
  }
  if (!clusters.empty()) man.add_parameter("s3_clusters", clusters);

  StudyOptions opt;
  opt.models = cfg.models;
  opt.rules = cfg.rules;
  opt.epsilon = cfg.epsilon;
  opt.sampler = cfg.sampler;
  opt.threads = cfg.threads;
  opt.specs = model_specs(cfg);
  if (log)
    opt.on_cell = [log](const CellReport& c) {
      *log << "[simulate] " << c.scenario << " " << c.setting << " p=" << c.baseline_p << " rho=" << c.rho << " "
           << c.model << ": " << c.successes << "/" << c.attempts << (c.aborted ? " ABORTED (" + c.message + ")" : "")
           << std::endl;
    };

  StudyResults all;
  for (double p : cfg.study.baseline_p)
    for (double rho : cfg.study.rho) {
      GenerationConfig gen;
      gen.baseline_p = p;
      gen.leroux = {cfg.study.sigma2, rho};
      gen.population = pop;
      gen.target_replicates = cfg.study.replicates;
      gen.seed = cfg.seed;
      gen.failure_cap = cfg.study.failure_cap;
      gen.allow_off_grid = cfg.study.allow_off_grid;
      try {
        gen.validate(area.graph->n_areas());
      } catch (const std::invalid_argument& e) {
        throw io::ConfigError(std::string("study: ") + e.what());
      }
      StudyResults r = run_study(area.graph, gen, cfg.study.scenarios, opt);
      all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
      all.cells.insert(all.cells.end(), r.cells.begin(), r.cells.end());
    }

  OutputDir out(out_dir);
  const auto comments = man.csv_comments();
  const std::string results = io::results_csv(all.rows, comments);
  out.write("results.csv", results);
  out.write("cells.csv", io::cells_csv(all.cells, comments));
  write_aggregates(out, io::parse_csv(results), comments, man.svg_comment());
  write_manifest(out, man, started);
  return out.files();
}

// ---------------------------------------------------------------------------
// Paired data (fit, validate)

struct PairedInput {
  PairedDataset data;
  std::vector<io::GeoFeature> features;  // geometry of the retained areas, in graph order
  bool expected_given = false;
};

/// Reads area_id,pop,obs_ref,obs_cand[,expected] and aligns it with the study
/// area. Areas of the geometry without data are dropped; data areas must all
/// exist in the geometry.
inline PairedInput load_paired_data(const std::string& data_path, const io::RunConfig& cfg, Manifest* manifest) {
  const StudyArea area = load_study_area(cfg, manifest);
  const io::CsvTable t = io::read_csv(data_path);
  if (manifest) manifest->add_input("data", data_path);
  const int cid = t.require("area_id"), cpop = t.require("pop"), cref = t.require("obs_ref"),
            ccand = t.require("obs_cand");
  const int cexp = t.column("expected");
  const AreaGraph& g = *area.graph;
  std::map<int, std::size_t> row_of;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& id = t.rows[r][cid];
    if (!g.contains(id)) throw DataError("area '" + id + "' is in the data but not in the geometry");
    if (!row_of.emplace(g.index_of(id), r).second) throw DataError("duplicate area id '" + id + "' in the data");
  }
  if (row_of.size() < 2) throw DataError("need at least two areas");
  std::vector<int> keep;
  for (const auto& [i, r] : row_of) keep.push_back(i);  // geometry order
  PairedInput in;
  auto graph = keep.size() == static_cast<std::size_t>(g.n_areas()) ? area.graph
                                                                     : std::make_shared<const AreaGraph>(subgraph(g, keep));
  const int n = static_cast<int>(keep.size());
  PairedDataset& d = in.data;
  d.graph = graph;
  d.counts_ref.resize(n);
  d.counts_cand.resize(n);
  d.population.resize(n);
  d.expected.resize(n);
  in.expected_given = cexp >= 0;
  auto count = [](const std::string& s, const std::string& what) {
    const long v = io::parse_long(s, what);
    if (v < 0 || v > 1000000000L) throw DataError(what + " must be a non-negative count");
    return static_cast<int>(v);
  };
  for (int k = 0; k < n; ++k) {
    const auto& row = t.rows[row_of.at(keep[k])];
    const std::string& id = row[cid];
    d.population[k] = io::parse_double(row[cpop], "pop at area " + id);
    if (!(d.population[k] > 0.0)) throw DataError("pop must be positive at area '" + id + "'");
    d.counts_ref[k] = count(row[cref], "obs_ref at area " + id);
    d.counts_cand[k] = count(row[ccand], "obs_cand at area " + id);
    if (cexp >= 0) {
      d.expected[k] = io::parse_double(row[cexp], "expected at area " + id);
      if (!(d.expected[k] > 0.0) || !std::isfinite(d.expected[k]))
        throw DataError("expected must be positive at area '" + id + "'");
    }
  }
  if (cexp < 0) {
    long total = 0;
    for (int c : d.counts_ref) total += c;
    if (total == 0) throw DataError("reference counts are all zero; expected counts cannot be standardised");
    d.expected = internal_standardisation(d.counts_ref, d.population);
  }
  if (!area.features.empty())
    for (int i : keep) in.features.push_back(area.features[i]);
  d.validate();
  return in;
}

inline std::uint64_t model_seed(std::uint64_t seed, ModelFamily f) {
  return derive_seed(seed, {stable_hash(to_string(f))});
}

inline json global_json(const GlobalContrast& g) {
  return {{"delta_mean", g.delta_mean},
          {"delta_median", g.delta_median},
          {"delta_ci95", {g.delta_ci95.lower, g.delta_ci95.upper}},
          {"rr_global_median", g.rr_global_median},
          {"rr_global_ci95", {g.rr_global_ci95.lower, g.rr_global_ci95.upper}}};
}

inline json convergence_json(const PosteriorFit& f) {
  double max_rhat = 0.0, min_ess = std::numeric_limits<double>::infinity();
  json worst = json::array();
  for (const auto& d : f.diagnostics) {
    max_rhat = std::max(max_rhat, d.rhat);
    min_ess = std::min(min_ess, d.ess);
  }
  json acc_h = f.acceptance_hyper, acc_l = f.acceptance_latent, acc_i = f.acceptance_independence;
  return {{"converged", f.converged}, {"max_rhat", max_rhat}, {"min_ess", min_ess}, {"chains", f.n_chains},
          {"kept_per_chain", f.n_kept}, {"acceptance_hyper", acc_h}, {"acceptance_latent", acc_l},
          {"acceptance_independence", acc_i}};
}

inline std::string rule_column(const DecisionRule& r) {
  std::string s = r.kind == DecisionRule::Kind::NREP ? "label_nrep_" : "label_rcep_";
  return s + r.threshold_label();
}

/// Marginal summaries of the global parameters, one row each.
inline std::string summary_csv(const PosteriorFit& fit, const std::vector<std::string>& comments) {
  io::CsvWriter w({"parameter", "mean", "median", "sd", "q025", "q50", "q975"}, comments);
  std::vector<std::string> params{"alpha1", "alpha2", "delta"};
  for (const auto& f : fit.field_names) {
    params.push_back("tau_" + f);
    if (fit.has("phi_" + f)) params.push_back("phi_" + f);
  }
  for (const auto& p : params) {
    const MarginalSummary s = marginal_summary(fit, p);
    w.write_row({p, io::format_number(s.mean), io::format_number(s.median), io::format_number(s.sd),
                 io::format_number(s.q025), io::format_number(s.q50), io::format_number(s.q975)});
  }
  return w.str();
}

// ---------------------------------------------------------------------------
// fit

inline std::vector<std::string> cmd_fit(const std::string& data_path, const std::string& model_name,
                                        const io::RunConfig& cfg, const fs::path& out_dir) {
  const std::string started = utc_now();
  ModelFamily family;
  try {
    family = parse_model_family(model_name);
  } catch (const std::invalid_argument&) {
    throw UsageError("unknown model '" + model_name + "' (expected rem, sem or scm)");
  }
  Manifest man("fit", cfg);
  man.add_parameter("model", to_string(family));
  const PairedInput in = load_paired_data(data_path, cfg, &man);
  SamplerConfig sc = cfg.sampler;
  sc.threads = cfg.threads;
  const PosteriorFit f = fit(io::make_spec(family, cfg.priors), in.data, sc, model_seed(cfg.seed, family));

  OutputDir out(out_dir);
  const auto comments = man.csv_comments();
  const std::string prefix = "draws_" + to_string(family);
  const io::DrawFiles files = io::save_draws(f, out.path(), prefix, comments);
  for (const auto& b : files.blocks) out.note(b);
  out.note(files.metadata);
  out.write("summary_" + to_string(family) + ".csv", summary_csv(f, comments));
  write_manifest(out, man, started);
  return out.files();
}

// ---------------------------------------------------------------------------
// validate

inline std::vector<std::string> cmd_validate(const std::string& data_path, const io::RunConfig& cfg,
                                             const fs::path& out_dir, std::ostream* log = &std::cerr) {
  const std::string started = utc_now();
  Manifest man("validate", cfg);
  const PairedInput in = load_paired_data(data_path, cfg, &man);
  const PairedDataset& d = in.data;
  const AreaGraph& g = *d.graph;
  OutputDir out(out_dir);
  const auto comments = man.csv_comments();
  const std::string digest = man.digest();

  long tot_ref = 0, tot_cand = 0;
  for (int i = 0; i < g.n_areas(); ++i) {
    tot_ref += d.counts_ref[i];
    tot_cand += d.counts_cand[i];
  }
  json report{{"manifest_sha256", digest},
              {"dataset",
               {{"n_areas", g.n_areas()},
                {"n_edges", g.n_edges()},
                {"n_components", g.components().size()},
                {"islands", g.islands().size()},
                {"total_obs_ref", tot_ref},
                {"total_obs_cand", tot_cand},
                {"total_expected", d.expected.sum()},
                {"expected_source", in.expected_given ? "data" : "internal standardisation on obs_ref"}}},
              {"epsilon", cfg.epsilon},
              {"force", cfg.force},
              {"success_criterion",
               "a fit is reported when every monitored split-Rhat < " + io::format_number(cfg.sampler.rhat_threshold) +
                   " and every ESS >= " + io::format_number(cfg.sampler.ess_threshold)},
              {"models", json::object()}};

  std::vector<std::string> area_header{"model", "area_id", "psi_source", "psi_median", "nrep", "rcep"};
  for (const auto& r : cfg.rules) area_header.push_back(rule_column(r));
  io::CsvWriter areas(area_header, comments);

  SamplerConfig sc = cfg.sampler;
  sc.threads = cfg.threads;
  for (ModelFamily fam : cfg.models) {
    const std::string mname = to_string(fam);
    if (log) *log << "[validate] fitting " << mname << std::endl;
    const PosteriorFit f = fit(io::make_spec(fam, cfg.priors), d, sc, model_seed(cfg.seed, fam));
    json mj{{"convergence", convergence_json(f)}};
    if (cfg.write_draws) {
      const io::DrawFiles files = io::save_draws(f, out.path(), "draws_" + mname, comments);
      for (const auto& b : files.blocks) out.note(b);
      out.note(files.metadata);
      mj["draws"] = files.metadata;
    }
    if (!f.converged && !cfg.force) {
      mj["reported"] = false;
      mj["note"] = "fit did not meet the convergence criterion; rerun with more iterations or set force";
      report["models"][mname] = mj;
      if (log) *log << "[validate] " << mname << " did not converge; not reported" << std::endl;
      continue;
    }
    mj["reported"] = true;
    const GlobalContrast gc = global_contrast(f);
    mj["global"] = global_json(gc);
    const PsiSource src = psi_source_for(fam);
    const LocalSurface s = rcep(f, src, cfg.epsilon);
    json local{{"psi_source", to_string(src)}, {"center_cstar", s.center_cstar}, {"epsilon", s.epsilon}};
    if (s.cstar_chain_range) local["cstar_chain_range"] = {s.cstar_chain_range->lower, s.cstar_chain_range->upper};
    json rules = json::array();
    std::vector<DecisionLabels> labels;
    for (const auto& r : cfg.rules) {
      labels.push_back(decide(s, r));
      json flagged = json::array();
      for (int i = 0; i < g.n_areas(); ++i)
        if (labels.back().labels[i]) flagged.push_back(g.area_ids()[i]);
      rules.push_back({{"rule", r.family()}, {"threshold", r.threshold_label()}, {"detections", labels.back().detections()},
                       {"areas", flagged}});
    }
    local["rules"] = rules;
    mj["local"] = local;
    if (fam == ModelFamily::SCM) {
      const Eigen::MatrixXd c = scm_contrast_draws(f);
      Eigen::VectorXd med(c.cols());
      for (Eigen::Index i = 0; i < c.cols(); ++i) med[i] = median(c.col(i));
      mj["scm_contrast_D2_minus_D1_median_range"] = {med.minCoeff(), med.maxCoeff()};
    }
    report["models"][mname] = mj;

    for (int i = 0; i < g.n_areas(); ++i) {
      std::vector<std::string> row{mname,
                                   g.area_ids()[i],
                                   to_string(src),
                                   io::format_number(s.psi_median[i]),
                                   io::format_number(s.nrep[i]),
                                   io::format_number(s.rcep[i])};
      for (const auto& l : labels) row.push_back(l.labels[i] ? "1" : "0");
      areas.write_row(row);
    }

    if (!in.features.empty()) {
      std::vector<io::GeoFeature> feats = in.features;
      for (int i = 0; i < g.n_areas(); ++i) {
        auto& p = feats[i].properties;
        p = json{{"id", g.area_ids()[i]},
                 {"psi_median", s.psi_median[i]},
                 {"nrep", s.nrep[i]},
                 {"rcep", s.rcep[i]}};
        for (std::size_t k = 0; k < cfg.rules.size(); ++k) p[rule_column(cfg.rules[k])] = labels[k].labels[i] ? 1 : 0;
      }
      json gj = io::to_geojson(feats);
      gj["manifest_sha256"] = digest;
      gj["model"] = mname;
      gj["center_cstar"] = s.center_cstar;
      out.write("surface_" + mname + ".geojson", gj.dump() + "\n");
      const auto geoms = io::geometries(in.features);
      out.write("psi_median_" + mname + ".svg",
                io::choropleth_svg(geoms, s.psi_median,
                                   io::ColourScale::diverging(s.center_cstar, io::covering_half_range(s.psi_median, s.center_cstar)),
                                   mname + ": posterior median of " + to_string(src) + " (centred at c*)", man.svg_comment()));
      std::vector<double> rr(s.psi_median.size());
      for (std::size_t i = 0; i < rr.size(); ++i) rr[i] = std::exp(s.psi_median[i]);
      out.write("rcep_" + mname + ".svg",
                io::choropleth_svg(geoms, s.rcep, io::ColourScale::sequential(0.0, 1.0),
                                   mname + ": RCEP, epsilon = " + io::format_number(cfg.epsilon, 4), man.svg_comment()));
      out.write("local_rr_" + mname + ".svg",
                io::choropleth_svg(geoms, rr, io::ColourScale::diverging(1.0, io::covering_half_range(rr, 1.0)),
                                   mname + ": exp of the posterior median of " + to_string(src) + " (centred at 1)",
                                   man.svg_comment()));
    }
  }
  out.write("areas.csv", areas.str());
  out.write("report.json", report.dump(2) + "\n");
  write_manifest(out, man, started);
  return out.files();
}

}  // namespace mapval::cli
