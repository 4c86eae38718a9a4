#pragma once

// Run configuration shared by every command. Unknown keys are rejected at
// every level so that misspellings never fall back to defaults silently.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapval/decision.hpp"
#include "mapval/latent.hpp"
#include "mapval/model.hpp"
#include "mapval/sampler.hpp"
#include "mapval/simulation.hpp"

namespace mapval::io {

using json = nlohmann::json;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PriorConfig {
  double precision_u = 1.0;
  double precision_alpha = 0.01;
  double mixing_median = 0.5;
  bool mixing_uniform = false;
  double loggamma_shape = 1.0;
  double loggamma_rate = 5e-5;
  double intercept_sd = 10.0;
};

struct PopulationConfig {
  std::string property = "BIR74";  // GeoJSON feature property
  std::string file;                // alternative: CSV with area_id,pop
  double scale_mean = 36400.0;     // rescale so the mean equals this; 0 keeps raw values
};

struct StudyConfig {
  PopulationConfig population;
  std::vector<double> baseline_p{0.01};
  std::vector<double> rho{0.5};
  double sigma2 = 0.2;
  int replicates = 100;
  double failure_cap = 0.5;
  bool allow_off_grid = false;
  std::vector<ScenarioConfig> scenarios;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<ModelFamily> models{ModelFamily::REM, ModelFamily::SEM, ModelFamily::SCM};
  std::vector<DecisionRule> rules = standard_rules();
  double epsilon = std::log(1.10);
  SamplerConfig sampler;
  PriorConfig priors;
  std::string geometry;  // GeoJSON path (resolved against the config file directory)
  std::string edges;     // alternative: CSV edge list src,dst
  double snap_tolerance = 1e-9;
  bool force = false;    // report non-converged fits in validate
  bool write_draws = true;
  StudyConfig study;
};

namespace detail {

inline void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError(where + ": unknown key '" + it.key() + "' (allowed: " + list + ")");
    }
}

inline double get_number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}
inline int get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  return v.get<int>();
}
inline bool get_bool(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
  return v.get<bool>();
}
inline std::string get_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}
inline std::vector<double> get_numbers(const json& v, const std::string& where) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError(where + ": expected a number or a list of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(get_number(x, where));
  return out;
}

inline ScenarioConfig parse_scenario_entry(const json& j, const std::string& where, bool allow_off_grid) {
  check_keys(j, {"scenario", "r", "mixed", "pi", "cluster_seed", "cluster_size"}, where);
  if (!j.contains("scenario")) throw ConfigError(where + ": missing 'scenario'");
  ScenarioConfig sc;
  try {
    sc.scenario = parse_scenario(get_string(j["scenario"], where + ".scenario"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  sc.allow_off_grid = allow_off_grid;
  if (j.contains("r")) sc.r_grid = get_numbers(j["r"], where + ".r");
  if (j.contains("mixed")) {
    if (!j["mixed"].is_array()) throw ConfigError(where + ".mixed: expected a list of [up, down] pairs");
    for (const auto& p : j["mixed"]) {
      const auto v = get_numbers(p, where + ".mixed");
      if (v.size() != 2) throw ConfigError(where + ".mixed: each entry must be [up, down]");
      sc.mixed_pairs.emplace_back(v[0], v[1]);
    }
  }
  if (j.contains("pi")) sc.proportion_pi = get_numbers(j["pi"], where + ".pi");
  if (j.contains("cluster_seed")) {
    const auto& v = j["cluster_seed"];
    sc.cluster.seed_area = v.is_number_integer() ? std::to_string(v.get<long long>()) : get_string(v, where);
  }
  if (j.contains("cluster_size")) sc.cluster.size = get_int(j["cluster_size"], where + ".cluster_size");
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return sc;
}

inline json scenario_json(const ScenarioConfig& sc) {
  json j{{"scenario", to_string(sc.scenario)}};
  if (!sc.r_grid.empty()) j["r"] = sc.r_grid;
  if (!sc.mixed_pairs.empty()) {
    json m = json::array();
    for (const auto& [u, d] : sc.mixed_pairs) m.push_back({u, d});
    j["mixed"] = m;
  }
  if (!sc.proportion_pi.empty()) j["pi"] = sc.proportion_pi;
  if (sc.scenario == Scenario::S3) {
    j["cluster_seed"] = sc.cluster.seed_area;
    j["cluster_size"] = sc.cluster.size;
  }
  return j;
}

}  // namespace detail

inline RunConfig parse_config(const json& j, const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  RunConfig c;
  check_keys(j, {"seed", "threads", "models", "rules", "epsilon", "sampler", "priors", "geometry", "edges",
                 "snap_tolerance", "force", "write_draws", "study"},
             "config");
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer()) throw ConfigError("config.seed: expected an integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("threads")) c.threads = get_int(j["threads"], "config.threads");
  if (c.threads < 1) throw ConfigError("config.threads: must be at least 1");
  if (j.contains("models")) {
    if (!j["models"].is_array() || j["models"].empty()) throw ConfigError("config.models: expected a non-empty list");
    c.models.clear();
    for (const auto& m : j["models"]) {
      try {
        c.models.push_back(parse_model_family(get_string(m, "config.models")));
      } catch (const ConfigError&) {
        throw;
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.models: ") + e.what());
      }
    }
  }
  if (j.contains("rules")) {
    std::string text;
    if (j["rules"].is_string()) {
      text = j["rules"].get<std::string>();
    } else if (j["rules"].is_array()) {
      for (const auto& r : j["rules"]) text += (text.empty() ? "" : ",") + get_string(r, "config.rules");
    } else {
      throw ConfigError("config.rules: expected a string or a list of strings");
    }
    try {
      c.rules = parse_rules(text);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.rules: ") + e.what());
    }
    if (c.rules.empty()) throw ConfigError("config.rules: no rules given");
  }
  if (j.contains("epsilon")) c.epsilon = get_number(j["epsilon"], "config.epsilon");
  if (!(c.epsilon > 0.0)) throw ConfigError("config.epsilon: must be positive");
  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, {"chains", "warmup", "kept", "thinning", "target_acceptance", "rhat_threshold", "ess_threshold",
                   "monitored_coordinates"},
               "config.sampler");
    if (s.contains("chains")) c.sampler.n_chains = get_int(s["chains"], "config.sampler.chains");
    if (s.contains("warmup")) c.sampler.n_warmup = get_int(s["warmup"], "config.sampler.warmup");
    if (s.contains("kept")) c.sampler.n_kept = get_int(s["kept"], "config.sampler.kept");
    if (s.contains("thinning")) c.sampler.thinning = get_int(s["thinning"], "config.sampler.thinning");
    if (s.contains("target_acceptance"))
      c.sampler.target_acceptance = get_number(s["target_acceptance"], "config.sampler.target_acceptance");
    if (s.contains("rhat_threshold")) c.sampler.rhat_threshold = get_number(s["rhat_threshold"], "config.sampler.rhat_threshold");
    if (s.contains("ess_threshold")) c.sampler.ess_threshold = get_number(s["ess_threshold"], "config.sampler.ess_threshold");
    if (s.contains("monitored_coordinates"))
      c.sampler.monitored_coordinates = get_int(s["monitored_coordinates"], "config.sampler.monitored_coordinates");
    try {
      c.sampler.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.sampler: ") + e.what());
    }
  }
  if (j.contains("priors")) {
    const auto& p = j["priors"];
    check_keys(p, {"precision_u", "precision_alpha", "mixing_median", "mixing_uniform", "loggamma_shape",
                   "loggamma_rate", "intercept_sd"},
               "config.priors");
    auto& q = c.priors;
    if (p.contains("precision_u")) q.precision_u = get_number(p["precision_u"], "config.priors.precision_u");
    if (p.contains("precision_alpha")) q.precision_alpha = get_number(p["precision_alpha"], "config.priors.precision_alpha");
    if (p.contains("mixing_median")) q.mixing_median = get_number(p["mixing_median"], "config.priors.mixing_median");
    if (p.contains("mixing_uniform")) q.mixing_uniform = get_bool(p["mixing_uniform"], "config.priors.mixing_uniform");
    if (p.contains("loggamma_shape")) q.loggamma_shape = get_number(p["loggamma_shape"], "config.priors.loggamma_shape");
    if (p.contains("loggamma_rate")) q.loggamma_rate = get_number(p["loggamma_rate"], "config.priors.loggamma_rate");
    if (p.contains("intercept_sd")) q.intercept_sd = get_number(p["intercept_sd"], "config.priors.intercept_sd");
    if (!(q.precision_u > 0) || !(q.precision_alpha > 0 && q.precision_alpha < 1) ||
        !(q.mixing_median > 0 && q.mixing_median < 1) || !(q.loggamma_shape > 0) || !(q.loggamma_rate > 0) ||
        !(q.intercept_sd > 0))
      throw ConfigError("config.priors: parameter out of range");
  }
  auto resolve = [&](const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    return path.lexically_normal().string();
  };
  if (j.contains("geometry")) c.geometry = resolve(get_string(j["geometry"], "config.geometry"));
  if (j.contains("edges")) c.edges = resolve(get_string(j["edges"], "config.edges"));
  if (j.contains("snap_tolerance")) c.snap_tolerance = get_number(j["snap_tolerance"], "config.snap_tolerance");
  if (!(c.snap_tolerance > 0.0)) throw ConfigError("config.snap_tolerance: must be positive");
  if (j.contains("force")) c.force = get_bool(j["force"], "config.force");
  if (j.contains("write_draws")) c.write_draws = get_bool(j["write_draws"], "config.write_draws");
  if (j.contains("study")) {
    const auto& s = j["study"];
    check_keys(s, {"population", "baseline_p", "rho", "sigma2", "replicates", "failure_cap", "allow_off_grid", "scenarios"},
               "config.study");
    auto& st = c.study;
    if (s.contains("population")) {
      const auto& p = s["population"];
      check_keys(p, {"property", "file", "scale_mean"}, "config.study.population");
      if (p.contains("property")) st.population.property = get_string(p["property"], "config.study.population.property");
      if (p.contains("file")) st.population.file = resolve(get_string(p["file"], "config.study.population.file"));
      if (p.contains("scale_mean")) st.population.scale_mean = get_number(p["scale_mean"], "config.study.population.scale_mean");
      if (st.population.scale_mean < 0) throw ConfigError("config.study.population.scale_mean: must be >= 0");
    }
    if (s.contains("baseline_p")) st.baseline_p = get_numbers(s["baseline_p"], "config.study.baseline_p");
    if (s.contains("rho")) st.rho = get_numbers(s["rho"], "config.study.rho");
    if (s.contains("sigma2")) st.sigma2 = get_number(s["sigma2"], "config.study.sigma2");
    if (s.contains("replicates")) st.replicates = get_int(s["replicates"], "config.study.replicates");
    if (s.contains("failure_cap")) st.failure_cap = get_number(s["failure_cap"], "config.study.failure_cap");
    if (s.contains("allow_off_grid")) st.allow_off_grid = get_bool(s["allow_off_grid"], "config.study.allow_off_grid");
    if (s.contains("scenarios")) {
      if (!s["scenarios"].is_array()) throw ConfigError("config.study.scenarios: expected a list");
      int k = 0;
      for (const auto& e : s["scenarios"])
        st.scenarios.push_back(
            parse_scenario_entry(e, "config.study.scenarios[" + std::to_string(k++) + "]", st.allow_off_grid));
    }
    if (st.baseline_p.empty() || st.rho.empty()) throw ConfigError("config.study: baseline_p and rho must be non-empty");
    if (!(st.sigma2 > 0)) throw ConfigError("config.study.sigma2: must be positive");
    if (st.replicates < 1) throw ConfigError("config.study.replicates: must be at least 1");
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j, std::filesystem::path(path).parent_path());
}

/// Fully resolved configuration, every default spelled out.
inline json config_to_json(const RunConfig& c) {
  json models = json::array();
  for (auto m : c.models) models.push_back(to_string(m));
  json rules = json::array();
  for (const auto& r : c.rules)
    rules.push_back(r.kind == DecisionRule::Kind::NREP
                        ? "nrep:" + mapval::detail::short_number(r.lower) + ":" + mapval::detail::short_number(r.upper)
                        : "rcep:" + mapval::detail::short_number(r.threshold));
  json scenarios = json::array();
  for (const auto& s : c.study.scenarios) scenarios.push_back(detail::scenario_json(s));
  return {
      {"seed", c.seed},
      {"threads", c.threads},
      {"models", models},
      {"rules", rules},
      {"epsilon", c.epsilon},
      {"sampler",
       {{"chains", c.sampler.n_chains},
        {"warmup", c.sampler.n_warmup},
        {"kept", c.sampler.n_kept},
        {"thinning", c.sampler.thinning},
        {"target_acceptance", c.sampler.target_acceptance},
        {"rhat_threshold", c.sampler.rhat_threshold},
        {"ess_threshold", c.sampler.ess_threshold},
        {"monitored_coordinates", c.sampler.monitored_coordinates}}},
      {"priors",
       {{"precision_u", c.priors.precision_u},
        {"precision_alpha", c.priors.precision_alpha},
        {"mixing_median", c.priors.mixing_median},
        {"mixing_uniform", c.priors.mixing_uniform},
        {"loggamma_shape", c.priors.loggamma_shape},
        {"loggamma_rate", c.priors.loggamma_rate},
        {"intercept_sd", c.priors.intercept_sd}}},
      {"geometry", c.geometry},
      {"edges", c.edges},
      {"snap_tolerance", c.snap_tolerance},
      {"force", c.force},
      {"write_draws", c.write_draws},
      {"study",
       {{"population",
         {{"property", c.study.population.property},
          {"file", c.study.population.file},
          {"scale_mean", c.study.population.scale_mean}}},
        {"baseline_p", c.study.baseline_p},
        {"rho", c.study.rho},
        {"sigma2", c.study.sigma2},
        {"replicates", c.study.replicates},
        {"failure_cap", c.study.failure_cap},
        {"allow_off_grid", c.study.allow_off_grid},
        {"scenarios", scenarios}}},
  };
}

/// Model specification with the configured hyperpriors.
inline ModelSpec make_spec(ModelFamily family, const PriorConfig& p) {
  ModelSpec m = ModelSpec::defaults(family);
  m.intercept_prior_sd = p.intercept_sd;
  for (auto& [name, prior] : m.precision_priors) {
    if (std::holds_alternative<PcPrecisionPrior>(prior))
      prior = PcPrecisionPrior{p.precision_u, p.precision_alpha};
    else
      prior = LogGammaPrior{p.loggamma_shape, p.loggamma_rate};
  }
  for (auto& [name, prior] : m.mixing_priors) prior = PcMixingPrior{p.mixing_median, p.mixing_uniform};
  return m;
}

}  // namespace mapval::io
