#pragma once

// Persisted posterior draws: one columnar CSV per parameter block plus a JSON
// sidecar with the layout, priors and diagnostics. Values are written with 17
// significant digits so a reload reproduces the in-memory fit exactly.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapval/io/csv.hpp"
#include "mapval/sampler.hpp"

namespace mapval::io {

using json = nlohmann::json;

inline json model_spec_json(const ModelSpec& m) {
  json pp = json::object();
  for (const auto& [name, prior] : m.precision_priors) {
    if (const auto* pc = std::get_if<PcPrecisionPrior>(&prior))
      pp[name] = {{"type", "pc"}, {"u", pc->threshold_u}, {"alpha", pc->tail_prob_alpha}};
    else {
      const auto& lg = std::get<LogGammaPrior>(prior);
      pp[name] = {{"type", "loggamma"}, {"shape", lg.shape}, {"rate", lg.rate}};
    }
  }
  json mp = json::object();
  for (const auto& [name, prior] : m.mixing_priors) mp[name] = {{"median", prior.median_phi}, {"uniform", prior.uniform}};
  return {{"family", to_string(m.family)},
          {"precision_priors", pp},
          {"mixing_priors", mp},
          {"intercept_prior_sd", m.intercept_prior_sd},
          {"delta_fixed", m.delta_fixed}};
}

inline ModelSpec model_spec_from_json(const json& j) {
  ModelSpec m;
  m.family = parse_model_family(j.at("family").get<std::string>());
  for (const auto& [name, p] : j.at("precision_priors").items()) {
    if (p.at("type") == "pc")
      m.precision_priors[name] = PcPrecisionPrior{p.at("u").get<double>(), p.at("alpha").get<double>()};
    else
      m.precision_priors[name] = LogGammaPrior{p.at("shape").get<double>(), p.at("rate").get<double>()};
  }
  for (const auto& [name, p] : j.at("mixing_priors").items())
    m.mixing_priors[name] = PcMixingPrior{p.at("median").get<double>(), p.at("uniform").get<bool>()};
  m.intercept_prior_sd = j.at("intercept_prior_sd").get<double>();
  m.delta_fixed = j.at("delta_fixed").get<bool>();
  return m;
}

struct DrawFiles {
  std::string metadata;
  std::vector<std::string> blocks;
};

namespace detail {

inline std::vector<std::string> global_names(const PosteriorFit& fit) {
  std::vector<std::string> out{"alpha1", "alpha2"};
  for (const auto& f : fit.field_names) {
    out.push_back("tau_" + f);
    if (fit.has("phi_" + f)) out.push_back("phi_" + f);
  }
  return out;
}

inline std::string block_csv(const PosteriorFit& fit, const std::vector<std::string>& header_names,
                             const std::vector<int>& cols, const std::vector<std::string>& comments) {
  std::vector<std::string> header{"chain", "draw"};
  header.insert(header.end(), header_names.begin(), header_names.end());
  CsvWriter w(header, comments);
  std::vector<std::string> row(header.size());
  for (int c = 0; c < fit.n_chains; ++c)
    for (int k = 0; k < fit.n_kept; ++k) {
      const Eigen::Index r = static_cast<Eigen::Index>(c) * fit.n_kept + k;
      row[0] = std::to_string(c);
      row[1] = std::to_string(k);
      for (std::size_t j = 0; j < cols.size(); ++j) row[j + 2] = format_number(fit.draws(r, cols[j]), 17);
      w.write_row(row);
    }
  return w.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace detail

/// Writes `<prefix>_globals.csv`, `<prefix>_<field>.csv` and `<prefix>_fit.json`
/// into `dir`. Field CSVs are indexed by area id.
inline DrawFiles save_draws(const PosteriorFit& fit, const std::filesystem::path& dir, const std::string& prefix,
                            const std::vector<std::string>& comments = {}) {
  std::filesystem::create_directories(dir);
  DrawFiles files;
  std::vector<std::string> blocks;
  {
    const auto names = detail::global_names(fit);
    std::vector<int> cols;
    for (const auto& n : names) cols.push_back(fit.index(n));
    const std::string file = prefix + "_globals.csv";
    detail::write_text(dir / file, detail::block_csv(fit, names, cols, comments));
    blocks.push_back(file);
  }
  for (const auto& f : fit.field_names) {
    std::vector<int> cols;
    for (int i = 0; i < fit.n_areas(); ++i) cols.push_back(fit.index(PosteriorFit::element_name(f, i)));
    const std::string file = prefix + "_" + f + ".csv";
    detail::write_text(dir / file, detail::block_csv(fit, fit.area_ids, cols, comments));
    blocks.push_back(file);
  }
  json diag = json::array();
  for (const auto& d : fit.diagnostics) diag.push_back({{"name", d.name}, {"rhat", d.rhat}, {"ess", d.ess}});
  json meta{{"model", model_spec_json(fit.model)},
            {"area_ids", fit.area_ids},
            {"field_names", fit.field_names},
            {"n_chains", fit.n_chains},
            {"n_kept", fit.n_kept},
            {"thinning", fit.thinning},
            {"converged", fit.converged},
            {"acceptance_hyper", fit.acceptance_hyper},
            {"acceptance_latent", fit.acceptance_latent},
            {"acceptance_independence", fit.acceptance_independence},
            {"diagnostics", diag},
            {"blocks", blocks}};
  files.metadata = prefix + "_fit.json";
  detail::write_text(dir / files.metadata, meta.dump(2) + "\n");
  files.blocks = blocks;
  return files;
}

/// Reload a fit written by save_draws. `metadata_path` names the `_fit.json` file.
inline PosteriorFit load_draws(const std::filesystem::path& metadata_path) {
  std::ifstream in(metadata_path);
  if (!in) throw std::runtime_error("cannot open " + metadata_path.string());
  json meta;
  in >> meta;
  const auto dir = metadata_path.parent_path();
  PosteriorFit fit;
  fit.model = model_spec_from_json(meta.at("model"));
  fit.area_ids = meta.at("area_ids").get<std::vector<std::string>>();
  fit.field_names = meta.at("field_names").get<std::vector<std::string>>();
  fit.n_chains = meta.at("n_chains").get<int>();
  fit.n_kept = meta.at("n_kept").get<int>();
  fit.thinning = meta.at("thinning").get<int>();
  fit.converged = meta.at("converged").get<bool>();
  fit.acceptance_hyper = meta.at("acceptance_hyper").get<std::vector<double>>();
  fit.acceptance_latent = meta.at("acceptance_latent").get<std::vector<double>>();
  fit.acceptance_independence = meta.at("acceptance_independence").get<std::vector<double>>();
  for (const auto& d : meta.at("diagnostics"))
    fit.diagnostics.push_back({d.at("name").get<std::string>(), d.at("rhat").get<double>(), d.at("ess").get<double>()});

  // Same column order as the sampler: intercepts, fields, hyperparameters.
  fit.names = {"alpha1", "alpha2"};
  for (const auto& f : fit.field_names)
    for (int i = 0; i < fit.n_areas(); ++i) fit.names.push_back(PosteriorFit::element_name(f, i));
  const auto blocks = meta.at("blocks").get<std::vector<std::string>>();
  if (blocks.size() != fit.field_names.size() + 1) throw std::runtime_error("draws: block list does not match fields");
  const CsvTable globals = read_csv((dir / blocks[0]).string());
  for (std::size_t k = 2; k < globals.header.size(); ++k)
    if (globals.header[k] != "alpha1" && globals.header[k] != "alpha2") fit.names.push_back(globals.header[k]);
  fit.reindex();

  const Eigen::Index rows = static_cast<Eigen::Index>(fit.n_chains) * fit.n_kept;
  fit.draws.resize(rows, static_cast<Eigen::Index>(fit.names.size()));
  auto fill = [&](const CsvTable& t, const std::vector<int>& cols, const std::string& what) {
    if (static_cast<Eigen::Index>(t.rows.size()) != rows) throw std::runtime_error("draws: " + what + " has the wrong row count");
    for (Eigen::Index r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < cols.size(); ++j) fit.draws(r, cols[j]) = parse_double(t.rows[r][j + 2], what);
  };
  {
    std::vector<int> cols;
    for (std::size_t k = 2; k < globals.header.size(); ++k) cols.push_back(fit.index(globals.header[k]));
    fill(globals, cols, blocks[0]);
  }
  for (std::size_t f = 0; f < fit.field_names.size(); ++f) {
    const CsvTable t = read_csv((dir / blocks[f + 1]).string());
    if (t.header.size() != fit.area_ids.size() + 2) throw std::runtime_error("draws: " + blocks[f + 1] + " has the wrong width");
    std::vector<int> cols;
    for (int i = 0; i < fit.n_areas(); ++i) {
      if (t.header[i + 2] != fit.area_ids[i]) throw std::runtime_error("draws: area order differs in " + blocks[f + 1]);
      cols.push_back(fit.index(PosteriorFit::element_name(fit.field_names[f], i)));
    }
    fill(t, cols, blocks[f + 1]);
  }
  return fit;
}

}  // namespace mapval::io
