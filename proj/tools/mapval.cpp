// mapval command-line entry point.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mapval/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> models;
  std::optional<std::string> rules;
  std::optional<int> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  app->add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "Global seed (overrides the config)");
  app->add_option("--models", c.models, "Comma-separated models: rem,sem,scm");
  app->add_option("--rules", c.rules, "Decision rules, e.g. rcep:0.9,nrep:0.05:0.95 or all");
  app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber);
}

mapval::cli::Overrides overrides(const Common& c) {
  mapval::cli::Overrides o;
  o.seed = c.seed;
  o.models = c.models;
  o.rules = c.rules;
  o.threads = c.threads;
  return o;
}

void print_files(const std::string& dir, const std::vector<std::string>& files) {
  for (const auto& f : files) std::cout << dir << "/" << f << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian map-to-map validation of paired areal count databases"};
  app.set_version_flag("--version", std::string(mapval::cli::kToolVersion));
  app.require_subcommand(1);

  Common sim_c, fit_c, val_c, rep_c;
  std::string fit_data, fit_model, fit_geometry, val_data, val_geometry, rep_results;

  auto* sim = app.add_subcommand("simulate", "Run a simulation study");
  add_common(sim, sim_c);

  auto* fitc = app.add_subcommand("fit", "Fit one model to a paired dataset and persist the draws");
  add_common(fitc, fit_c);
  fitc->add_option("--data", fit_data, "Paired data CSV (area_id,pop,obs_ref,obs_cand[,expected])")
      ->required()
      ->check(CLI::ExistingFile);
  fitc->add_option("--model", fit_model, "rem, sem or scm")->required();
  fitc->add_option("--geometry", fit_geometry, "GeoJSON geometry (overrides the config)")->check(CLI::ExistingFile);

  auto* val = app.add_subcommand("validate", "Compare two databases with the joint models");
  add_common(val, val_c);
  val->add_option("--data", val_data, "Paired data CSV (area_id,pop,obs_ref,obs_cand[,expected])")
      ->required()
      ->check(CLI::ExistingFile);
  val->add_option("--geometry", val_geometry, "GeoJSON geometry (overrides the config)")->check(CLI::ExistingFile);
  bool force = false;
  val->add_flag("--force", force, "Report fits that did not meet the convergence criterion");

  auto* rep = app.add_subcommand("report", "Aggregate a results table");
  add_common(rep, rep_c);
  rep->add_option("--results", rep_results, "results.csv from simulate")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  using namespace mapval;
  try {
    if (*sim) {
      const auto cfg = cli::load_run_config(sim_c.config, overrides(sim_c));
      print_files(sim_c.out_dir, cli::cmd_simulate(cfg, sim_c.out_dir));
    } else if (*fitc) {
      auto o = overrides(fit_c);
      if (!fit_geometry.empty()) o.geometry = fit_geometry;
      const auto cfg = cli::load_run_config(fit_c.config, o);
      print_files(fit_c.out_dir, cli::cmd_fit(fit_data, fit_model, cfg, fit_c.out_dir));
    } else if (*val) {
      auto o = overrides(val_c);
      if (!val_geometry.empty()) o.geometry = val_geometry;
      auto cfg = cli::load_run_config(val_c.config, o);
      if (force) cfg.force = true;
      print_files(val_c.out_dir, cli::cmd_validate(val_data, cfg, val_c.out_dir));
    } else if (*rep) {
      const auto cfg = cli::load_run_config(rep_c.config, overrides(rep_c));
      print_files(rep_c.out_dir, cli::cmd_report(rep_results, cfg, rep_c.out_dir));
    }
  } catch (const cli::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
