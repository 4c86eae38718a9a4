// Acceptance runs. `mapval_acceptance <C1..C8|all>` prints one PASS/FAIL line
// per criterion and exits non-zero if any of them failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "mapval/commands.hpp"

using namespace mapval;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

fs::path work_dir(const std::string& crit) {
  const fs::path p = fs::current_path() / "acceptance_out" / crit;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int hardware_threads() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

// ---------------------------------------------------------------------------
// C1: sampler against a prior importance-sampling oracle on a 4-area path.

Outcome c1() {
  const int n = 4;
  const std::vector<int> ref{3, 1, 4, 2}, cand{2, 5, 1, 4};
  const Eigen::Vector4d expected(2.5, 2.0, 3.0, 2.5);

  PairedDataset d;
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}, {2, 3}};
  d.graph = std::make_shared<const AreaGraph>(build_adjacency_from_edges(n, edges));
  d.counts_ref = ref;
  d.counts_cand = cand;
  d.population = Eigen::VectorXd::Constant(n, 100.0);
  d.expected = expected;

  SamplerConfig sc;
  sc.threads = hardware_threads();
  const PosteriorFit f = fit(ModelSpec::defaults(ModelFamily::REM), d, sc, 11);
  const Eigen::VectorXd delta = f.column("alpha2") - f.column("alpha1");
  const Eigen::VectorXd e1_pos = (f.column("e[0]").array() > 0.0).cast<double>().matrix();
  auto mcmc = [&](const Eigen::VectorXd& v) {
    const double mean = v.mean();
    const double sd = std::sqrt((v.array() - mean).square().sum() / (v.size() - 1));
    return std::pair<double, double>{mean, sd / std::sqrt(effective_sample_size(f.by_chain(v)))};
  };

  // Dense scaled ICAR covariance: pseudo-inverse of the path Laplacian divided
  // by the geometric mean of its diagonal.
  Eigen::Matrix4d lap = Eigen::Matrix4d::Zero();
  for (const auto& [i, j] : edges) {
    lap(i, i) += 1, lap(j, j) += 1;
    lap(i, j) -= 1, lap(j, i) -= 1;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(lap);
  Eigen::Matrix4d pinv = Eigen::Matrix4d::Zero();
  for (int k = 1; k < n; ++k) pinv += es.eigenvectors().col(k) * es.eigenvectors().col(k).transpose() / es.eigenvalues()[k];
  const double scale = std::exp(pinv.diagonal().array().log().mean());
  Eigen::Matrix4d u_factor = Eigen::Matrix4d::Zero();  // u* = u_factor z
  for (int k = 1; k < n; ++k) u_factor.col(k) = es.eigenvectors().col(k) / std::sqrt(es.eigenvalues()[k] * scale);

  const PcMixingTable mixing(*d.graph, PcMixingPrior{});
  auto draw_phi = [&](double p) {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 50; ++it) {
      const double mid = 0.5 * (lo + hi);
      (mixing.exact_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  const double lambda = -std::log(0.01);

  const int draws = 1000000;
  Rng rng(20240601);
  std::vector<double> logw(draws), fd(draws), fe(draws);
  for (int k = 0; k < draws; ++k) {
    const double a1 = 10.0 * rng.normal(), a2 = 10.0 * rng.normal();
    const double sigma_s = -std::log(1.0 - rng.uniform()) / lambda;
    const double phi = draw_phi(rng.uniform());
    const double tau_e = -std::log(1.0 - rng.uniform()) / 5e-5;
    const Eigen::Vector4d u = u_factor * Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector4d v(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    const Eigen::Vector4d s = sigma_s * (std::sqrt(phi) * u + std::sqrt(1.0 - phi) * v);
    const Eigen::Vector4d e = Eigen::Vector4d(rng.normal(), rng.normal(), rng.normal(), rng.normal()) / std::sqrt(tau_e);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      const double eta1 = a1 + s[i], eta2 = a2 + s[i] + e[i];
      ll += ref[i] * eta1 - expected[i] * std::exp(eta1);
      ll += cand[i] * eta2 - expected[i] * std::exp(eta2);
    }
    logw[k] = ll;
    fd[k] = a2 - a1;
    fe[k] = e[0] > 0.0 ? 1.0 : 0.0;
  }
  const double lmax = *std::max_element(logw.begin(), logw.end());
  double sw = 0.0, sw2 = 0.0;
  for (double& l : logw) {
    l = std::exp(l - lmax);
    sw += l;
    sw2 += l * l;
  }
  auto oracle = [&](const std::vector<double>& g) {
    double m = 0.0;
    for (int k = 0; k < draws; ++k) m += logw[k] * g[k];
    m /= sw;
    double v = 0.0;  // delta-method variance of the self-normalised estimator
    for (int k = 0; k < draws; ++k) v += logw[k] * logw[k] * (g[k] - m) * (g[k] - m);
    return std::pair<double, double>{m, std::sqrt(v) / sw};
  };
  const double is_ess = sw * sw / sw2;

  const auto [md, sd_] = mcmc(delta);
  const auto [me, se_] = mcmc(e1_pos);
  const auto [od, osd] = oracle(fd);
  const auto [oe, ose] = oracle(fe);
  const double zd = std::abs(md - od) / std::hypot(sd_, osd), ze = std::abs(me - oe) / std::hypot(se_, ose);
  Outcome o;
  o.pass = zd <= 3.0 && ze <= 3.0 && f.converged;
  o.detail = "E[delta] mcmc " + fmt(md) + " oracle " + fmt(od) + " (z=" + fmt(zd, 3) + "); Pr(e1>0) mcmc " + fmt(me) +
             " oracle " + fmt(oe) + " (z=" + fmt(ze, 3) + "); oracle ESS " + fmt(is_ess, 5) +
             (f.converged ? "" : "; sampler did not converge");
  return o;
}

// ---------------------------------------------------------------------------
// Simulation-study criteria, run through the simulate command.

io::CsvTable run_study_config(const std::string& name, const std::string& crit) {
  auto cfg = cli::load_run_config(std::string(MAPVAL_CONFIG_DIR) + "/" + name, {});
  cfg.threads = hardware_threads();
  const fs::path out = work_dir(crit);
  cli::cmd_simulate(cfg, out, &std::cerr);
  const io::CsvTable cells = io::read_csv((out / "cells.csv").string());
  for (const auto& r : cells.rows)
    if (r[cells.require("aborted")] == "true")
      throw std::runtime_error("cell " + r[cells.require("setting")] + " " + r[cells.require("model")] + " aborted: " +
                               r[cells.require("message")]);
  return io::read_csv((out / "results.csv").string());
}

/// Mean of the replicate-level RR medians per model.
std::map<std::string, double> rr_by_model(const io::CsvTable& t) {
  std::map<std::string, double> out;
  for (const auto& g : io::aggregate_rr(t)) {
    double s = 0.0;
    for (double v : g.medians) s += v;
    out[g.key[5]] = s / static_cast<double>(g.medians.size());
  }
  return out;
}

std::string label(const io::MetricGroup& g) {
  return g.key[5] + "/" + g.key[6] + " " + g.key[7];
}

double metric_mean(const io::MetricGroup& g, const std::string& m) {
  const auto v = g.metrics.at(m).mean();
  return v ? *v : std::numeric_limits<double>::quiet_NaN();
}

Outcome c2() {
  const io::CsvTable t = run_study_config("c2_null.json", "C2");
  Outcome o{true, ""};
  double worst = 1.0;
  std::string worst_label;
  for (const auto& g : io::aggregate_metrics(t)) {
    const double sp = metric_mean(g, "specificity");
    if (!(sp >= 0.98)) o.pass = false;
    if (!(sp >= worst)) worst = sp, worst_label = label(g);
  }
  o.detail = "min mean Sp " + fmt(worst) + (worst_label.empty() ? "" : " (" + worst_label + ")") + "; mean RR";
  for (const auto& [m, rr] : rr_by_model(t)) {
    if (!(rr >= 0.97 && rr <= 1.03)) o.pass = false;
    o.detail += " " + m + "=" + fmt(rr);
  }
  return o;
}

Outcome c3() {
  const io::CsvTable t = run_study_config("c3_shift.json", "C3");
  Outcome o{true, "mean RR"};
  for (const auto& [m, rr] : rr_by_model(t)) {
    if (!(rr >= 1.40 && rr <= 1.60)) o.pass = false;
    o.detail += " " + m + "=" + fmt(rr);
  }
  long detections = 0;
  const int c = t.require("n_detected");
  for (const auto& r : t.rows) detections += io::parse_long(r[c], "n_detected");
  if (detections != 0) o.pass = false;
  o.detail += "; local detections " + std::to_string(detections);
  return o;
}

Outcome c4() {
  const io::CsvTable t = run_study_config("c4_sparse.json", "C4");
  const auto groups = io::aggregate_metrics(t);
  if (groups.size() != 1) return {false, "expected one metric group, got " + std::to_string(groups.size())};
  const auto& g = groups[0];
  const std::vector<std::tuple<std::string, double, double>> targets{
      {"sensitivity", 0.974, 0.05}, {"specificity", 0.983, 0.03}, {"fdr", 0.048, 0.05}, {"mcc", 0.950, 0.05}};
  Outcome o{true, ""};
  for (const auto& [m, want, tol] : targets) {
    const double v = metric_mean(g, m);
    const bool ok = std::abs(v - want) <= tol;
    o.pass = o.pass && ok;
    o.detail += (o.detail.empty() ? "" : ", ") + m + " " + fmt(v) + (ok ? "" : " (target " + fmt(want) + "+-" + fmt(tol) + ")");
  }
  return o;
}

Outcome c5() {
  const io::CsvTable t = run_study_config("c5_dense.json", "C5");
  Outcome o{true, ""};
  for (const auto& g : io::aggregate_metrics(t)) {
    const double sp = metric_mean(g, "specificity"), mcc = metric_mean(g, "mcc");
    if (!(sp <= 0.10 && mcc <= 0.0)) o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + label(g) + " Sp " + fmt(sp) + " MCC " + fmt(mcc);
  }
  return o;
}

Outcome c6() {
  const io::CsvTable t = run_study_config("c6_cluster.json", "C6");
  Outcome o{true, "mean RR"};
  for (const auto& [m, rr] : rr_by_model(t)) {
    if (!(rr >= 1.05 && rr <= 1.18)) o.pass = false;
    o.detail += " " + m + "=" + fmt(rr);
  }
  return o;
}

// ---------------------------------------------------------------------------
// C7: the unit and property suite within a minute.

int run(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome c7() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path log = work_dir("C7") / "unit.log";
  const int rc = run(std::string(MAPVAL_TESTS) + " > " + log.string() + " 2>&1");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string text = slurp(log);
  std::string summary = "no summary";
  if (const auto p = text.rfind("[  PASSED  ]"); p != std::string::npos) summary = text.substr(p, text.find('\n', p) - p);
  if (const auto p = text.rfind("[  FAILED  ]"); p != std::string::npos) summary = text.substr(p, text.find('\n', p) - p);
  return {rc == 0 && secs < 60.0, summary + " in " + fmt(secs, 3) + " s"};
}

// ---------------------------------------------------------------------------
// C8: reruns of every command give byte-identical outputs.

std::string compare_dirs(const fs::path& a, const fs::path& b, bool same_threads) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
  std::size_t nb = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(b)) ++nb;
  if (names.size() != nb) return a.filename().string() + ": file lists differ";
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    if (!fs::exists(b / n)) return n + " missing in rerun";
    if (n == "manifest.json") {
      auto ja = nlohmann::json::parse(slurp(a / n)), jb = nlohmann::json::parse(slurp(b / n));
      for (auto* j : {&ja, &jb}) {
        j->erase("timestamps");
        if (!same_threads) j->erase("resolved_config");
      }
      if (ja != jb) return n + " differs beyond timestamps";
    } else if (slurp(a / n) != slurp(b / n)) {
      return n + " differs";
    }
  }
  return {};
}

Outcome c8() {
  const fs::path root = work_dir("C8");
  const std::string cli = MAPVAL_CLI, cfg = std::string(MAPVAL_CONFIG_DIR) + "/determinism.json";
  const std::string demo_cfg = std::string(MAPVAL_DEMO_DIR) + "/validate.json";
  const std::string demo_data = std::string(MAPVAL_DEMO_DIR) + "/nc_paired.csv";
  const std::string quiet = " > /dev/null 2>&1";
  struct Job {
    std::string name, args;
  };
  const std::vector<Job> jobs{
      {"simulate", "simulate --config " + cfg},
      {"validate", "validate --config " + demo_cfg + " --data " + demo_data},
      {"fit", "fit --config " + demo_cfg + " --data " + demo_data + " --model sem"},
  };
  Outcome o{true, ""};
  int compared = 0;
  for (const auto& j : jobs) {
    for (const char* run_name : {"a", "b"}) {
      const fs::path out = root / (j.name + "_" + run_name);
      if (run(cli + " " + j.args + " --out-dir " + out.string() + quiet) != 0)
        return {false, j.name + " run " + run_name + " failed"};
    }
    if (const auto diff = compare_dirs(root / (j.name + "_a"), root / (j.name + "_b"), true); !diff.empty())
      return {false, j.name + ": " + diff};
    ++compared;
  }
  // report on the simulate output
  for (const char* run_name : {"a", "b"})
    if (run(cli + " report --results " + (root / "simulate_a" / "results.csv").string() + " --out-dir " +
            (root / (std::string("report_") + run_name)).string() + quiet) != 0)
      return {false, "report failed"};
  if (const auto diff = compare_dirs(root / "report_a", root / "report_b", true); !diff.empty()) return {false, "report: " + diff};
  ++compared;
  // The thread count is not part of the result.
  if (run(cli + " simulate --config " + cfg + " --threads 3 --out-dir " + (root / "simulate_t3").string() + quiet) != 0)
    return {false, "simulate with 3 threads failed"};
  if (const auto diff = compare_dirs(root / "simulate_a", root / "simulate_t3", false); !diff.empty())
    return {false, "simulate across thread counts: " + diff};
  o.detail = std::to_string(compared) + " commands rerun byte-identical (manifest timestamps aside); simulate also across 1 and 3 threads";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Outcome()>> criteria{{"C1", c1}, {"C2", c2}, {"C3", c3}, {"C4", c4},
                                                                 {"C5", c5}, {"C6", c6}, {"C7", c7}, {"C8", c8}};
  std::vector<std::string> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(argv[i]);
  if (wanted.empty() || (wanted.size() == 1 && wanted[0] == "all"))
    for (const auto& [k, v] : criteria) wanted.push_back(k);
  bool all_ok = true;
  for (const auto& c : wanted) {
    const auto it = criteria.find(c);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << c << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << c << " " << (o.pass ? "PASS" : "FAIL") << " " << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
    all_ok = all_ok && o.pass;
  }
  return all_ok ? 0 : 1;
}
