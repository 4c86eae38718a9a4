#pragma once

// Paired-database simulation: Leroux reference surface, the four disturbance
// scenarios, and the replicate loop that fits, decides and scores.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mapval/decision.hpp"
#include "mapval/graph.hpp"
#include "mapval/latent.hpp"
#include "mapval/metrics.hpp"
#include "mapval/model.hpp"
#include "mapval/rng.hpp"
#include "mapval/sampler.hpp"

namespace mapval {

enum class Scenario { S1, S2, S3, S4 };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::S1: return "S1";
    case Scenario::S2: return "S2";
    case Scenario::S3: return "S3";
    case Scenario::S4: return "S4";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string& s) {
  if (s == "S1" || s == "s1") return Scenario::S1;
  if (s == "S2" || s == "s2") return Scenario::S2;
  if (s == "S3" || s == "s3") return Scenario::S3;
  if (s == "S4" || s == "s4") return Scenario::S4;
  throw std::invalid_argument("unknown scenario '" + s + "' (expected S1..S4)");
}

inline const std::vector<double>& quoted_r_grid() {
  static const std::vector<double> g{0.25, 0.50, 0.75, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5};
  return g;
}
inline const std::vector<std::pair<double, double>>& quoted_mixed_pairs() {
  static const std::vector<std::pair<double, double>> g{{1.5, 0.75}, {1.75, 0.50}};
  return g;
}
inline const std::vector<double>& quoted_proportions() {
  static const std::vector<double> g{0.25, 0.50};
  return g;
}
inline const std::vector<double>& quoted_baseline_p() {
  static const std::vector<double> g{0.01, 0.001, 0.0001};
  return g;
}
inline const std::vector<double>& quoted_rho() {
  static const std::vector<double> g{0.25, 0.50, 0.75};
  return g;
}

namespace detail {
inline bool on_grid(double v, const std::vector<double>& g) {
  return std::any_of(g.begin(), g.end(), [v](double x) { return std::abs(x - v) < 1e-12; });
}
inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}
}  // namespace detail

struct ClusterSpec {
  std::string seed_area;  // empty: the area of maximum degree (lowest index on ties)
  int size = 15;
};

/// One concrete disturbance: a single factor, or an (up, down) pair for mixed settings.
struct PerturbationSetting {
  Scenario scenario = Scenario::S1;
  bool mixed = false;
  double r = 1.0;
  double r_up = 1.0;
  double r_down = 1.0;
  double pi = 0.0;  // S4 only

  std::string direction() const {
    if (scenario == Scenario::S1) return "none";
    if (mixed) return "mixed";
    return r > 1.0 ? "upward" : "downward";
  }
  std::string label() const {
    std::string s;
    if (scenario == Scenario::S1) return "null";
    if (scenario == Scenario::S4) s = "pi=" + detail::fmt(pi) + ";";
    if (mixed) return s + "r=" + detail::fmt(r_up) + "/" + detail::fmt(r_down);
    return s + "r=" + detail::fmt(r);
  }
};

struct ScenarioConfig {
  Scenario scenario = Scenario::S1;
  std::vector<double> r_grid;
  std::vector<std::pair<double, double>> mixed_pairs;
  std::vector<double> proportion_pi;
  ClusterSpec cluster;
  bool allow_off_grid = false;

  void validate() const {
    if (scenario == Scenario::S1) {
      if (!r_grid.empty() || !mixed_pairs.empty()) throw std::invalid_argument("S1 admits no perturbation factors");
      return;
    }
    if (r_grid.empty() && mixed_pairs.empty())
      throw std::invalid_argument(to_string(scenario) + ": no perturbation factors given");
    if (scenario == Scenario::S2 && !mixed_pairs.empty())
      throw std::invalid_argument("S2 is a uniform shift; mixed pairs are not defined");
    for (double r : r_grid) {
      if (!(r > 0.0) || r == 1.0) throw std::invalid_argument("perturbation factors must be positive and differ from 1");
      if (!allow_off_grid && !detail::on_grid(r, quoted_r_grid()))
        throw std::invalid_argument("factor " + detail::fmt(r) + " is not on the quoted grid (set allow_off_grid)");
    }
    for (const auto& [up, down] : mixed_pairs) {
      if (!(up > 1.0 && down > 0.0 && down < 1.0)) throw std::invalid_argument("mixed pairs need up > 1 > down > 0");
      const bool quoted = std::any_of(quoted_mixed_pairs().begin(), quoted_mixed_pairs().end(), [&](const auto& q) {
        return std::abs(q.first - up) < 1e-12 && std::abs(q.second - down) < 1e-12;
      });
      if (!allow_off_grid && !quoted) throw std::invalid_argument("mixed pair is not on the quoted grid");
    }
    if (scenario == Scenario::S4) {
      if (proportion_pi.empty()) throw std::invalid_argument("S4 needs at least one proportion");
      for (double p : proportion_pi) {
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("S4 proportion must lie in (0,1]");
        if (!allow_off_grid && !detail::on_grid(p, quoted_proportions()))
          throw std::invalid_argument("proportion " + detail::fmt(p) + " is not on the quoted grid");
      }
    } else if (!proportion_pi.empty()) {
      throw std::invalid_argument("proportions apply to S4 only");
    }
    if (scenario == Scenario::S3 && cluster.size < 1) throw std::invalid_argument("S3 cluster size must be positive");
  }

  std::vector<PerturbationSetting> settings() const {
    validate();
    std::vector<PerturbationSetting> out;
    if (scenario == Scenario::S1) return {PerturbationSetting{}};
    const std::vector<double> pis = scenario == Scenario::S4 ? proportion_pi : std::vector<double>{0.0};
    for (double pi : pis) {
      for (double r : r_grid) out.push_back({scenario, false, r, r, r, pi});
      for (const auto& [up, down] : mixed_pairs) out.push_back({scenario, true, 1.0, up, down, pi});
    }
    return out;
  }
};

struct GenerationConfig {
  double baseline_p = 0.01;
  LerouxParams leroux{0.2, 0.5};
  Eigen::VectorXd population;
  int target_replicates = 100;
  std::uint64_t seed = 1;
  double failure_cap = 0.5;
  bool allow_off_grid = false;

  void validate(int n_areas) const {
    if (!(baseline_p > 0.0)) throw std::invalid_argument("baseline_p must be positive");
    leroux.validate();
    if (population.size() != n_areas) throw std::invalid_argument("population length differs from the number of areas");
    if (!(population.array() > 0.0).all()) throw std::invalid_argument("populations must be positive");
    if (target_replicates < 1) throw std::invalid_argument("target_replicates must be at least 1");
    if (!(failure_cap > 0.0 && failure_cap <= 1.0)) throw std::invalid_argument("failure_cap must lie in (0,1]");
    if (!allow_off_grid) {
      if (!detail::on_grid(baseline_p, quoted_baseline_p()))
        throw std::invalid_argument("baseline_p is not on the quoted grid (set allow_off_grid)");
      if (!detail::on_grid(leroux.correlation, quoted_rho()))
        throw std::invalid_argument("Leroux correlation is not on the quoted grid (set allow_off_grid)");
    }
  }
};

class DegenerateData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ReferenceData {
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;
  std::vector<int> counts_ref;
  Eigen::VectorXd expected;
};

/// Leroux surface, reference counts and internally standardised expected counts.
inline ReferenceData generate_reference(const AreaGraph& graph, const GenerationConfig& gen, std::uint64_t seed) {
  if (gen.population.size() != graph.n_areas()) throw std::invalid_argument("generate_reference: population length");
  if (!(gen.population.array() > 0.0).all()) throw std::invalid_argument("generate_reference: populations must be positive");
  Rng rng(seed);
  ReferenceData d;
  d.z = sample_leroux(graph, gen.leroux, rng);
  d.lambda = (std::log(gen.baseline_p) + gen.population.array().log() + d.z.array()).exp();
  d.counts_ref.resize(graph.n_areas());
  long total = 0;
  for (int i = 0; i < graph.n_areas(); ++i) {
    d.counts_ref[i] = rng.poisson(d.lambda[i]);
    total += d.counts_ref[i];
  }
  if (total == 0) throw DegenerateData("reference database has no cases");
  d.expected = internal_standardisation(d.counts_ref, gen.population);
  return d;
}

struct Perturbation {
  Eigen::VectorXd r;
  std::vector<bool> truth;
};

/// Breadth-first growth to `size` areas from `seed`, visiting neighbours in
/// index order and never entering `excluded`.
inline std::vector<int> grow_cluster(const AreaGraph& graph, int seed, int size, const std::vector<bool>& excluded = {}) {
  const int n = graph.n_areas();
  auto blocked = [&](int i) { return !excluded.empty() && excluded[i]; };
  if (seed < 0 || seed >= n || blocked(seed)) throw std::invalid_argument("grow_cluster: invalid seed area");
  std::vector<bool> seen(n, false);
  std::vector<int> out;
  std::queue<int> q;
  q.push(seed);
  seen[seed] = true;
  while (!q.empty() && static_cast<int>(out.size()) < size) {
    const int i = q.front();
    q.pop();
    out.push_back(i);
    for (int j : graph.neighbours(i))
      if (!seen[j] && !blocked(j)) {
        seen[j] = true;
        q.push(j);
      }
  }
  if (static_cast<int>(out.size()) < size)
    throw std::invalid_argument("cluster growth from area '" + graph.area_ids()[seed] + "' cannot reach " +
                                std::to_string(size) + " areas within its component");
  std::sort(out.begin(), out.end());
  return out;
}

inline int default_cluster_seed(const AreaGraph& graph) {
  const auto& deg = graph.degrees();
  return static_cast<int>(std::max_element(deg.begin(), deg.end()) - deg.begin());
}

/// Fixed S3 clusters. The second (downward) cluster of a mixed setting grows
/// from the area farthest in graph distance from the first cluster, outside it.
struct ClusterPlan {
  std::vector<int> primary;
  std::vector<int> secondary;
};

inline ClusterPlan plan_clusters(const AreaGraph& graph, const ClusterSpec& spec) {
  const int seed = spec.seed_area.empty() ? default_cluster_seed(graph) : graph.index_of(spec.seed_area);
  ClusterPlan plan;
  plan.primary = grow_cluster(graph, seed, spec.size);
  const int n = graph.n_areas();
  std::vector<bool> in_primary(n, false);
  for (int i : plan.primary) in_primary[i] = true;
  std::vector<int> dist(n, -1);
  std::queue<int> q;
  for (int i : plan.primary) {
    dist[i] = 0;
    q.push(i);
  }
  while (!q.empty()) {
    const int i = q.front();
    q.pop();
    for (int j : graph.neighbours(i))
      if (dist[j] < 0) {
        dist[j] = dist[i] + 1;
        q.push(j);
      }
  }
  // Candidates in decreasing distance; the first whose growth succeeds wins.
  std::vector<int> order;
  for (int i = 0; i < n; ++i)
    if (dist[i] > 0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return dist[a] > dist[b]; });
  for (int s : order) {
    try {
      plan.secondary = grow_cluster(graph, s, spec.size, in_primary);
      return plan;
    } catch (const std::invalid_argument&) {
    }
  }
  return plan;  // secondary empty: mixed S3 settings will be rejected
}

/// Number of areas for a proportion, rounding half to even.
inline int proportion_count(double pi, int n) {
  return static_cast<int>(std::nearbyint(pi * n));
}

/// Uniform sample of k distinct indices out of n (partial Fisher-Yates).
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < k; ++i) {
    const auto span = static_cast<std::uint64_t>(n - i);
    const int j = i + static_cast<int>(rng.engine()() % span);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline Perturbation build_perturbation(const AreaGraph& graph, const PerturbationSetting& s, const ClusterPlan* clusters,
                                       std::uint64_t seed) {
  const int n = graph.n_areas();
  Perturbation p{Eigen::VectorXd::Ones(n), std::vector<bool>(n, false)};
  auto set = [&](int i, double r) {
    p.r[i] = r;
    p.truth[i] = r != 1.0;
  };
  Rng rng(seed);
  switch (s.scenario) {
    case Scenario::S1: break;
    case Scenario::S2:
      for (int i = 0; i < n; ++i) set(i, s.r);
      break;
    case Scenario::S3: {
      if (!clusters) throw std::invalid_argument("build_perturbation: S3 needs a cluster plan");
      if (s.mixed) {
        if (clusters->secondary.empty()) throw std::invalid_argument("S3 mixed: no disjoint second cluster exists");
        for (int i : clusters->primary) set(i, s.r_up);
        for (int i : clusters->secondary) set(i, s.r_down);
      } else {
        for (int i : clusters->primary) set(i, s.r);
      }
      break;
    }
    case Scenario::S4: {
      const int k = proportion_count(s.pi, n);
      for (int i : sample_without_replacement(n, k, rng)) {
        if (s.mixed)
          set(i, rng.uniform() < 0.5 ? s.r_up : s.r_down);
        else
          set(i, s.r);
      }
      break;
    }
  }
  return p;
}

/// Candidate counts O2 ~ Poisson(lambda1 * r).
inline std::vector<int> generate_candidate(const ReferenceData& ref, const Eigen::VectorXd& r, std::uint64_t seed) {
  if (r.size() != ref.lambda.size()) throw std::invalid_argument("generate_candidate: length mismatch");
  if (!(r.array() > 0.0).all()) throw std::invalid_argument("generate_candidate: factors must be positive");
  Rng rng(seed);
  std::vector<int> out(r.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) out[i] = rng.poisson(ref.lambda[i] * r[i]);
  return out;
}

inline PairedDataset make_dataset(std::shared_ptr<const AreaGraph> graph, const ReferenceData& ref,
                                  const std::vector<int>& counts_cand, const Eigen::VectorXd& population) {
  PairedDataset d;
  d.graph = std::move(graph);
  d.counts_ref = ref.counts_ref;
  d.counts_cand = counts_cand;
  d.expected = ref.expected;
  d.population = population;
  return d;
}

/// One row of the tidy results table.
struct ResultRow {
  std::string scenario;
  std::string setting;
  std::string direction;
  double baseline_p = 0.0;
  double rho = 0.0;
  double sigma2 = 0.0;
  std::string model;
  int replicate = 0;
  int attempt = 0;
  std::string rule;
  std::string threshold;
  double epsilon = 0.0;
  double rr_median = 0.0;
  double rr_lower = 0.0;
  double rr_upper = 0.0;
  double delta_mean = 0.0;
  double cstar = 0.0;
  int n_truth = 0;
  int n_detected = 0;
  ConfusionCounts counts;
  ClassificationMetrics metrics;
  double max_rhat = 0.0;
  double min_ess = 0.0;
};

struct CellReport {
  std::string scenario;
  std::string setting;
  std::string model;
  double baseline_p = 0.0;
  double rho = 0.0;
  int successes = 0;
  int attempts = 0;
  int failures = 0;
  bool aborted = false;
  std::string message;
};

struct StudyOptions {
  std::vector<ModelFamily> models{ModelFamily::REM, ModelFamily::SEM, ModelFamily::SCM};
  std::vector<DecisionRule> rules = standard_rules();
  double epsilon = std::log(1.10);
  SamplerConfig sampler;
  int threads = 1;
  /// Hyperprior overrides per family; families not listed use ModelSpec::defaults.
  std::map<ModelFamily, ModelSpec> specs;
  /// Called after each finished cell (for progress reporting).
  std::function<void(const CellReport&)> on_cell;
};

struct StudyResults {
  std::vector<ResultRow> rows;
  std::vector<CellReport> cells;
};

/// FNV-1a, used to turn cell labels into seed coordinates.
inline std::uint64_t stable_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

struct AttemptOutcome {
  bool success = false;
  std::string failure;
  std::vector<ResultRow> rows;
};

inline AttemptOutcome run_attempt(const std::shared_ptr<const AreaGraph>& graph, const GenerationConfig& gen,
                                  const PerturbationSetting& setting, const ClusterPlan* clusters, ModelFamily family,
                                  const StudyOptions& opt, std::uint64_t cell_seed, int attempt) {
  AttemptOutcome out;
  const auto a = static_cast<std::uint64_t>(attempt);
  ReferenceData ref;
  try {
    ref = generate_reference(*graph, gen, derive_seed(cell_seed, {a, 0}));
  } catch (const DegenerateData& e) {
    out.failure = e.what();
    return out;
  }
  const Perturbation pert = build_perturbation(*graph, setting, clusters, derive_seed(cell_seed, {a, 1}));
  const auto cand = generate_candidate(ref, pert.r, derive_seed(cell_seed, {a, 2}));
  const PairedDataset data = make_dataset(graph, ref, cand, gen.population);

  SamplerConfig sc = opt.sampler;
  sc.threads = 1;
  PosteriorFit fit;
  try {
    const auto it = opt.specs.find(family);
    fit = mapval::fit(it == opt.specs.end() ? ModelSpec::defaults(family) : it->second, data, sc,
                      derive_seed(cell_seed, {a, 3, stable_hash(to_string(family))}));
  } catch (const FitError& e) {
    out.failure = e.what();
    return out;
  }
  if (!fit.converged) {
    out.failure = "not converged";
    return out;
  }
  const GlobalContrast g = global_contrast(fit);
  const LocalSurface surf = rcep(fit, psi_source_for(family), opt.epsilon);
  double max_rhat = 0.0, min_ess = std::numeric_limits<double>::infinity();
  for (const auto& d : fit.diagnostics) {
    max_rhat = std::max(max_rhat, d.rhat);
    min_ess = std::min(min_ess, d.ess);
  }
  for (const auto& rule : opt.rules) {
    const DecisionLabels lab = decide(surf, rule);
    ResultRow row;
    row.scenario = to_string(setting.scenario);
    row.setting = setting.label();
    row.direction = setting.direction();
    row.baseline_p = gen.baseline_p;
    row.rho = gen.leroux.correlation;
    row.sigma2 = gen.leroux.variance;
    row.model = to_string(family);
    row.attempt = attempt;
    row.rule = rule.family();
    row.threshold = rule.threshold_label();
    row.epsilon = opt.epsilon;
    row.rr_median = g.rr_global_median;
    row.rr_lower = g.rr_global_ci95.lower;
    row.rr_upper = g.rr_global_ci95.upper;
    row.delta_mean = g.delta_mean;
    row.cstar = surf.center_cstar;
    row.n_truth = static_cast<int>(std::count(pert.truth.begin(), pert.truth.end(), true));
    row.n_detected = lab.detections();
    row.counts = confusion(pert.truth, lab.labels);
    row.metrics = score(row.counts);
    row.max_rhat = max_rhat;
    row.min_ess = min_ess;
    out.rows.push_back(std::move(row));
  }
  out.success = true;
  return out;
}

}  // namespace detail

/// Seed of one (scenario setting, p, rho) cell; independent of models and of
/// the order in which cells are run.
inline std::uint64_t cell_seed(std::uint64_t global, const PerturbationSetting& s, const GenerationConfig& gen) {
  return derive_seed(global, {stable_hash(to_string(s.scenario)), stable_hash(s.label()),
                              stable_hash(detail::fmt(gen.baseline_p)), stable_hash(detail::fmt(gen.leroux.correlation)),
                              stable_hash(detail::fmt(gen.leroux.variance))});
}

/// Replicate loop. For every (setting, model) cell, attempts are launched in
/// deterministic batches until `target_replicates` converged fits exist; a
/// failed attempt (degenerate data or non-convergence) is replaced by a fresh
/// dataset. A cell whose failure fraction exceeds the cap is aborted.
inline StudyResults run_study(std::shared_ptr<const AreaGraph> graph, const GenerationConfig& gen,
                              const std::vector<ScenarioConfig>& scenarios, const StudyOptions& opt) {
  gen.validate(graph->n_areas());
  StudyResults res;
  for (const auto& sc : scenarios) {
    std::optional<ClusterPlan> plan;
    if (sc.scenario == Scenario::S3) plan = plan_clusters(*graph, sc.cluster);
    for (const auto& setting : sc.settings()) {
      if (setting.scenario == Scenario::S3 && setting.mixed && plan->secondary.empty())
        throw std::invalid_argument("S3 mixed: graph has no room for a disjoint second cluster");
      const std::uint64_t cseed = cell_seed(gen.seed, setting, gen);
      for (ModelFamily fam : opt.models) {
        CellReport cell;
        cell.scenario = to_string(setting.scenario);
        cell.setting = setting.label();
        cell.model = to_string(fam);
        cell.baseline_p = gen.baseline_p;
        cell.rho = gen.leroux.correlation;
        int next_attempt = 0;
        std::vector<detail::AttemptOutcome> kept;
        while (cell.successes < gen.target_replicates) {
          const int batch = gen.target_replicates - cell.successes;
          std::vector<detail::AttemptOutcome> outs(batch);
          detail::parallel_for(batch, opt.threads, [&](int k) {
            outs[k] = detail::run_attempt(graph, gen, setting, plan ? &*plan : nullptr, fam, opt, cseed,
                                          next_attempt + k);
          });
          next_attempt += batch;
          for (auto& o : outs) {
            ++cell.attempts;
            if (o.success) {
              ++cell.successes;
              kept.push_back(std::move(o));
            } else {
              ++cell.failures;
              cell.message = o.failure;
            }
          }
          const int min_attempts = std::max(gen.target_replicates, 10);
          if (cell.attempts >= min_attempts &&
              static_cast<double>(cell.failures) / cell.attempts > gen.failure_cap) {
            cell.aborted = true;
            cell.message = "failure rate " + std::to_string(cell.failures) + "/" + std::to_string(cell.attempts) +
                           " exceeds the cap; last failure: " + cell.message;
            break;
          }
        }
        int rep = 0;
        if (cell.aborted) kept.clear();
        for (auto& o : kept) {
          for (auto& row : o.rows) {
            row.replicate = rep;
            res.rows.push_back(std::move(row));
          }
          ++rep;
        }
        if (opt.on_cell) opt.on_cell(cell);
        res.cells.push_back(std::move(cell));
      }
    }
  }
  return res;
}

}  // namespace mapval
