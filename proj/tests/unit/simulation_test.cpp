#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include <gtest/gtest.h>

#include "mapval/simulation.hpp"
#include "support.hpp"

using namespace mapval;
using testing_support::nc_graph;

namespace {

GenerationConfig nc_generation(int replicates = 2) {
  GenerationConfig g;
  g.population = Eigen::VectorXd::Constant(100, 36400.0);
  g.target_replicates = replicates;
  g.seed = 42;
  return g;
}

bool connected_within(const AreaGraph& g, const std::vector<int>& set) {
  std::set<int> in(set.begin(), set.end()), seen{set.front()};
  std::queue<int> q;
  q.push(set.front());
  while (!q.empty()) {
    const int i = q.front();
    q.pop();
    for (int j : g.neighbours(i))
      if (in.count(j) && seen.insert(j).second) q.push(j);
  }
  return seen.size() == set.size();
}

StudyOptions small_study() {
  StudyOptions o;
  o.models = {ModelFamily::REM};
  o.sampler = testing_support::quick_sampler(300, 300);
  o.sampler.ess_threshold = 50.0;
  o.sampler.rhat_threshold = 1.1;
  return o;
}

}  // namespace

TEST(Perturbation, NullScenarioTouchesNothing) {
  const auto p = build_perturbation(*nc_graph(), {}, nullptr, 1);
  EXPECT_TRUE((p.r.array() == 1.0).all());
  EXPECT_EQ(std::count(p.truth.begin(), p.truth.end(), true), 0);
}

TEST(Perturbation, UniformShiftTouchesEveryArea) {
  PerturbationSetting s{Scenario::S2, false, 1.5, 1.5, 1.5, 0.0};
  const auto p = build_perturbation(*nc_graph(), s, nullptr, 1);
  EXPECT_TRUE((p.r.array() == 1.5).all());
  EXPECT_EQ(std::count(p.truth.begin(), p.truth.end(), true), 100);
  EXPECT_EQ(s.direction(), "upward");
  EXPECT_EQ(s.label(), "r=1.5");
}

TEST(Perturbation, ClusterIsFixedConnectedAndSized) {
  const auto g = nc_graph();
  const ClusterPlan plan = plan_clusters(*g, {});
  ASSERT_EQ(plan.primary.size(), 15u);
  EXPECT_TRUE(connected_within(*g, plan.primary));
  const int seed = default_cluster_seed(*g);
  EXPECT_EQ(g->degrees()[seed], *std::max_element(g->degrees().begin(), g->degrees().end()));
  EXPECT_NE(std::find(plan.primary.begin(), plan.primary.end(), seed), plan.primary.end());
  // Same plan every time, whatever the replicate seed.
  PerturbationSetting s{Scenario::S3, false, 2.5, 2.5, 2.5, 0.0};
  const auto a = build_perturbation(*g, s, &plan, 1), b = build_perturbation(*g, s, &plan, 2);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_EQ(std::count(a.truth.begin(), a.truth.end(), true), 15);
  EXPECT_EQ(plan_clusters(*g, {}).primary, plan.primary);
}

TEST(Perturbation, MixedClustersAreDisjoint) {
  const auto g = nc_graph();
  const ClusterPlan plan = plan_clusters(*g, {});
  ASSERT_EQ(plan.secondary.size(), 15u);
  EXPECT_TRUE(connected_within(*g, plan.secondary));
  for (int i : plan.secondary) EXPECT_EQ(std::count(plan.primary.begin(), plan.primary.end(), i), 0);
  PerturbationSetting s{Scenario::S3, true, 1.0, 1.5, 0.75, 0.0};
  const auto p = build_perturbation(*g, s, &plan, 3);
  EXPECT_EQ((p.r.array() == 1.5).count(), 15);
  EXPECT_EQ((p.r.array() == 0.75).count(), 15);
  EXPECT_EQ(s.direction(), "mixed");
}

TEST(Perturbation, ClusterGrowthFailsOnSmallComponent) {
  const AreaGraph g = build_adjacency_from_edges(5, {{0, 1}, {2, 3}, {3, 4}});
  EXPECT_THROW(grow_cluster(g, 0, 3), std::invalid_argument);
  EXPECT_EQ(grow_cluster(g, 2, 3), (std::vector<int>{2, 3, 4}));
}

TEST(Perturbation, RandomSubsetHasExactSize) {
  const auto g = nc_graph();
  for (double pi : {0.25, 0.5}) {
    PerturbationSetting s{Scenario::S4, false, 2.0, 2.0, 2.0, pi};
    std::set<std::vector<bool>> distinct;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto p = build_perturbation(*g, s, nullptr, seed);
      EXPECT_EQ(std::count(p.truth.begin(), p.truth.end(), true), static_cast<long>(std::lround(pi * 100)));
      distinct.insert(p.truth);
    }
    EXPECT_GT(distinct.size(), 15u);
  }
  PerturbationSetting mixed{Scenario::S4, true, 1.0, 1.75, 0.5, 0.25};
  const auto p = build_perturbation(*g, mixed, nullptr, 9);
  EXPECT_EQ((p.r.array() == 1.75).count() + (p.r.array() == 0.5).count(), 25);
}

TEST(Perturbation, TruthMatchesFactors) {
  const auto g = nc_graph();
  const ClusterPlan plan = plan_clusters(*g, {});
  const std::vector<PerturbationSetting> settings{
      {}, {Scenario::S2, false, 0.75, 0.75, 0.75, 0.0}, {Scenario::S3, false, 2.0, 2.0, 2.0, 0.0},
      {Scenario::S3, true, 1.0, 1.75, 0.5, 0.0}, {Scenario::S4, true, 1.0, 1.5, 0.75, 0.5}};
  for (const auto& s : settings)
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto p = build_perturbation(*g, s, &plan, seed);
      for (int i = 0; i < 100; ++i) EXPECT_EQ(p.truth[i], p.r[i] != 1.0);
    }
}

TEST(Perturbation, RoundingIsHalfToEven) {
  EXPECT_EQ(proportion_count(0.25, 100), 25);
  EXPECT_EQ(proportion_count(0.5, 5), 2);
  EXPECT_EQ(proportion_count(0.5, 7), 4);
  EXPECT_EQ(proportion_count(0.25, 10), 2);
}

TEST(Perturbation, SampleWithoutReplacementIsDistinct) {
  Rng rng(4);
  const auto s = sample_without_replacement(50, 20, rng);
  EXPECT_EQ(std::set<int>(s.begin(), s.end()).size(), 20u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(sample_without_replacement(5, 5, rng), (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(Generation, ExpectedSumsToReferenceCountsAndCountsScale) {
  const auto g = nc_graph();
  const auto gen = nc_generation();
  const auto ref = generate_reference(*g, gen, 5);
  double total = 0.0;
  for (int c : ref.counts_ref) total += c;
  EXPECT_NEAR(ref.expected.sum(), total, 1e-8 * total);
  // About 364 cases per area at p = 0.01 with mean population 36400.
  EXPECT_NEAR(total / 100.0, 364.0 * std::exp(0.1), 80.0);
}

TEST(Generation, CandidateMeanTracksFactor) {
  const auto g = nc_graph();
  const auto ref = generate_reference(*g, nc_generation(), 6);
  for (double r : {0.25, 1.5, 2.5}) {
    const Eigen::VectorXd rv = Eigen::VectorXd::Constant(100, r);
    double ratio = 0.0;
    const int reps = 50;
    for (int k = 0; k < reps; ++k) {
      const auto cand = generate_candidate(ref, rv, 100 + k);
      double s = 0.0;
      for (int c : cand) s += c;
      ratio += s / ref.lambda.sum() / reps;
    }
    // Poisson total: relative sd sqrt(1 / (r * sum lambda)) per replicate.
    EXPECT_NEAR(ratio, r, 4.0 * r / std::sqrt(r * ref.lambda.sum() * reps));
  }
  EXPECT_THROW(generate_candidate(ref, Eigen::VectorXd::Zero(100), 1), std::invalid_argument);
}

TEST(Generation, SameSeedSameData) {
  const auto g = nc_graph();
  const auto a = generate_reference(*g, nc_generation(), 7), b = generate_reference(*g, nc_generation(), 7);
  EXPECT_EQ(a.counts_ref, b.counts_ref);
  EXPECT_EQ(a.z, b.z);
}

TEST(ScenarioGrid, ValidationRules) {
  ScenarioConfig s1{Scenario::S1, {1.5}, {}, {}, {}, false};
  EXPECT_THROW(s1.validate(), std::invalid_argument);
  ScenarioConfig off{Scenario::S2, {1.3}, {}, {}, {}, false};
  EXPECT_THROW(off.validate(), std::invalid_argument);
  off.allow_off_grid = true;
  EXPECT_NO_THROW(off.validate());
  ScenarioConfig s2mixed{Scenario::S2, {}, {{1.5, 0.75}}, {}, {}, false};
  EXPECT_THROW(s2mixed.validate(), std::invalid_argument);
  ScenarioConfig s4{Scenario::S4, {2.0}, {{1.5, 0.75}}, {0.25, 0.5}, {}, false};
  EXPECT_EQ(s4.settings().size(), 4u);
  ScenarioConfig s4nopi{Scenario::S4, {2.0}, {}, {}, {}, false};
  EXPECT_THROW(s4nopi.validate(), std::invalid_argument);
  auto gen = nc_generation();
  gen.baseline_p = 0.02;
  EXPECT_THROW(gen.validate(100), std::invalid_argument);
  gen.allow_off_grid = true;
  EXPECT_NO_THROW(gen.validate(100));
}

TEST(Study, EveryCellReachesTargetAndIsReproducible) {
  const auto g = nc_graph();
  const auto gen = nc_generation(3);
  const std::vector<ScenarioConfig> sc{{Scenario::S1, {}, {}, {}, {}, false},
                                       {Scenario::S4, {2.0}, {}, {0.25}, {}, false}};
  StudyOptions opt = small_study();
  opt.rules = {DecisionRule::rcep(0.9), DecisionRule::nrep(0.2, 0.8)};
  const auto res = run_study(g, gen, sc, opt);
  ASSERT_EQ(res.cells.size(), 2u);
  for (const auto& c : res.cells) {
    EXPECT_FALSE(c.aborted) << c.message;
    EXPECT_EQ(c.successes, 3);
    EXPECT_EQ(c.attempts, c.successes + c.failures);
  }
  EXPECT_EQ(res.rows.size(), 2u * 3u * 2u);
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.counts.total(), 100);
    EXPECT_EQ(r.n_truth, r.scenario == "S4" ? 25 : 0);
    if (r.scenario == "S1") {
      EXPECT_FALSE(r.metrics.sensitivity.has_value());
    }
  }

  opt.threads = 3;
  const auto again = run_study(g, gen, sc, opt);
  ASSERT_EQ(again.rows.size(), res.rows.size());
  for (std::size_t k = 0; k < res.rows.size(); ++k) {
    EXPECT_EQ(again.rows[k].rr_median, res.rows[k].rr_median);
    EXPECT_EQ(again.rows[k].counts, res.rows[k].counts);
  }
}

TEST(Study, RowsDoNotDependOnOtherModelsInTheRun) {
  const auto g = nc_graph();
  const auto gen = nc_generation(1);
  const std::vector<ScenarioConfig> sc{{Scenario::S2, {1.5}, {}, {}, {}, false}};
  StudyOptions one = small_study();
  one.rules = {DecisionRule::rcep(0.9)};
  StudyOptions two = one;
  two.models = {ModelFamily::SEM, ModelFamily::REM};
  const auto a = run_study(g, gen, sc, one), b = run_study(g, gen, sc, two);
  const auto rem = std::find_if(b.rows.begin(), b.rows.end(), [](const ResultRow& r) { return r.model == "rem"; });
  ASSERT_NE(rem, b.rows.end());
  EXPECT_EQ(rem->rr_median, a.rows.front().rr_median);
  EXPECT_EQ(rem->attempt, a.rows.front().attempt);
}

TEST(Study, HopelessCellIsAbortedNotLooping) {
  const auto g = nc_graph();
  const auto gen = nc_generation(1);
  StudyOptions opt = small_study();
  opt.sampler = testing_support::quick_sampler(20, 20);
  opt.sampler.ess_threshold = 1e9;
  const auto res = run_study(g, gen, {{Scenario::S1, {}, {}, {}, {}, false}}, opt);
  ASSERT_EQ(res.cells.size(), 1u);
  EXPECT_TRUE(res.cells[0].aborted);
  EXPECT_EQ(res.cells[0].attempts, 10);
  EXPECT_TRUE(res.rows.empty());
}
