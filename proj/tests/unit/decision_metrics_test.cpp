#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "mapval/decision.hpp"
#include "mapval/metrics.hpp"

using namespace mapval;

namespace {

LocalSurface surface_with(std::vector<double> nrep, std::vector<double> rcep) {
  LocalSurface s;
  s.nrep = std::move(nrep);
  s.rcep = std::move(rcep);
  return s;
}

Eigen::MatrixXd random_draws(int rows, int cols, std::uint64_t seed, double spread = 0.3) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, spread);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j) {
    const double shift = z(gen) * 2.0;
    for (int i = 0; i < rows; ++i) m(i, j) = shift + z(gen);
  }
  return m;
}

// Minimal fit with the named fields, filled with the supplied per-field draws.
PosteriorFit fake_fit(const std::vector<std::string>& fields, const std::vector<Eigen::MatrixXd>& blocks) {
  PosteriorFit f;
  const int n = static_cast<int>(blocks.front().cols());
  const Eigen::Index rows = blocks.front().rows();
  for (int i = 0; i < n; ++i) f.area_ids.push_back("a" + std::to_string(i));
  f.field_names = fields;
  f.names = {"alpha1", "alpha2"};
  for (const auto& name : fields)
    for (int i = 0; i < n; ++i) f.names.push_back(PosteriorFit::element_name(name, i));
  f.n_chains = 2;
  f.n_kept = static_cast<int>(rows / 2);
  f.draws = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(f.names.size()));
  for (std::size_t k = 0; k < fields.size(); ++k) f.draws.middleCols(2 + k * n, n) = blocks[k];
  f.reindex();
  return f;
}

}  // namespace

TEST(Nrep, BoundaryConventions) {
  const auto s = surface_with({0.5, 0.2, 0.8, 0.19, 0.81, 0.0, 1.0}, std::vector<double>(7, 0.0));
  const auto d = nrep_decide(s, 0.2, 0.8);
  EXPECT_EQ(d.labels, (std::vector<bool>{false, true, false, true, true, true, true}));
  for (const auto& r : standard_rules())
    if (r.kind == DecisionRule::Kind::NREP) {
      EXPECT_FALSE(decide(surface_with({0.5}, {0.0}), r).labels[0]);
    }
  EXPECT_THROW(nrep_decide(s, 0.8, 0.2), std::invalid_argument);
  EXPECT_THROW(nrep_decide(s, 0.5, 0.5), std::invalid_argument);
}

TEST(Nrep, RecountOfStoredDraws) {
  const Eigen::MatrixXd psi = random_draws(1000, 12, 1);
  const auto p = nrep_from(psi);
  for (int j = 0; j < 12; ++j) {
    int pos = 0;
    for (int i = 0; i < 1000; ++i)
      if (psi(i, j) > 0.0) ++pos;
    EXPECT_EQ(p[j], pos / 1000.0);
  }
  EXPECT_EQ(nrep_from(Eigen::MatrixXd::Constant(10, 1, 0.1))[0], 1.0);
  Eigen::MatrixXd sym(2000, 1);
  for (int i = 0; i < 1000; ++i) sym(2 * i, 0) = -(sym(2 * i + 1, 0) = 0.01 * (i + 1));
  EXPECT_EQ(nrep_from(sym)[0], 0.5);
}

TEST(Rcep, StrictThreshold) {
  const auto s = surface_with(std::vector<double>(3, 0.5), {0.9, 0.95, 0.0});
  EXPECT_EQ(rcep_decide(s, 0.9).labels, (std::vector<bool>{false, true, false}));
  EXPECT_EQ(rcep_decide(surface_with({0.5, 0.5}, {0.0, 0.0}), 0.8).detections(), 0);
  EXPECT_THROW(rcep_decide(s, 1.0), std::invalid_argument);
}

TEST(Rcep, PointMassAtCentreAndHugeBand) {
  const auto s = local_surface_from(Eigen::MatrixXd::Constant(50, 4, 0.3), std::log(1.1));
  EXPECT_EQ(s.center_cstar, 0.3);
  for (double r : s.rcep) EXPECT_EQ(r, 0.0);
  const auto wide = local_surface_from(random_draws(500, 10, 2), std::log(100.0));
  for (double r : wide.rcep) EXPECT_EQ(r, 0.0);
  EXPECT_THROW(local_surface_from(random_draws(5, 2, 3), 0.0), std::invalid_argument);
}

TEST(Rcep, CentreIsMedianOfAreaMedians) {
  const Eigen::MatrixXd psi = random_draws(401, 6, 4);
  const auto s = local_surface_from(psi, std::log(1.1));
  std::vector<double> meds;
  for (int j = 0; j < 6; ++j) {
    std::vector<double> c(psi.col(j).data(), psi.col(j).data() + 401);
    std::sort(c.begin(), c.end());
    meds.push_back(c[200]);
  }
  std::sort(meds.begin(), meds.end());
  EXPECT_DOUBLE_EQ(s.center_cstar, 0.5 * (meds[2] + meds[3]));
  EXPECT_DOUBLE_EQ(cstar_from(psi), s.center_cstar);
}

TEST(Rcep, MonotoneInEpsilon) {
  const Eigen::MatrixXd psi = random_draws(800, 30, 5);
  const auto a = local_surface_from(psi, std::log(1.05));
  const auto b = local_surface_from(psi, std::log(1.10));
  const auto c = local_surface_from(psi, std::log(1.20));
  for (int j = 0; j < 30; ++j) {
    EXPECT_GE(a.rcep[j], b.rcep[j]);
    EXPECT_GE(b.rcep[j], c.rcep[j]);
  }
}

TEST(Rcep, ConstantShiftMovesNrepButNotRcep) {
  const Eigen::MatrixXd psi = random_draws(600, 20, 6, 0.2);
  const Eigen::MatrixXd shifted = psi.array() + 0.75;
  const auto a = local_surface_from(psi, std::log(1.1));
  const auto b = local_surface_from(shifted, std::log(1.1));
  EXPECT_NEAR(b.center_cstar, a.center_cstar + 0.75, 1e-12);
  int nrep_changed = 0;
  for (int j = 0; j < 20; ++j) {
    EXPECT_EQ(a.rcep[j], b.rcep[j]) << j;
    if (a.nrep[j] != b.nrep[j]) ++nrep_changed;
  }
  EXPECT_GT(nrep_changed, 0);
}

TEST(Rcep, SurfacesAreProbabilitiesAndOrderFree) {
  Eigen::MatrixXd psi = random_draws(300, 8, 7);
  const auto a = local_surface_from(psi, std::log(1.1));
  std::vector<int> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(8));
  Eigen::MatrixXd p2(300, 8);
  for (int i = 0; i < 300; ++i) p2.row(i) = psi.row(perm[i]);
  const auto b = local_surface_from(p2, std::log(1.1));
  EXPECT_EQ(a.nrep, b.nrep);
  EXPECT_EQ(a.rcep, b.rcep);
  for (int j = 0; j < 8; ++j) {
    EXPECT_TRUE(a.nrep[j] >= 0.0 && a.nrep[j] <= 1.0);
    EXPECT_TRUE(a.rcep[j] >= 0.0 && a.rcep[j] <= 1.0);
  }
}

TEST(GlobalContrast, ExponentiatedBoundsAndOrdering) {
  const Eigen::VectorXd d = random_draws(4001, 1, 9).col(0);
  const auto g = global_contrast_from(d);
  EXPECT_DOUBLE_EQ(g.rr_global_median, std::exp(g.delta_median));
  EXPECT_DOUBLE_EQ(g.rr_global_ci95.lower, std::exp(g.delta_ci95.lower));
  EXPECT_DOUBLE_EQ(g.rr_global_ci95.upper, std::exp(g.delta_ci95.upper));
  EXPECT_LE(g.rr_global_ci95.lower, g.rr_global_median);
  EXPECT_LE(g.rr_global_median, g.rr_global_ci95.upper);
  // Quantiles of exp(delta) agree with exp of delta quantiles.
  const Eigen::VectorXd rr = d.array().exp();
  EXPECT_NEAR(quantile(rr, 0.025), g.rr_global_ci95.lower, 1e-12);
  EXPECT_NEAR(median(rr), g.rr_global_median, 1e-12);
}

TEST(PsiSource, ScmUsesD2AndOthersUseE) {
  EXPECT_EQ(psi_source_for(ModelFamily::REM), PsiSource::E);
  EXPECT_EQ(psi_source_for(ModelFamily::SEM), PsiSource::E);
  EXPECT_EQ(psi_source_for(ModelFamily::SCM), PsiSource::D2);
  const Eigen::MatrixXd h = random_draws(20, 3, 10), d1 = random_draws(20, 3, 11), d2 = random_draws(20, 3, 12);
  const PosteriorFit f = fake_fit({"h", "D1", "D2"}, {h, d1, d2});
  EXPECT_EQ(psi_draws(f, PsiSource::D2), d2);
  EXPECT_EQ(scm_contrast_draws(f), d2 - d1);
  EXPECT_THROW(psi_draws(f, PsiSource::E), std::invalid_argument);
  EXPECT_EQ(rcep(f, PsiSource::D2).rcep, local_surface_from(d2, default_epsilon()).rcep);
}

TEST(Rules, ParseAndLabels) {
  EXPECT_EQ(parse_rules("all"), standard_rules());
  EXPECT_EQ(parse_rules("nrep").size(), 3u);
  const auto r = parse_rules(" rcep:0.9 , nrep:0.05:0.95");
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], DecisionRule::rcep(0.9));
  EXPECT_EQ(r[1], DecisionRule::nrep(0.05, 0.95));
  EXPECT_EQ(r[1].threshold_label(), "0.05-0.95");
  EXPECT_EQ(r[0].name(), "RCEP(0.9)");
  EXPECT_THROW(parse_rules("rcep:x"), std::invalid_argument);
  EXPECT_THROW(parse_rules("median"), std::invalid_argument);
}

TEST(Metrics, HandArithmeticCase) {
  const auto m = score({3, 1, 1, 5});
  EXPECT_DOUBLE_EQ(*m.sensitivity, 0.75);
  EXPECT_NEAR(*m.specificity, 5.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(*m.fdr, 0.25);
  EXPECT_NEAR(*m.mcc, 14.0 / 24.0, 1e-15);
}

TEST(Metrics, PerfectClassification) {
  const auto c = confusion({true, false}, {true, false});
  EXPECT_EQ(c, (ConfusionCounts{1, 0, 0, 1}));
  const auto m = score(c);
  EXPECT_EQ(*m.mcc, 1.0);
  EXPECT_EQ(*m.sensitivity, 1.0);
  EXPECT_EQ(*m.specificity, 1.0);
  EXPECT_EQ(*m.fdr, 0.0);
}

TEST(Metrics, NotApplicableIsNeverZero) {
  // No truly discrepant areas: sensitivity undefined.
  auto m = score({0, 2, 0, 8});
  EXPECT_FALSE(m.sensitivity.has_value());
  EXPECT_FALSE(m.mcc.has_value());
  EXPECT_DOUBLE_EQ(*m.specificity, 0.8);
  // Nothing detected: FDR undefined.
  m = score({0, 0, 4, 6});
  EXPECT_FALSE(m.fdr.has_value());
  EXPECT_FALSE(m.mcc.has_value());
  EXPECT_EQ(*m.sensitivity, 0.0);
  // All areas discrepant: specificity undefined.
  m = score({5, 0, 5, 0});
  EXPECT_FALSE(m.specificity.has_value());
  // One zero factor under the root is enough.
  m = score({5, 0, 0, 0});
  EXPECT_FALSE(m.mcc.has_value());
  m = score({});
  EXPECT_FALSE(m.sensitivity || m.specificity || m.fdr || m.mcc);
}

TEST(Metrics, AllFalseTruthAllTruePrediction) {
  const auto c = confusion(std::vector<bool>(7, false), std::vector<bool>(7, true));
  EXPECT_EQ(c.fp, 7);
  EXPECT_EQ(c.total(), 7);
  EXPECT_THROW(confusion({true}, {true, false}), std::invalid_argument);
}

TEST(Metrics, RandomCasesMatchRecountAndProperties) {
  std::mt19937_64 gen(13);
  std::bernoulli_distribution coin(0.3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<bool> truth(100), pred(100);
    for (int i = 0; i < 100; ++i) {
      truth[i] = coin(gen);
      pred[i] = coin(gen);
    }
    const auto c = confusion(truth, pred);
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (int i = 0; i < 100; ++i) {
      if (truth[i] && pred[i]) ++tp;
      if (!truth[i] && pred[i]) ++fp;
      if (truth[i] && !pred[i]) ++fn;
      if (!truth[i] && !pred[i]) ++tn;
    }
    EXPECT_EQ(c, (ConfusionCounts{tp, fp, fn, tn}));
    EXPECT_EQ(c.total(), 100);

    const auto m = score(c);
    for (const auto& v : {m.sensitivity, m.specificity, m.fdr})
      if (v) {
        EXPECT_TRUE(*v >= 0.0 && *v <= 1.0);
      }
    if (m.mcc) {
      EXPECT_TRUE(*m.mcc >= -1.0 && *m.mcc <= 1.0);
      // Swapping the roles of positives and negatives.
      EXPECT_NEAR(*score({tn, fn, fp, tp}).mcc, *m.mcc, 1e-12);
      // Negated predictions flip the sign.
      std::vector<bool> neg(100);
      for (int i = 0; i < 100; ++i) neg[i] = !pred[i];
      EXPECT_NEAR(*score(confusion(truth, neg)).mcc, -*m.mcc, 1e-12);
    }
    // Area order does not matter.
    std::vector<int> perm(100);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<bool> t2(100), p2(100);
    for (int i = 0; i < 100; ++i) {
      t2[i] = truth[perm[i]];
      p2[i] = pred[perm[i]];
    }
    EXPECT_EQ(confusion(t2, p2), c);
  }
}
