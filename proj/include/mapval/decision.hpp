#pragma once

// Global contrast and the two local discrepancy functionals (null-referenced
// and robustly centred exceedance probabilities) with their decision rules.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mapval/sampler.hpp"
#include "mapval/summary.hpp"

namespace mapval {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct GlobalContrast {
  double delta_mean = 0.0;
  double delta_median = 0.0;
  Interval delta_ci95;
  double rr_global_median = 1.0;
  Interval rr_global_ci95;
};

inline GlobalContrast global_contrast_from(const Eigen::VectorXd& delta) {
  const MarginalSummary s = summarise(delta);
  GlobalContrast g;
  g.delta_mean = s.mean;
  g.delta_median = s.median;
  g.delta_ci95 = {s.q025, s.q975};
  g.rr_global_median = std::exp(s.median);
  g.rr_global_ci95 = {std::exp(s.q025), std::exp(s.q975)};
  return g;
}

inline Eigen::VectorXd delta_draws(const PosteriorFit& fit) { return fit.column("alpha2") - fit.column("alpha1"); }

inline GlobalContrast global_contrast(const PosteriorFit& fit) { return global_contrast_from(delta_draws(fit)); }

enum class PsiSource { E, D2 };

inline std::string to_string(PsiSource s) { return s == PsiSource::E ? "e" : "D2"; }

inline PsiSource psi_source_for(ModelFamily f) { return f == ModelFamily::SCM ? PsiSource::D2 : PsiSource::E; }

/// Draws x areas matrix of the discrepancy field.
inline Eigen::MatrixXd psi_draws(const PosteriorFit& fit, PsiSource source) {
  const std::string name = to_string(source);
  if (!fit.has_field(name)) throw std::invalid_argument("psi_draws: fit has no field '" + name + "'");
  return fit.field(name);
}

/// SCM diagnostic surface D2 - D1; never used as a decision input.
inline Eigen::MatrixXd scm_contrast_draws(const PosteriorFit& fit) {
  if (!fit.has_field("D1") || !fit.has_field("D2")) throw std::invalid_argument("scm_contrast_draws: not an SCM fit");
  return fit.field("D2") - fit.field("D1");
}

inline std::vector<double> nrep_from(const Eigen::MatrixXd& psi) {
  std::vector<double> out(psi.cols());
  for (Eigen::Index i = 0; i < psi.cols(); ++i)
    out[i] = static_cast<double>((psi.col(i).array() > 0.0).count()) / static_cast<double>(psi.rows());
  return out;
}

inline std::vector<double> nrep(const PosteriorFit& fit, PsiSource source) { return nrep_from(psi_draws(fit, source)); }

struct LocalSurface {
  PsiSource psi_source = PsiSource::E;
  std::vector<double> nrep;
  std::vector<double> rcep;
  std::vector<double> psi_median;
  double center_cstar = 0.0;
  double epsilon = std::log(1.10);
  /// Range of c* recomputed chain by chain (stability diagnostic).
  std::optional<Interval> cstar_chain_range;
};

inline double default_epsilon() { return std::log(1.10); }

/// c* is the median of per-area posterior medians (midpoint convention).
inline double cstar_from(const Eigen::MatrixXd& psi) {
  Eigen::VectorXd m(psi.cols());
  for (Eigen::Index i = 0; i < psi.cols(); ++i) m[i] = median(psi.col(i));
  return median(m);
}

inline LocalSurface local_surface_from(const Eigen::MatrixXd& psi, double epsilon, PsiSource source = PsiSource::E) {
  if (!(epsilon > 0.0)) throw std::invalid_argument("rcep: epsilon must be positive");
  if (psi.rows() == 0) throw std::invalid_argument("rcep: no draws");
  LocalSurface s;
  s.psi_source = source;
  s.epsilon = epsilon;
  s.psi_median.resize(psi.cols());
  for (Eigen::Index i = 0; i < psi.cols(); ++i) s.psi_median[i] = median(psi.col(i));
  s.center_cstar = median(Eigen::Map<const Eigen::VectorXd>(s.psi_median.data(), psi.cols()));
  s.nrep = nrep_from(psi);
  s.rcep.resize(psi.cols());
  for (Eigen::Index i = 0; i < psi.cols(); ++i)
    s.rcep[i] = static_cast<double>(((psi.col(i).array() - s.center_cstar).abs() > epsilon).count()) /
                static_cast<double>(psi.rows());
  return s;
}

inline LocalSurface rcep(const PosteriorFit& fit, PsiSource source, double epsilon = default_epsilon()) {
  const Eigen::MatrixXd psi = psi_draws(fit, source);
  LocalSurface s = local_surface_from(psi, epsilon, source);
  if (fit.n_chains > 1) {
    Interval r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (int c = 0; c < fit.n_chains; ++c) {
      const double cc = cstar_from(psi.middleRows(static_cast<Eigen::Index>(c) * fit.n_kept, fit.n_kept));
      r.lower = std::min(r.lower, cc);
      r.upper = std::max(r.upper, cc);
    }
    s.cstar_chain_range = r;
  }
  return s;
}

struct DecisionRule {
  enum class Kind { NREP, RCEP };
  Kind kind = Kind::RCEP;
  double lower = 0.0;
  double upper = 0.0;
  double threshold = 0.9;

  static DecisionRule nrep(double l, double u) { return {Kind::NREP, l, u, 0.0}; }
  static DecisionRule rcep(double t) { return {Kind::RCEP, 0.0, 0.0, t}; }

  std::string family() const { return kind == Kind::NREP ? "NREP" : "RCEP"; }
  /// Threshold label used in tables: "0.2-0.8" for NREP, "0.9" for RCEP.
  std::string threshold_label() const;
  std::string name() const { return family() + "(" + threshold_label() + ")"; }
  bool operator==(const DecisionRule&) const = default;
};

namespace detail {
inline std::string short_number(double v) {
  std::string s = std::to_string(v);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}
}  // namespace detail

inline std::string DecisionRule::threshold_label() const {
  if (kind == Kind::NREP) return detail::short_number(lower) + "-" + detail::short_number(upper);
  return detail::short_number(threshold);
}

/// The rule grid: NREP pairs (0.2,0.8), (0.05,0.95), (0.025,0.975); RCEP 0.8, 0.9, 0.95.
inline std::vector<DecisionRule> standard_rules() {
  return {DecisionRule::nrep(0.2, 0.8),   DecisionRule::nrep(0.05, 0.95), DecisionRule::nrep(0.025, 0.975),
          DecisionRule::rcep(0.8),        DecisionRule::rcep(0.9),        DecisionRule::rcep(0.95)};
}

/// Parse "nrep:0.2:0.8", "rcep:0.9", or the shorthands "nrep", "rcep", "all".
inline std::vector<DecisionRule> parse_rules(const std::string& text) {
  std::vector<DecisionRule> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    std::string tok = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    start = comma == std::string::npos ? text.size() + 1 : comma + 1;
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (tok.empty()) continue;
    std::string lower = tok;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto all = standard_rules();
    if (lower == "all") {
      out.insert(out.end(), all.begin(), all.end());
      continue;
    }
    if (lower == "nrep" || lower == "rcep") {
      for (const auto& r : all)
        if ((r.kind == DecisionRule::Kind::NREP) == (lower == "nrep")) out.push_back(r);
      continue;
    }
    std::vector<std::string> parts;
    std::size_t p = 0;
    while (true) {
      const std::size_t c = lower.find(':', p);
      parts.push_back(lower.substr(p, c == std::string::npos ? std::string::npos : c - p));
      if (c == std::string::npos) break;
      p = c + 1;
    }
    try {
      if (parts[0] == "nrep" && parts.size() == 3) {
        out.push_back(DecisionRule::nrep(std::stod(parts[1]), std::stod(parts[2])));
        continue;
      }
      if (parts[0] == "rcep" && parts.size() == 2) {
        out.push_back(DecisionRule::rcep(std::stod(parts[1])));
        continue;
      }
    } catch (const std::logic_error&) {
    }
    throw std::invalid_argument("unrecognised rule '" + tok + "' (expected nrep:L:U, rcep:T, nrep, rcep or all)");
  }
  return out;
}

struct DecisionLabels {
  DecisionRule rule;
  std::vector<bool> labels;

  int detections() const { return static_cast<int>(std::count(labels.begin(), labels.end(), true)); }
};

/// Discrepant iff nrep <= l or nrep > u.
inline DecisionLabels nrep_decide(const LocalSurface& s, double l, double u) {
  if (!(l > 0.0 && l < u && u < 1.0)) throw std::invalid_argument("nrep_decide: need 0 < lower < upper < 1");
  DecisionLabels d{DecisionRule::nrep(l, u), {}};
  d.labels.reserve(s.nrep.size());
  for (double p : s.nrep) d.labels.push_back(p <= l || p > u);
  return d;
}

/// Discrepant iff rcep > tau.
inline DecisionLabels rcep_decide(const LocalSurface& s, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("rcep_decide: threshold must lie in (0,1)");
  DecisionLabels d{DecisionRule::rcep(tau), {}};
  d.labels.reserve(s.rcep.size());
  for (double p : s.rcep) d.labels.push_back(p > tau);
  return d;
}

inline DecisionLabels decide(const LocalSurface& s, const DecisionRule& r) {
  return r.kind == DecisionRule::Kind::NREP ? nrep_decide(s, r.lower, r.upper) : rcep_decide(s, r.threshold);
}

}  // namespace mapval
