#pragma once

// Empirical posterior summaries over pooled draws.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mapval/sampler.hpp"

namespace mapval {

/// Linear interpolation between order statistics at h = (n - 1) p (R type 7).
/// `sorted` must be in ascending order.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile: no draws");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile: probability outside [0,1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline std::vector<double> sorted_copy(const Eigen::VectorXd& v) {
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  return s;
}

inline double quantile(const Eigen::VectorXd& v, double p) { return quantile_sorted(sorted_copy(v), p); }

/// Median with the midpoint convention for even lengths.
inline double median(const Eigen::VectorXd& v) { return quantile(v, 0.5); }

struct MarginalSummary {
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

inline MarginalSummary summarise(const Eigen::VectorXd& draws) {
  if (draws.size() == 0) throw std::invalid_argument("summarise: no draws");
  const auto s = sorted_copy(draws);
  MarginalSummary out;
  out.mean = draws.mean();
  out.sd = draws.size() > 1 ? std::sqrt((draws.array() - out.mean).square().sum() / (draws.size() - 1.0)) : 0.0;
  out.q025 = quantile_sorted(s, 0.025);
  out.q50 = quantile_sorted(s, 0.5);
  out.q975 = quantile_sorted(s, 0.975);
  out.median = out.q50;
  return out;
}

/// Summary of one named parameter; "delta" is the intercept contrast alpha2 - alpha1.
inline MarginalSummary marginal_summary(const PosteriorFit& fit, const std::string& parameter) {
  if (parameter == "delta" && !fit.has("delta")) return summarise(fit.column("alpha2") - fit.column("alpha1"));
  return summarise(fit.column(parameter));
}

}  // namespace mapval
