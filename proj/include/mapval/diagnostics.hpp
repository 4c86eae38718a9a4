#pragma once

// Multi-chain convergence diagnostics: split potential scale reduction and
// effective sample size with Geyer's initial monotone sequence.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace mapval {

/// Columns are chains, rows are iterations.
using ChainMatrix = Eigen::MatrixXd;

namespace detail {

inline double variance(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

/// Autocovariance at lags 0..max_lag (biased, divided by n).
inline std::vector<double> autocovariance(const Eigen::VectorXd& x, int max_lag) {
  const int n = static_cast<int>(x.size());
  const Eigen::VectorXd c = x.array() - x.mean();
  std::vector<double> acov(max_lag + 1, 0.0);
  for (int t = 0; t <= max_lag && t < n; ++t) acov[t] = c.head(n - t).dot(c.tail(n - t)) / n;
  return acov;
}

}  // namespace detail

/// Split-R̂: each chain is cut in half and the halves treated as chains.
inline double split_rhat(const ChainMatrix& draws) {
  const int n = static_cast<int>(draws.rows()) / 2;
  const int m = static_cast<int>(draws.cols()) * 2;
  if (n < 2) throw std::invalid_argument("split_rhat: need at least four draws per chain");
  Eigen::VectorXd means(m), vars(m);
  for (int c = 0; c < draws.cols(); ++c)
    for (int h = 0; h < 2; ++h) {
      const Eigen::VectorXd half = draws.col(c).segment(h * n, n);
      means[2 * c + h] = half.mean();
      vars[2 * c + h] = detail::variance(half);
    }
  const double w = vars.mean();
  const double b = n * detail::variance(means);
  if (w <= 0.0) return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

/// Bulk effective sample size across chains (split chains, Geyer initial
/// positive and monotone sequence on the combined autocorrelation).
inline double effective_sample_size(const ChainMatrix& draws) {
  const int n = static_cast<int>(draws.rows()) / 2;
  const int m = static_cast<int>(draws.cols()) * 2;
  if (n < 4) throw std::invalid_argument("effective_sample_size: need at least eight draws per chain");
  std::vector<Eigen::VectorXd> chains;
  for (int c = 0; c < draws.cols(); ++c)
    for (int h = 0; h < 2; ++h) chains.push_back(draws.col(c).segment(h * n, n));

  Eigen::VectorXd means(m), vars(m);
  for (int k = 0; k < m; ++k) {
    means[k] = chains[k].mean();
    vars[k] = detail::variance(chains[k]);
  }
  const double w = vars.mean();
  const double b_over_n = detail::variance(means);
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  if (!(var_plus > 0.0)) return static_cast<double>(n) * m;

  // Autocorrelations are computed in blocks of lags so that well-mixing chains
  // stop early.
  std::vector<std::vector<double>> acov(m);
  int computed = -1;
  auto ensure = [&](int lag) {
    if (lag <= computed) return;
    const int upto = std::min(n - 1, std::max(lag, 2 * computed + 32));
    for (int k = 0; k < m; ++k) acov[k] = detail::autocovariance(chains[k], upto);
    computed = upto;
  };
  auto rho = [&](int t) {
    ensure(t);
    double mean_acov = 0.0;
    for (int k = 0; k < m; ++k) mean_acov += acov[k][t];
    mean_acov /= m;
    return 1.0 - (w - mean_acov) / var_plus;
  };

  // Geyer: sum pairs P_k = rho_{2k} + rho_{2k+1} while positive, enforcing monotonicity.
  double sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  int t = 0;
  while (t + 1 < n) {
    double pair = rho(t) + rho(t + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    sum += pair;
    prev_pair = pair;
    t += 2;
  }
  const double tau = -1.0 + 2.0 * sum;
  const double total = static_cast<double>(n) * m;
  return total / std::max(tau, 1.0 / std::log10(total));
}

}  // namespace mapval
