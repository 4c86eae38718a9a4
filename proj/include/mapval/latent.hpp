#pragma once

// BYM2 field construction, the Leroux generative field, and hyperprior
// log-densities.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "mapval/graph.hpp"
#include "mapval/rng.hpp"

namespace mapval {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

struct Bym2Params {
  double precision = 1.0;  // tau
  double mixing = 0.5;     // phi

  void validate() const {
    if (!(precision > 0.0) || !std::isfinite(precision)) throw std::invalid_argument("Bym2Params: precision must be > 0");
    if (!(mixing >= 0.0 && mixing <= 1.0)) throw std::invalid_argument("Bym2Params: mixing must lie in [0,1]");
  }
};

struct LerouxParams {
  double variance = 0.2;     // sigma^2
  double correlation = 0.5;  // rho

  void validate() const {
    if (!(variance > 0.0) || !std::isfinite(variance)) throw std::invalid_argument("LerouxParams: variance must be > 0");
    if (!(correlation >= 0.0 && correlation <= 1.0))
      throw std::invalid_argument("LerouxParams: correlation must lie in [0,1]");
  }
};

/// PC prior on a precision through the tail event Pr(tau^{-1/2} > u) = alpha.
struct PcPrecisionPrior {
  double threshold_u = 1.0;
  double tail_prob_alpha = 0.01;

  double rate() const { return -std::log(tail_prob_alpha) / threshold_u; }
};

/// PC prior on the BYM2 mixing parameter with Pr(phi < median_phi) = 0.5.
struct PcMixingPrior {
  double median_phi = 0.5;
  bool uniform = false;  // fall back to the uniform density on [0,1]
};

/// Gamma(shape, rate) law on tau, stated through log tau.
struct LogGammaPrior {
  double shape = 1.0;
  double rate = 0.00005;
};

/// Type-2 Gumbel density on tau implied by sigma = tau^{-1/2} ~ Exp(lambda).
inline double pc_precision_logdensity(double tau, const PcPrecisionPrior& prior) {
  if (std::isnan(tau)) throw std::invalid_argument("pc_precision_logdensity: NaN precision");
  if (!(tau > 0.0) || std::isinf(tau)) return kLogZero;
  const double lambda = prior.rate();
  return std::log(lambda / 2.0) - 1.5 * std::log(tau) - lambda / std::sqrt(tau);
}

inline double loggamma_logdensity(double tau, const LogGammaPrior& prior) {
  if (std::isnan(tau)) throw std::invalid_argument("loggamma_logdensity: NaN precision");
  if (!(tau > 0.0) || std::isinf(tau)) return kLogZero;
  return prior.shape * std::log(prior.rate) - std::lgamma(prior.shape) + (prior.shape - 1.0) * std::log(tau) -
         prior.rate * tau;
}

/// Numerically tabulated PC prior for the BYM2 mixing parameter.
///
/// The distance to the base model (phi = 0) is d(phi) = sqrt(2 KLD(phi)), with
/// the Kullback-Leibler divergence evaluated from the non-null eigenvalues of
/// the generalized inverse of the scaled ICAR precision. An exponential law on
/// d, truncated to [0, d(1)], is calibrated so that Pr(phi < median) = 1/2.
class PcMixingTable {
 public:
  static constexpr int kGridPoints = 201;

  PcMixingTable() = default;

  PcMixingTable(const AreaGraph& graph, const PcMixingPrior& prior) : uniform_(prior.uniform) {
    if (uniform_) return;
    if (!(prior.median_phi > 0.0 && prior.median_phi < 1.0))
      throw std::invalid_argument("PcMixingPrior: median_phi must lie in (0,1)");
    gamma_minus_one_ = covariance_eigenvalues(graph);
    const double d1 = distance(1.0);
    const double dm = distance(prior.median_phi);
    rate_ = calibrate_rate(dm, d1);
    grid_.resize(kGridPoints);
    density_.resize(kGridPoints);
    for (int k = 0; k < kGridPoints; ++k) {
      const double phi = static_cast<double>(k) / (kGridPoints - 1);
      grid_[k] = phi;
      density_[k] = exact_density(phi, d1);
    }
    // Linear interpolation of a curved density is off by O(h^2); rescale so
    // the interpolant is itself a proper density.
    double mass = 0.0;
    for (int k = 0; k + 1 < kGridPoints; ++k) mass += 0.5 * (density_[k] + density_[k + 1]) / (kGridPoints - 1);
    for (double& d : density_) d /= mass;
    d1_ = d1;
  }

  bool uniform() const { return uniform_; }
  double rate() const { return rate_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& density_table() const { return density_; }

  /// Interpolated log-density; kLogZero outside [0,1].
  double logdensity(double phi) const {
    if (std::isnan(phi)) throw std::invalid_argument("pc_mixing_logdensity: NaN mixing");
    if (phi < 0.0 || phi > 1.0) return kLogZero;
    if (uniform_) return 0.0;
    const double pos = phi * (kGridPoints - 1);
    int k = static_cast<int>(std::floor(pos));
    if (k >= kGridPoints - 1) k = kGridPoints - 2;
    const double w = pos - k;
    const double f = (1.0 - w) * density_[k] + w * density_[k + 1];
    return f > 0.0 ? std::log(f) : kLogZero;
  }

  /// Closed-form density of the truncated law (before tabulation).
  double exact_density(double phi) const { return uniform_ ? 1.0 : exact_density(phi, d1_); }

  /// Closed-form CDF of the truncated law.
  double exact_cdf(double phi) const {
    if (uniform_) return std::clamp(phi, 0.0, 1.0);
    return truncated_cdf(distance(std::clamp(phi, 0.0, 1.0)), d1_, rate_);
  }

  double distance(double phi) const {
    double kld = 0.0;
    for (double g : gamma_minus_one_) {
      const double x = phi * g;
      kld += x - std::log1p(x);
    }
    kld *= 0.5;
    return std::sqrt(2.0 * std::max(kld, 0.0));
  }

 private:
  static std::vector<double> covariance_eigenvalues(const AreaGraph& graph) {
    const Eigen::MatrixXd q = Eigen::MatrixXd(graph.icar_precision()) * graph.scaling_factor();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q);
    if (es.info() != Eigen::Success) throw std::runtime_error("PcMixingTable: eigen-decomposition failed");
    const auto& ev = es.eigenvalues();
    const std::size_t n_null = graph.components().size();
    std::vector<double> out;
    for (Eigen::Index j = static_cast<Eigen::Index>(n_null); j < ev.size(); ++j) out.push_back(1.0 / ev[j] - 1.0);
    return out;
  }

  double distance_derivative(double phi) const {
    double s2 = 0.0;
    for (double g : gamma_minus_one_) s2 += g * g;
    if (phi <= 0.0) return std::sqrt(0.5 * s2);
    double dk = 0.0;
    for (double g : gamma_minus_one_) dk += phi * g * g / (1.0 + phi * g);
    dk *= 0.5;
    const double d = distance(phi);
    return d > 0.0 ? dk / d : std::sqrt(0.5 * s2);
  }

  // Pr(D <= d) for an exponential of rate r truncated to [0, d1]; r may be <= 0.
  static double truncated_cdf(double d, double d1, double r) {
    if (std::abs(r * d1) < 1e-12) return d / d1;
    return std::expm1(-r * d) / std::expm1(-r * d1);
  }

  static double calibrate_rate(double dm, double d1) {
    // F(dm; r) increases with r; bracket the root of F = 1/2.
    double lo = -1.0 / d1, hi = 1.0 / d1;
    while (truncated_cdf(dm, d1, lo) > 0.5) lo *= 2.0;
    while (truncated_cdf(dm, d1, hi) < 0.5) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (truncated_cdf(dm, d1, mid) < 0.5 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

  double exact_density(double phi, double d1) const {
    const double d = distance(phi);
    const double dd = distance_derivative(phi);
    const double r = rate_;
    if (std::abs(r * d1) < 1e-12) return dd / d1;
    return -r * std::exp(-r * d) * dd / std::expm1(-r * d1);
  }

  bool uniform_ = true;
  double rate_ = 0.0;
  double d1_ = 1.0;
  std::vector<double> gamma_minus_one_;
  std::vector<double> grid_;
  std::vector<double> density_;
};

inline double pc_mixing_logdensity(double phi, const PcMixingTable& table) { return table.logdensity(phi); }

/// b = tau^{-1/2} (sqrt(phi) u* + sqrt(1 - phi) v*).
inline Eigen::VectorXd bym2_combine(const Eigen::VectorXd& u_star, const Eigen::VectorXd& v_star,
                                    const Bym2Params& params, const AreaGraph& graph) {
  params.validate();
  if (u_star.size() != graph.n_areas() || v_star.size() != graph.n_areas())
    throw std::invalid_argument("bym2_combine: vector length does not match the graph");
  return (std::sqrt(params.mixing) * u_star + std::sqrt(1.0 - params.mixing) * v_star) / std::sqrt(params.precision);
}

namespace detail {

/// x ~ N(0, P^{-1}) for a positive definite sparse precision P.
inline Eigen::VectorXd sample_gmrf(const SparseMatrix& precision, Rng& rng) {
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt(precision);
  if (llt.info() != Eigen::Success) throw std::runtime_error("sample_gmrf: precision is not positive definite");
  Eigen::VectorXd z = rng.normal_vector(precision.rows());
  Eigen::VectorXd y = llt.matrixU().solve(z);
  return llt.permutationPinv() * y;
}

inline void centre_per_component(Eigen::VectorXd& x, const AreaGraph& graph) {
  for (const auto& comp : graph.components()) {
    double m = 0.0;
    for (int i : comp) m += x[i];
    m /= static_cast<double>(comp.size());
    for (int i : comp) x[i] -= m;
  }
}

}  // namespace detail

/// One draw of the sum-to-zero constrained field with (singular) precision
/// `q_scale * Q`: sample from the jittered precision, then centre each component.
inline Eigen::VectorXd sample_constrained_icar(const AreaGraph& graph, double q_scale, Rng& rng) {
  for (const auto& c : graph.components())
    if (c.size() < 2) throw std::invalid_argument("sample_constrained_icar: singleton component has no ICAR variation");
  SparseMatrix p = q_scale * graph.icar_precision();
  const double jitter = 1e-9 * p.diagonal().mean();
  for (int i = 0; i < graph.n_areas(); ++i) p.coeffRef(i, i) += jitter;
  Eigen::VectorXd x = detail::sample_gmrf(p, rng);
  detail::centre_per_component(x, graph);
  return x;
}

/// Scaled ICAR draw u* (geometric-mean marginal variance one). Singleton areas are zero.
inline Eigen::VectorXd sample_scaled_icar(const AreaGraph& graph, Rng& rng) {
  const int n = graph.n_areas();
  std::vector<int> keep;
  for (int i = 0; i < n; ++i)
    if (graph.degrees()[i] > 0) keep.push_back(i);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  if (keep.empty()) return out;
  if (static_cast<int>(keep.size()) == n) return sample_constrained_icar(graph, graph.scaling_factor(), rng);
  const AreaGraph sub = subgraph(graph, keep);
  Eigen::VectorXd x = sample_constrained_icar(sub, graph.scaling_factor(), rng);
  for (std::size_t k = 0; k < keep.size(); ++k) out[keep[k]] = x[static_cast<Eigen::Index>(k)];
  return out;
}

/// Leroux precision sigma^{-2} (rho R + (1 - rho) I).
inline SparseMatrix leroux_precision(const AreaGraph& graph, const LerouxParams& params) {
  params.validate();
  SparseMatrix p = params.correlation * graph.icar_precision();
  for (int i = 0; i < graph.n_areas(); ++i) p.coeffRef(i, i) += 1.0 - params.correlation;
  p /= params.variance;
  return p;
}

/// One draw Z ~ N(0, sigma^2 (rho R + (1 - rho) I)^{-1}); deterministic given the seed.
inline Eigen::VectorXd sample_leroux(const AreaGraph& graph, const LerouxParams& params, Rng& rng) {
  params.validate();
  if (params.correlation >= 1.0) {
    for (const auto& c : graph.components())
      if (c.size() < 2) throw std::invalid_argument("sample_leroux: rho = 1 with a singleton component");
    return sample_constrained_icar(graph, 1.0 / params.variance, rng);
  }
  return detail::sample_gmrf(leroux_precision(graph, params), rng);
}

inline Eigen::VectorXd sample_leroux(const AreaGraph& graph, const LerouxParams& params, std::uint64_t seed) {
  Rng rng(seed);
  return sample_leroux(graph, params, rng);
}

}  // namespace mapval
