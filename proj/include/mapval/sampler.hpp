#pragma once

// MCMC for the joint models.
//
// Each iteration makes two Metropolis-Hastings moves:
//   1. hyperparameters take an adaptive random-walk step in (log tau, logit phi);
//      the whole latent vector is proposed jointly from the constrained Gaussian
//      approximation at the proposed hyperparameters, and both are accepted or
//      rejected together;
//   2. the latent vector alone is refreshed by an independence proposal from
//      the approximation at the current hyperparameters.
// The approximation is centred at the constrained conditional mode (Newton
// with line search) with precision equal to the negative Hessian there; the
// sum-to-zero constraints are imposed by conditioning, so every draw lies
// exactly on the constrained subspace and the acceptance ratios use the exact
// constrained proposal density.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "mapval/diagnostics.hpp"
#include "mapval/model.hpp"
#include "mapval/rng.hpp"

namespace mapval {

struct SamplerConfig {
  int n_chains = 4;
  int n_warmup = 2000;
  int n_kept = 2000;
  int thinning = 1;
  int threads = 0;  // 0: one per chain, capped by hardware concurrency
  double target_acceptance = 0.3;
  double rhat_threshold = 1.05;
  double ess_threshold = 200.0;
  int monitored_coordinates = 8;
  double newton_tolerance = 1e-12;
  int newton_max_iterations = 100;

  void validate() const {
    if (n_chains < 2) throw std::invalid_argument("SamplerConfig: need at least two chains");
    if (n_warmup < 0 || n_kept < 8 || thinning < 1) throw std::invalid_argument("SamplerConfig: bad iteration counts");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
      throw std::invalid_argument("SamplerConfig: target_acceptance must lie in (0,1)");
  }
};

struct ParameterDiagnostic {
  std::string name;
  double rhat = 1.0;
  double ess = 0.0;
};

/// Retained draws, pooled chain-major: row c * n_kept + k is draw k of chain c.
class PosteriorFit {
 public:
  ModelSpec model;
  std::vector<std::string> area_ids;
  std::vector<std::string> field_names;
  std::vector<std::string> names;
  Eigen::MatrixXd draws;
  int n_chains = 0;
  int n_kept = 0;
  int thinning = 1;
  std::vector<ParameterDiagnostic> diagnostics;
  std::vector<double> acceptance_hyper;
  std::vector<double> acceptance_latent;
  std::vector<double> acceptance_independence;
  bool converged = false;

  int n_areas() const { return static_cast<int>(area_ids.size()); }
  int n_draws() const { return static_cast<int>(draws.rows()); }

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  int index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("PosteriorFit: unknown parameter '" + name + "'");
    return it->second;
  }
  Eigen::VectorXd column(const std::string& name) const { return draws.col(index(name)); }
  /// Iterations x chains view of one parameter.
  ChainMatrix by_chain(const Eigen::VectorXd& pooled) const {
    ChainMatrix m(n_kept, n_chains);
    for (int c = 0; c < n_chains; ++c) m.col(c) = pooled.segment(static_cast<Eigen::Index>(c) * n_kept, n_kept);
    return m;
  }
  /// Draws x areas block of one latent field.
  Eigen::MatrixXd field(const std::string& field_name) const {
    const int first = index(element_name(field_name, 0));
    return draws.middleCols(first, n_areas());
  }
  bool has_field(const std::string& field_name) const {
    return std::find(field_names.begin(), field_names.end(), field_name) != field_names.end();
  }

  static std::string element_name(const std::string& field, int i) { return field + "[" + std::to_string(i) + "]"; }

  void reindex() {
    index_.clear();
    for (std::size_t k = 0; k < names.size(); ++k) index_[names[k]] = static_cast<int>(k);
  }

 private:
  std::map<std::string, int> index_;
};

/// Constrained Gaussian approximation to the latent conditional at fixed
/// hyperparameters. A small ridge on the u blocks makes the precision
/// invertible; it only acts along directions that the constraints remove or
/// reweights the proposal slightly, and the proposal density accounts for it.
class GaussianApprox {
 public:
  explicit GaussianApprox(const JointModel& model) : model_(&model) {
    const int dim = model.latent_dim();
    const auto& cons = model.constraints();
    SparseMatrix a(static_cast<Eigen::Index>(cons.size()), dim);
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t r = 0; r < cons.size(); ++r)
      for (int i : cons[r]) t.emplace_back(static_cast<int>(r), i, 1.0);
    a.setFromTriplets(t.begin(), t.end());
    a_ = a;
    at_ = Eigen::MatrixXd(a.transpose());
    ridge_ = 1e-6 * std::max(model.scaled_precision_scale(), 1.0);
    model.negative_hessian(model.initial_latent(), model.decode(Eigen::VectorXd::Zero(model.hyper_dim())), h_);
    llt_.analyzePattern(h_);
  }
  GaussianApprox(const GaussianApprox&) = delete;
  GaussianApprox& operator=(const GaussianApprox&) = delete;

  /// Locate the constrained mode starting from the feasible point `start`.
  /// Returns false when the conditional cannot be maximised (non-finite values
  /// or a failed factorisation).
  bool build(const std::vector<FieldHyper>& hp, const Eigen::VectorXd& start, double tol, int max_iter) {
    valid_ = false;
    Eigen::VectorXd x = start;
    double f = model_->log_conditional(x, hp);
    if (!std::isfinite(f)) return false;
    for (int it = 0; it < max_iter; ++it) {
      model_->negative_hessian(x, hp, h_, ridge_);
      if (!factor()) return false;
      const Eigen::VectorXd g = model_->gradient(x, hp);
      const Eigen::VectorXd d = project(llt_.solve(g));
      const double decrement = g.dot(d);
      if (!std::isfinite(decrement)) return false;
      if (decrement <= tol) return finish(x);
      double step = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60 && !moved; ++ls, step *= 0.5) {
        Eigen::VectorXd xn = x + step * d;
        const double fn = model_->log_conditional(xn, hp);
        if (std::isfinite(fn) && fn >= f + 1e-4 * step * decrement) {
          x = std::move(xn);
          f = fn;
          moved = true;
        }
      }
      // No ascent possible at working precision: x is the mode.
      if (!moved) return finish(x);
    }
    return false;
  }

  /// Draw from the approximation; the result satisfies the constraints exactly
  /// up to rounding.
  Eigen::VectorXd sample(Rng& rng) const {
    const Eigen::VectorXd e = rng.normal_vector(mode_.size());
    const Eigen::VectorXd z = llt_.permutationPinv() * Eigen::VectorXd(llt_.matrixU().solve(e));
    return mode_ + project(z);
  }

  /// Log-density on the constraint subspace, up to a constant common to every
  /// approximation of the same model.
  double log_density(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd r = x - mode_;
    const double quad = r.dot(h_.selfadjointView<Eigen::Lower>() * r);
    return -0.5 * quad + log_norm_;
  }

  const Eigen::VectorXd& mode() const { return mode_; }
  bool valid() const { return valid_; }

 private:
  bool factor() {
    llt_.factorize(h_);
    if (llt_.info() != Eigen::Success) return false;
    if (a_.rows() > 0) {
      w_ = llt_.solve(at_);
      s_.compute(a_ * w_);
      if (s_.info() != Eigen::Success) return false;
    }
    return true;
  }

  Eigen::VectorXd project(const Eigen::VectorXd& v) const {
    if (a_.rows() == 0) return v;
    const Eigen::VectorXd av = a_ * v;
    return v - w_ * s_.solve(av);
  }

  bool finish(const Eigen::VectorXd& x) {
    mode_ = x;
    const double logdet_h = 2.0 * llt_.matrixL().nestedExpression().diagonal().array().log().sum();
    double logdet_s = 0.0;
    if (a_.rows() > 0) logdet_s = 2.0 * s_.matrixL().nestedExpression().diagonal().array().log().sum();
    log_norm_ = 0.5 * logdet_h + 0.5 * logdet_s;
    valid_ = std::isfinite(log_norm_);
    return valid_;
  }

  const JointModel* model_;
  double ridge_ = 0.0;
  SparseMatrix a_;
  Eigen::MatrixXd at_;
  SparseMatrix h_;
  Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> llt_;
  Eigen::MatrixXd w_;
  Eigen::LLT<Eigen::MatrixXd> s_;
  Eigen::VectorXd mode_;
  double log_norm_ = 0.0;
  bool valid_ = false;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct ChainOutput {
  Eigen::MatrixXd draws;
  double acc_hyper = 0.0;
  double acc_latent = 0.0;
  double acc_indep = 0.0;
};

inline std::vector<std::string> parameter_names(const JointModel& m) {
  std::vector<std::string> names{"alpha1", "alpha2"};
  for (const auto& f : m.fields())
    for (int i = 0; i < m.n_areas(); ++i) names.push_back(PosteriorFit::element_name(f.def.name, i));
  for (const auto& f : m.fields()) {
    names.push_back("tau_" + f.def.name);
    if (f.def.kind == FieldKind::Bym2) names.push_back("phi_" + f.def.name);
  }
  return names;
}

inline void record(const JointModel& m, const Eigen::VectorXd& x, const std::vector<FieldHyper>& hp,
                   Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  const int n = m.n_areas();
  row[0] = x[0];
  row[1] = x[1];
  int col = 2;
  for (const auto& f : m.fields()) {
    row.segment(col, n) = x.segment(f.b_offset, n).transpose();
    col += n;
  }
  for (std::size_t k = 0; k < m.fields().size(); ++k) {
    row[col++] = hp[k].tau;
    if (m.fields()[k].def.kind == FieldKind::Bym2) row[col++] = hp[k].phi;
  }
}

/// Starting point of the hyperparameters in transformed space, before jitter.
inline Eigen::VectorXd default_hyper_start(const JointModel& m) {
  Eigen::VectorXd h(m.hyper_dim());
  for (const auto& f : m.fields()) {
    h[f.tau_index] = f.def.kind == FieldKind::Bym2 ? 3.2 : 4.6;
    if (f.phi_index >= 0) h[f.phi_index] = 0.0;
  }
  return h;
}

inline ChainOutput run_chain(const JointModel& model, const SamplerConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const int d = model.hyper_dim();
  const int n_params = static_cast<int>(parameter_names(model).size());
  auto cur = std::make_unique<GaussianApprox>(model);
  auto prop = std::make_unique<GaussianApprox>(model);

  auto hyper_logdens = [&](const std::vector<FieldHyper>& hp) {
    return model.log_hyperprior(hp) + model.log_jacobian(hp);
  };

  Eigen::VectorXd theta;
  std::vector<FieldHyper> hp;
  bool started = false;
  for (int attempt = 0; attempt < 50 && !started; ++attempt) {
    theta = default_hyper_start(model) + 0.5 * rng.normal_vector(d);
    hp = model.decode(theta);
    started = std::isfinite(hyper_logdens(hp)) &&
              cur->build(hp, model.initial_latent(), cfg.newton_tolerance, cfg.newton_max_iterations);
  }
  if (!started) throw FitError("sampler could not find a starting point");

  Eigen::VectorXd x = cur->mode();
  double lp_hyper = hyper_logdens(hp);
  double lp = model.log_conditional(x, hp) + lp_hyper;

  // Proposal covariance: fixed diagonal until enough warmup history, then the
  // empirical covariance; overall scale tuned by Robbins-Monro during warmup.
  const double base = 2.38 / std::sqrt(static_cast<double>(d));
  double log_scale = 0.0;
  Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(d, d) * (0.1 * base);
  Eigen::VectorXd run_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd run_m2 = Eigen::MatrixXd::Zero(d, d);
  int n_hist = 0;
  const int adapt_start = std::min(200, cfg.n_warmup / 4);

  // Independence proposal for the kept phase: multivariate t fitted to the
  // second half of warmup.
  const int late_start = cfg.n_warmup / 2;
  Eigen::VectorXd late_mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd late_m2 = Eigen::MatrixXd::Zero(d, d);
  int n_late = 0;
  bool indep = false;
  Eigen::VectorXd ind_mean;
  Eigen::MatrixXd ind_chol;
  Eigen::MatrixXd ind_prec_l;  // inverse of ind_chol
  const int nu = 5;
  auto ind_logq = [&](const Eigen::VectorXd& t) {
    const double m = (ind_prec_l * (t - ind_mean)).squaredNorm();
    return -0.5 * (nu + d) * std::log1p(m / nu);
  };

  const int total = cfg.n_warmup + cfg.n_kept * cfg.thinning;
  ChainOutput out;
  out.draws.resize(cfg.n_kept, n_params);
  int kept = 0;
  long acc_h = 0, acc_l = 0, acc_i = 0;

  for (int it = 0; it < total; ++it) {
    const bool warm = it < cfg.n_warmup;

    // Joint hyperparameter + latent move.
    const Eigen::VectorXd theta_p = theta + std::exp(log_scale) * (chol * rng.normal_vector(d));
    const auto hp_p = model.decode(theta_p);
    const double lph_p = hyper_logdens(hp_p);
    double accept_prob = 0.0;
    if (std::isfinite(lph_p) && prop->build(hp_p, cur->mode(), cfg.newton_tolerance, cfg.newton_max_iterations)) {
      const Eigen::VectorXd x_p = prop->sample(rng);
      const double lp_p = model.log_conditional(x_p, hp_p) + lph_p;
      const double log_r = lp_p - lp + cur->log_density(x) - prop->log_density(x_p);
      if (std::isfinite(log_r)) {
        accept_prob = std::min(1.0, std::exp(log_r));
        if (rng.uniform() < accept_prob) {
          std::swap(cur, prop);
          theta = theta_p;
          hp = hp_p;
          x = x_p;
          lp = lp_p;
          lp_hyper = lph_p;
          if (!warm) ++acc_h;
        }
      }
    } else {
      rng.uniform();  // keep the stream aligned whatever the outcome
    }

    if (indep) {
      Eigen::VectorXd z = rng.normal_vector(d);
      double chi = 0.0;
      for (int k = 0; k < nu; ++k) chi += std::pow(rng.normal(), 2);
      const Eigen::VectorXd theta_p = ind_mean + ind_chol * z / std::sqrt(chi / nu);
      const auto hp_p = model.decode(theta_p);
      const double lph_p = hyper_logdens(hp_p);
      const double u = rng.uniform();
      if (std::isfinite(lph_p) && prop->build(hp_p, cur->mode(), cfg.newton_tolerance, cfg.newton_max_iterations)) {
        const Eigen::VectorXd x_p = prop->sample(rng);
        const double lp_p = model.log_conditional(x_p, hp_p) + lph_p;
        const double log_r =
            lp_p - lp + cur->log_density(x) + ind_logq(theta) - prop->log_density(x_p) - ind_logq(theta_p);
        if (std::isfinite(log_r) && std::log(u) < log_r) {
          std::swap(cur, prop);
          theta = theta_p;
          hp = hp_p;
          x = x_p;
          lp = lp_p;
          lp_hyper = lph_p;
          ++acc_i;
        }
      }
    }

    // Latent refresh at fixed hyperparameters.
    {
      const Eigen::VectorXd x_p = cur->sample(rng);
      const double lp_p = model.log_conditional(x_p, hp) + lp_hyper;
      const double log_r = lp_p - lp + cur->log_density(x) - cur->log_density(x_p);
      if (std::isfinite(log_r) && std::log(rng.uniform()) < log_r) {
        x = x_p;
        lp = lp_p;
        if (!warm) ++acc_l;
      }
    }

    if (warm) {
      const double gamma = 1.0 / std::pow(it + 1.0, 0.6);
      log_scale += gamma * (accept_prob - cfg.target_acceptance);
      log_scale = std::clamp(log_scale, -10.0, 5.0);
      ++n_hist;
      const Eigen::VectorXd delta = theta - run_mean;
      run_mean += delta / n_hist;
      run_m2 += delta * (theta - run_mean).transpose();
      if (it >= adapt_start && n_hist > 2 * d) {
        Eigen::MatrixXd cov = run_m2 / (n_hist - 1);
        cov.diagonal().array() += 1e-6;
        Eigen::LLT<Eigen::MatrixXd> llt(cov * base * base);
        if (llt.info() == Eigen::Success) chol = llt.matrixL();
      }
      if (it >= late_start) {
        ++n_late;
        const Eigen::VectorXd dl = theta - late_mean;
        late_mean += dl / n_late;
        late_m2 += dl * (theta - late_mean).transpose();
      }
      if (it + 1 == cfg.n_warmup && n_late > 10 * d) {
        Eigen::MatrixXd cov = late_m2 / (n_late - 1);
        cov.diagonal().array() += 1e-6;
        Eigen::LLT<Eigen::MatrixXd> llt(cov * 1.5 * 1.5);
        if (llt.info() == Eigen::Success) {
          indep = true;
          ind_mean = late_mean;
          ind_chol = llt.matrixL();
          ind_prec_l = ind_chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(d, d));
        }
      }
    } else if ((it - cfg.n_warmup) % cfg.thinning == 0) {
      record(model, x, hp, out.draws.row(kept++));
    }
  }
  const double post = static_cast<double>(cfg.n_kept) * cfg.thinning;
  out.acc_hyper = acc_h / post;
  out.acc_latent = acc_l / post;
  out.acc_indep = acc_i / post;
  return out;
}

template <typename Fn>
inline void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  for (int t = 0; t < std::min(threads, n); ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline int resolve_threads(int requested, int work) {
  if (requested > 0) return requested;
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::min(hw, work);
}

}  // namespace detail

/// Evenly spaced area indices used for latent-coordinate diagnostics.
inline std::vector<int> monitored_areas(int n_areas, int count) {
  std::vector<int> out;
  const int m = std::min(count, n_areas);
  if (m <= 0) return out;
  if (m == 1) return {0};
  for (int k = 0; k < m; ++k) out.push_back(static_cast<int>(std::lround(k * (n_areas - 1.0) / (m - 1.0))));
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Split-R̂ and ESS for intercepts, their contrast, transformed hyperparameters
/// and a fixed subsample of latent coordinates.
inline void compute_diagnostics(PosteriorFit& fit, const SamplerConfig& cfg) {
  fit.diagnostics.clear();
  auto add = [&](const std::string& name, const Eigen::VectorXd& pooled) {
    const ChainMatrix m = fit.by_chain(pooled);
    fit.diagnostics.push_back({name, split_rhat(m), effective_sample_size(m)});
  };
  add("alpha1", fit.column("alpha1"));
  add("alpha2", fit.column("alpha2"));
  add("delta", fit.column("alpha2") - fit.column("alpha1"));
  for (const auto& f : fit.field_names) {
    add("log_tau_" + f, fit.column("tau_" + f).array().log());
    if (fit.has("phi_" + f)) {
      const Eigen::ArrayXd p = fit.column("phi_" + f).array();
      add("logit_phi_" + f, (p.log() - (-p).log1p()).matrix());
    }
  }
  for (const auto& f : fit.field_names)
    for (int i : monitored_areas(fit.n_areas(), cfg.monitored_coordinates)) {
      const std::string nm = PosteriorFit::element_name(f, i);
      add(nm, fit.column(nm));
    }
  fit.converged = std::all_of(fit.diagnostics.begin(), fit.diagnostics.end(), [&](const ParameterDiagnostic& d) {
    return std::isfinite(d.rhat) && d.rhat < cfg.rhat_threshold && d.ess >= cfg.ess_threshold;
  });
}

/// Run the sampler. Chain c uses the stream derive_seed(seed, {c}); results do
/// not depend on the number of threads.
inline PosteriorFit fit(const ModelSpec& spec, const PairedDataset& data, const SamplerConfig& cfg,
                        std::uint64_t seed) {
  cfg.validate();
  const JointModel model(spec, data);
  std::vector<detail::ChainOutput> chains(cfg.n_chains);
  detail::parallel_for(cfg.n_chains, detail::resolve_threads(cfg.threads, cfg.n_chains), [&](int c) {
    chains[c] = detail::run_chain(model, cfg, derive_seed(seed, {static_cast<std::uint64_t>(c)}));
  });

  PosteriorFit out;
  out.model = spec;
  out.area_ids = data.graph->area_ids();
  for (const auto& f : model.fields()) out.field_names.push_back(f.def.name);
  out.names = detail::parameter_names(model);
  out.n_chains = cfg.n_chains;
  out.n_kept = cfg.n_kept;
  out.thinning = cfg.thinning;
  out.draws.resize(static_cast<Eigen::Index>(cfg.n_chains) * cfg.n_kept, static_cast<Eigen::Index>(out.names.size()));
  for (int c = 0; c < cfg.n_chains; ++c) {
    out.draws.middleRows(static_cast<Eigen::Index>(c) * cfg.n_kept, cfg.n_kept) = chains[c].draws;
    out.acceptance_hyper.push_back(chains[c].acc_hyper);
    out.acceptance_latent.push_back(chains[c].acc_latent);
    out.acceptance_independence.push_back(chains[c].acc_indep);
  }
  out.reindex();
  compute_diagnostics(out, cfg);
  return out;
}

}  // namespace mapval
