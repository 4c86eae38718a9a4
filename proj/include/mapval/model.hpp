#pragma once

// Joint Poisson models for a reference and a candidate database:
//
//   REM  eta1 = a1 + s        eta2 = a2 + s + e     s ~ BYM2, e iid
//   SEM  eta1 = a1 + s        eta2 = a2 + s + e     s, e ~ BYM2
//   SCM  eta1 = a1 + h + D1   eta2 = a2 + h + D2    h, D1, D2 ~ BYM2
//
// Each BYM2 field b is carried together with its scaled ICAR component u,
// b | u ~ N(sqrt(phi / tau) u, (1 - phi) / tau I), u constrained to sum to zero
// on every connected component (singleton areas have u = 0).

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mapval/graph.hpp"
#include "mapval/latent.hpp"

namespace mapval {

enum class ModelFamily { REM, SEM, SCM };

inline std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::REM: return "rem";
    case ModelFamily::SEM: return "sem";
    case ModelFamily::SCM: return "scm";
  }
  return "?";
}

inline ModelFamily parse_model_family(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (l == "rem") return ModelFamily::REM;
  if (l == "sem") return ModelFamily::SEM;
  if (l == "scm") return ModelFamily::SCM;
  throw std::invalid_argument("unknown model '" + s + "' (expected rem, sem or scm)");
}

enum class FieldKind { Bym2, Iid };

struct FieldDef {
  std::string name;
  FieldKind kind;
  bool loads_ref;
  bool loads_cand;
};

inline std::vector<FieldDef> model_fields(ModelFamily f) {
  switch (f) {
    case ModelFamily::REM: return {{"s", FieldKind::Bym2, true, true}, {"e", FieldKind::Iid, false, true}};
    case ModelFamily::SEM: return {{"s", FieldKind::Bym2, true, true}, {"e", FieldKind::Bym2, false, true}};
    case ModelFamily::SCM:
      return {{"h", FieldKind::Bym2, true, true}, {"D1", FieldKind::Bym2, true, false}, {"D2", FieldKind::Bym2, false, true}};
  }
  return {};
}

using PrecisionPrior = std::variant<PcPrecisionPrior, LogGammaPrior>;

inline double precision_logdensity(double tau, const PrecisionPrior& p) {
  return std::visit(
      [tau](const auto& prior) {
        using T = std::decay_t<decltype(prior)>;
        if constexpr (std::is_same_v<T, PcPrecisionPrior>)
          return pc_precision_logdensity(tau, prior);
        else
          return loggamma_logdensity(tau, prior);
      },
      p);
}

struct ModelSpec {
  ModelFamily family = ModelFamily::REM;
  std::map<std::string, PrecisionPrior> precision_priors;
  std::map<std::string, PcMixingPrior> mixing_priors;
  double intercept_prior_sd = 10.0;
  bool delta_fixed = true;

  /// PC priors on every BYM2 precision and mixing parameter; log-Gamma on the
  /// REM discrepancy precision.
  static ModelSpec defaults(ModelFamily family) {
    ModelSpec m;
    m.family = family;
    for (const auto& f : model_fields(family)) {
      if (f.kind == FieldKind::Bym2) {
        m.precision_priors[f.name] = PcPrecisionPrior{};
        m.mixing_priors[f.name] = PcMixingPrior{};
      } else {
        m.precision_priors[f.name] = LogGammaPrior{};
      }
    }
    return m;
  }

  void validate() const {
    if (!delta_fixed) throw std::invalid_argument("ModelSpec: delta must be fixed at 1");
    if (!(intercept_prior_sd > 0.0)) throw std::invalid_argument("ModelSpec: intercept_prior_sd must be > 0");
    for (const auto& f : model_fields(family)) {
      if (!precision_priors.count(f.name))
        throw std::invalid_argument("ModelSpec: missing precision prior for field '" + f.name + "'");
      if (f.kind == FieldKind::Bym2 && !mixing_priors.count(f.name))
        throw std::invalid_argument("ModelSpec: missing mixing prior for field '" + f.name + "'");
    }
  }
};

/// Per-area counts for both databases on a shared graph, with common expected counts.
struct PairedDataset {
  std::shared_ptr<const AreaGraph> graph;
  std::vector<int> counts_ref;
  std::vector<int> counts_cand;
  Eigen::VectorXd expected;
  Eigen::VectorXd population;

  int n_areas() const { return graph ? graph->n_areas() : 0; }

  void validate() const {
    if (!graph) throw std::invalid_argument("PairedDataset: missing graph");
    const auto n = static_cast<std::size_t>(graph->n_areas());
    if (counts_ref.size() != n || counts_cand.size() != n || static_cast<std::size_t>(expected.size()) != n ||
        static_cast<std::size_t>(population.size()) != n)
      throw std::invalid_argument("PairedDataset: vector lengths differ from the number of areas");
    for (std::size_t i = 0; i < n; ++i) {
      if (counts_ref[i] < 0 || counts_cand[i] < 0) throw std::invalid_argument("PairedDataset: negative count");
      if (!(expected[static_cast<Eigen::Index>(i)] > 0.0) || !std::isfinite(expected[static_cast<Eigen::Index>(i)]))
        throw std::invalid_argument("PairedDataset: expected counts must be positive at area '" +
                                    graph->area_ids()[i] + "'");
      if (!(population[static_cast<Eigen::Index>(i)] > 0.0))
        throw std::invalid_argument("PairedDataset: population must be positive");
    }
  }
};

/// Indirect internal standardisation: E_i = pop_i * sum(O) / sum(pop).
inline Eigen::VectorXd internal_standardisation(const std::vector<int>& counts, const Eigen::VectorXd& population) {
  if (static_cast<Eigen::Index>(counts.size()) != population.size())
    throw std::invalid_argument("internal_standardisation: length mismatch");
  double total = 0.0;
  for (int c : counts) total += c;
  return population * (total / population.sum());
}

/// Natural-scale hyperparameters of one field.
struct FieldHyper {
  double tau = 1.0;
  double phi = 0.0;  // unused for iid fields
};

/// Full parameter vector: latent (intercepts + fields) and transformed
/// hyperparameters (log tau, logit phi).
struct ModelState {
  Eigen::VectorXd latent;
  Eigen::VectorXd hyper;
};

inline double logit(double p) { return std::log(p) - std::log1p(-p); }
inline double inv_logit(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Model structure bound to one dataset: parameter layout, densities and the
/// fixed sparsity pattern of the latent Hessian.
class JointModel {
 public:
  struct FieldLayout {
    FieldDef def;
    int b_offset = 0;
    int u_offset = -1;
    int tau_index = 0;
    int phi_index = -1;
  };

  JointModel(ModelSpec spec, const PairedDataset& data) : spec_(std::move(spec)), data_(data) {
    spec_.validate();
    data_.validate();
    n_ = data_.graph->n_areas();
    int offset = 2;
    int h = 0;
    for (const auto& def : model_fields(spec_.family)) {
      FieldLayout f{def};
      f.b_offset = offset;
      offset += n_;
      if (def.kind == FieldKind::Bym2) {
        if (!data_.graph->has_icar_structure())
          throw std::invalid_argument("JointModel: BYM2 fields need at least one component with two or more areas");
        f.u_offset = offset;
        offset += n_;
      }
      f.tau_index = h++;
      if (def.kind == FieldKind::Bym2) f.phi_index = h++;
      fields_.push_back(f);
    }
    dim_ = offset;
    hyper_dim_ = h;
    for (const auto& f : fields_) {
      if (f.def.kind != FieldKind::Bym2) continue;
      const auto& mp = spec_.mixing_priors.at(f.def.name);
      mixing_tables_.emplace(f.def.name, PcMixingTable(*data_.graph, mp));
    }
    if (data_.graph->has_icar_structure()) scaled_q_ = data_.graph->scaled_icar_precision();
    o_ref_.resize(n_);
    o_cand_.resize(n_);
    for (int i = 0; i < n_; ++i) {
      o_ref_[i] = data_.counts_ref[i];
      o_cand_[i] = data_.counts_cand[i];
    }
    log_expected_ = data_.expected.array().log();
    build_constraints();
    build_pattern();
  }

  const ModelSpec& spec() const { return spec_; }
  const PairedDataset& data() const { return data_; }
  int n_areas() const { return n_; }
  int latent_dim() const { return dim_; }
  int hyper_dim() const { return hyper_dim_; }
  const std::vector<FieldLayout>& fields() const { return fields_; }
  const FieldLayout& field(const std::string& name) const {
    for (const auto& f : fields_)
      if (f.def.name == name) return f;
    throw std::out_of_range("JointModel: no field '" + name + "'");
  }
  const PcMixingTable& mixing_table(const std::string& field) const { return mixing_tables_.at(field); }
  /// Mean diagonal of the scaled ICAR precision (zero without ICAR structure).
  double scaled_precision_scale() const {
    return scaled_q_.rows() > 0 ? scaled_q_.diagonal().mean() : 0.0;
  }

  /// Index sets of the linear sum-to-zero constraints (one per BYM2 field and component).
  const std::vector<std::vector<int>>& constraints() const { return constraints_; }

  std::vector<FieldHyper> decode(const Eigen::VectorXd& hyper) const {
    std::vector<FieldHyper> out(fields_.size());
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      out[k].tau = std::exp(hyper[fields_[k].tau_index]);
      if (fields_[k].phi_index >= 0) out[k].phi = inv_logit(hyper[fields_[k].phi_index]);
    }
    return out;
  }

  Eigen::VectorXd encode(const std::vector<FieldHyper>& h) const {
    Eigen::VectorXd out(hyper_dim_);
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      out[fields_[k].tau_index] = std::log(h[k].tau);
      if (fields_[k].phi_index >= 0) out[fields_[k].phi_index] = logit(h[k].phi);
    }
    return out;
  }

  /// Linear predictors for database 1 (d = 0) and database 2 (d = 1).
  Eigen::VectorXd linear_predictor(const Eigen::VectorXd& x, int d) const {
    Eigen::VectorXd eta = Eigen::VectorXd::Constant(n_, x[d]);
    for (const auto& f : fields_)
      if (d == 0 ? f.def.loads_ref : f.def.loads_cand) eta += x.segment(f.b_offset, n_);
    return eta;
  }

  /// Poisson log-likelihood O * eta - E * exp(eta) of one database, without constants.
  double log_likelihood_db(const Eigen::VectorXd& x, int d) const {
    const Eigen::VectorXd eta = linear_predictor(x, d);
    const Eigen::VectorXd& o = d == 0 ? o_ref_ : o_cand_;
    return (o.array() * eta.array() - data_.expected.array() * eta.array().exp()).sum();
  }

  double log_likelihood(const Eigen::VectorXd& x) const { return log_likelihood_db(x, 0) + log_likelihood_db(x, 1); }

  /// Log-density of intercepts and latent fields given hyperparameters
  /// (up to a constant independent of the hyperparameters).
  double log_latent_prior(const Eigen::VectorXd& x, const std::vector<FieldHyper>& hp) const {
    const double s2 = spec_.intercept_prior_sd * spec_.intercept_prior_sd;
    double lp = -0.5 * (x[0] * x[0] + x[1] * x[1]) / s2;
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      const auto& f = fields_[k];
      const double tau = hp[k].tau;
      const auto b = x.segment(f.b_offset, n_);
      if (f.def.kind == FieldKind::Iid) {
        lp += 0.5 * n_ * std::log(tau) - 0.5 * tau * b.squaredNorm();
      } else {
        const double phi = hp[k].phi;
        const auto u = x.segment(f.u_offset, n_);
        const Eigen::VectorXd r = b - std::sqrt(phi / tau) * u;
        lp += -0.5 * u.dot(scaled_q_ * u);
        lp += 0.5 * n_ * (std::log(tau) - std::log1p(-phi)) - 0.5 * tau / (1.0 - phi) * r.squaredNorm();
      }
    }
    return lp;
  }

  /// Natural-scale hyperprior log-density (no change-of-variable terms).
  double log_hyperprior(const std::vector<FieldHyper>& hp) const {
    double lp = 0.0;
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      const auto& f = fields_[k];
      lp += precision_logdensity(hp[k].tau, spec_.precision_priors.at(f.def.name));
      if (f.def.kind == FieldKind::Bym2) lp += mixing_tables_.at(f.def.name).logdensity(hp[k].phi);
    }
    return lp;
  }

  /// Log Jacobian of (log tau, logit phi) -> (tau, phi).
  double log_jacobian(const std::vector<FieldHyper>& hp) const {
    double lj = 0.0;
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      lj += std::log(hp[k].tau);
      if (fields_[k].def.kind == FieldKind::Bym2) lj += std::log(hp[k].phi) + std::log1p(-hp[k].phi);
    }
    return lj;
  }

  /// Log-density of the latent vector given hyperparameters, up to a constant.
  double log_conditional(const Eigen::VectorXd& x, const std::vector<FieldHyper>& hp) const {
    return log_likelihood(x) + log_latent_prior(x, hp);
  }

  /// Gradient of log_conditional with respect to the latent vector.
  Eigen::VectorXd gradient(const Eigen::VectorXd& x, const std::vector<FieldHyper>& hp) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
    const double s2 = spec_.intercept_prior_sd * spec_.intercept_prior_sd;
    for (int d = 0; d < 2; ++d) {
      const Eigen::VectorXd eta = linear_predictor(x, d);
      const Eigen::VectorXd& o = d == 0 ? o_ref_ : o_cand_;
      const Eigen::VectorXd resid = o.array() - data_.expected.array() * eta.array().exp();
      g[d] += resid.sum();
      for (const auto& f : fields_)
        if (d == 0 ? f.def.loads_ref : f.def.loads_cand) g.segment(f.b_offset, n_) += resid;
    }
    g[0] -= x[0] / s2;
    g[1] -= x[1] / s2;
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      const auto& f = fields_[k];
      const double tau = hp[k].tau;
      const auto b = x.segment(f.b_offset, n_);
      if (f.def.kind == FieldKind::Iid) {
        g.segment(f.b_offset, n_) -= tau * b;
      } else {
        const double phi = hp[k].phi;
        const auto u = x.segment(f.u_offset, n_);
        const Eigen::VectorXd r = b - std::sqrt(phi / tau) * u;
        const double c = tau / (1.0 - phi);
        g.segment(f.b_offset, n_) -= c * r;
        g.segment(f.u_offset, n_) += c * std::sqrt(phi / tau) * r - scaled_q_ * u;
      }
    }
    return g;
  }

  /// Negative Hessian of log_conditional, lower triangle, on the fixed pattern.
  /// `u_ridge` is added to the diagonal of every u block; the Hessian itself is
  /// singular along the constrained directions when several structured fields
  /// share a predictor.
  void negative_hessian(const Eigen::VectorXd& x, const std::vector<FieldHyper>& hp, SparseMatrix& h,
                        double u_ridge = 0.0) const {
    if (h.nonZeros() != pattern_.nonZeros() || h.rows() != pattern_.rows()) h = pattern_;
    double* v = h.valuePtr();
    std::fill(v, v + h.nonZeros(), 0.0);
    const double s2 = spec_.intercept_prior_sd * spec_.intercept_prior_sd;
    v[slot_alpha_[0]] += 1.0 / s2;
    v[slot_alpha_[1]] += 1.0 / s2;
    for (std::size_t k = 0; k < fields_.size(); ++k) {
      const auto& f = fields_[k];
      const auto& sl = field_slots_[k];
      const double tau = hp[k].tau;
      if (f.def.kind == FieldKind::Iid) {
        for (int i = 0; i < n_; ++i) v[sl.bb[i]] += tau;
        continue;
      }
      const double phi = hp[k].phi;
      const double c = tau / (1.0 - phi);
      const double cross = -std::sqrt(phi * tau) / (1.0 - phi);
      const double uu = phi / (1.0 - phi);
      for (int i = 0; i < n_; ++i) {
        v[sl.bb[i]] += c;
        v[sl.ub[i]] += cross;
        v[sl.uu_diag[i]] += uu + u_ridge;
      }
      for (const auto& [slot, q] : sl.q_entries) v[slot] += q;
    }
    for (int d = 0; d < 2; ++d) {
      const Eigen::VectorXd eta = linear_predictor(x, d);
      const Eigen::VectorXd w = data_.expected.array() * eta.array().exp();
      const auto& ls = lik_slots_[d];
      for (int i = 0; i < n_; ++i) {
        v[slot_alpha_[d]] += w[i];
        for (int s : ls.per_area[i]) v[s] += w[i];
      }
    }
  }

  /// Sum of every constrained index set; all zero on the feasible subspace.
  Eigen::VectorXd constraint_values(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(constraints_.size()));
    for (std::size_t c = 0; c < constraints_.size(); ++c) {
      double s = 0.0;
      for (int i : constraints_[c]) s += x[i];
      out[static_cast<Eigen::Index>(c)] = s;
    }
    return out;
  }

  bool satisfies_constraints(const Eigen::VectorXd& x, double tol = 1e-8) const {
    const Eigen::VectorXd c = constraint_values(x);
    return c.size() == 0 || c.cwiseAbs().maxCoeff() <= tol * std::max(1.0, x.cwiseAbs().maxCoeff());
  }

  /// Feasible starting point: intercepts at the crude log rates, fields at zero.
  Eigen::VectorXd initial_latent() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim_);
    const double e = data_.expected.sum();
    x[0] = std::log(std::max(o_ref_.sum(), 0.5) / e);
    x[1] = std::log(std::max(o_cand_.sum(), 0.5) / e);
    return x;
  }

  /// Assemble a full latent vector from intercepts and per-field (b, u) blocks.
  Eigen::VectorXd pack(double alpha1, double alpha2, const std::map<std::string, Eigen::VectorXd>& b,
                       const std::map<std::string, Eigen::VectorXd>& u = {}) const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim_);
    x[0] = alpha1;
    x[1] = alpha2;
    for (const auto& f : fields_) {
      if (auto it = b.find(f.def.name); it != b.end()) x.segment(f.b_offset, n_) = it->second;
      if (f.u_offset >= 0)
        if (auto it = u.find(f.def.name); it != u.end()) x.segment(f.u_offset, n_) = it->second;
    }
    return x;
  }

 private:
  struct FieldSlots {
    std::vector<int> bb, ub, uu_diag;
    std::vector<std::pair<int, double>> q_entries;
  };
  struct LikSlots {
    std::vector<std::vector<int>> per_area;
  };

  void build_constraints() {
    for (const auto& f : fields_) {
      if (f.def.kind != FieldKind::Bym2) continue;
      for (const auto& comp : data_.graph->components()) {
        std::vector<int> idx;
        for (int i : comp) idx.push_back(f.u_offset + i);
        constraints_.push_back(std::move(idx));
      }
    }
  }

  void build_pattern() {
    std::vector<Eigen::Triplet<double>> t;
    auto add = [&](int r, int c) {
      if (r < c) std::swap(r, c);
      t.emplace_back(r, c, 0.0);
    };
    add(0, 0);
    add(1, 1);
    for (const auto& f : fields_) {
      for (int i = 0; i < n_; ++i) add(f.b_offset + i, f.b_offset + i);
      if (f.def.kind != FieldKind::Bym2) continue;
      for (int i = 0; i < n_; ++i) {
        add(f.u_offset + i, f.b_offset + i);
        add(f.u_offset + i, f.u_offset + i);
      }
      for (int c = 0; c < scaled_q_.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(scaled_q_, c); it; ++it)
          if (it.row() > it.col()) add(f.u_offset + static_cast<int>(it.row()), f.u_offset + static_cast<int>(it.col()));
    }
    for (int d = 0; d < 2; ++d) {
      std::vector<int> loads;
      for (const auto& f : fields_)
        if (d == 0 ? f.def.loads_ref : f.def.loads_cand) loads.push_back(f.b_offset);
      for (int i = 0; i < n_; ++i)
        for (std::size_t a = 0; a < loads.size(); ++a) {
          add(loads[a] + i, d);
          for (std::size_t b = a; b < loads.size(); ++b) add(loads[b] + i, loads[a] + i);
        }
    }
    pattern_.resize(dim_, dim_);
    pattern_.setFromTriplets(t.begin(), t.end());
    pattern_.makeCompressed();

    slot_alpha_[0] = slot(0, 0);
    slot_alpha_[1] = slot(1, 1);
    for (const auto& f : fields_) {
      FieldSlots fs;
      for (int i = 0; i < n_; ++i) fs.bb.push_back(slot(f.b_offset + i, f.b_offset + i));
      if (f.def.kind == FieldKind::Bym2) {
        for (int i = 0; i < n_; ++i) {
          fs.ub.push_back(slot(f.u_offset + i, f.b_offset + i));
          fs.uu_diag.push_back(slot(f.u_offset + i, f.u_offset + i));
        }
        for (int c = 0; c < scaled_q_.outerSize(); ++c)
          for (SparseMatrix::InnerIterator it(scaled_q_, c); it; ++it)
            if (it.row() >= it.col())
              fs.q_entries.emplace_back(
                  slot(f.u_offset + static_cast<int>(it.row()), f.u_offset + static_cast<int>(it.col())), it.value());
      }
      field_slots_.push_back(std::move(fs));
    }
    for (int d = 0; d < 2; ++d) {
      std::vector<int> loads;
      for (const auto& f : fields_)
        if (d == 0 ? f.def.loads_ref : f.def.loads_cand) loads.push_back(f.b_offset);
      LikSlots ls;
      ls.per_area.resize(n_);
      for (int i = 0; i < n_; ++i)
        for (std::size_t a = 0; a < loads.size(); ++a) {
          ls.per_area[i].push_back(slot(loads[a] + i, d));
          for (std::size_t b = a; b < loads.size(); ++b) ls.per_area[i].push_back(slot(loads[b] + i, loads[a] + i));
        }
      lik_slots_[d] = std::move(ls);
    }
  }

  int slot(int r, int c) const {
    if (r < c) std::swap(r, c);
    const int* inner = pattern_.innerIndexPtr();
    const int begin = pattern_.outerIndexPtr()[c];
    const int end = pattern_.outerIndexPtr()[c + 1];
    const int* p = std::lower_bound(inner + begin, inner + end, r);
    if (p == inner + end || *p != r) throw std::logic_error("JointModel: Hessian slot missing");
    return static_cast<int>(p - inner);
  }

  ModelSpec spec_;
  PairedDataset data_;
  int n_ = 0;
  int dim_ = 0;
  int hyper_dim_ = 0;
  std::vector<FieldLayout> fields_;
  std::map<std::string, PcMixingTable> mixing_tables_;
  SparseMatrix scaled_q_;
  Eigen::VectorXd o_ref_, o_cand_, log_expected_;
  std::vector<std::vector<int>> constraints_;
  SparseMatrix pattern_;
  int slot_alpha_[2] = {0, 0};
  std::vector<FieldSlots> field_slots_;
  LikSlots lik_slots_[2];
};

/// Log joint density of a full state: Poisson terms of both databases, latent
/// field densities and natural-scale hyperpriors. The state is expected to lie
/// on the sum-to-zero subspace (see JointModel::satisfies_constraints).
inline double log_joint(const JointModel& model, const ModelState& state) {
  if (state.latent.size() != model.latent_dim() || state.hyper.size() != model.hyper_dim())
    throw std::invalid_argument("log_joint: state dimensions do not match the model");
  if (!state.latent.allFinite() || !state.hyper.allFinite()) throw std::invalid_argument("log_joint: non-finite state");
  const auto hp = model.decode(state.hyper);
  return model.log_conditional(state.latent, hp) + model.log_hyperprior(hp);
}

inline double log_joint(const ModelSpec& spec, const PairedDataset& data, const ModelState& state) {
  return log_joint(JointModel(spec, data), state);
}

}  // namespace mapval
