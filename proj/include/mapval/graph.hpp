#pragma once

// Areal adjacency structure and the ICAR precision algebra.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "mapval/geometry.hpp"

namespace mapval {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Connected components of an undirected graph given as sorted adjacency lists.
/// Components are listed in order of their smallest member.
inline std::vector<std::vector<int>> connected_components(const std::vector<std::vector<int>>& nbrs) {
  const int n = static_cast<int>(nbrs.size());
  std::vector<int> label(n, -1);
  std::vector<std::vector<int>> comps;
  for (int s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    const int c = static_cast<int>(comps.size());
    comps.emplace_back();
    std::queue<int> q;
    q.push(s);
    label[s] = c;
    while (!q.empty()) {
      const int i = q.front();
      q.pop();
      comps[c].push_back(i);
      for (int j : nbrs[i])
        if (label[j] < 0) {
          label[j] = c;
          q.push(j);
        }
    }
    std::sort(comps[c].begin(), comps[c].end());
  }
  return comps;
}

/// Q = diag(degrees) - W, built from integer counts so row sums are exactly zero.
inline SparseMatrix icar_precision_from(const std::vector<std::vector<int>>& nbrs) {
  const int n = static_cast<int>(nbrs.size());
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, static_cast<double>(nbrs[i].size()));
    for (int j : nbrs[i]) t.emplace_back(i, j, -1.0);
  }
  SparseMatrix q(n, n);
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

/// Geometric mean of the marginal variances of the sum-to-zero constrained
/// ICAR field with precision Q, over all areas in non-singleton components.
///
/// Per component the constrained covariance is P (Q_c + jI)^{-1} P with P the
/// centring projector and j = 1e-9 times the mean diagonal of Q_c. The
/// right-hand sides are projected first so the jitter direction never enters
/// the solve.
inline double compute_icar_scaling(const SparseMatrix& q, const std::vector<std::vector<int>>& components) {
  double log_sum = 0.0;
  std::size_t count = 0;
  for (const auto& comp : components) {
    const int m = static_cast<int>(comp.size());
    if (m < 2) continue;
    std::vector<int> local(q.rows(), -1);
    for (int k = 0; k < m; ++k) local[comp[k]] = k;

    std::vector<Eigen::Triplet<double>> t;
    double diag_sum = 0.0;
    for (int k = 0; k < m; ++k) {
      for (SparseMatrix::InnerIterator it(q, comp[k]); it; ++it) {
        const int r = local[it.row()];
        if (r < 0) throw std::invalid_argument("compute_icar_scaling: component is not closed under adjacency");
        t.emplace_back(r, k, it.value());
        if (r == k) diag_sum += it.value();
      }
    }
    const double jitter = 1e-9 * diag_sum / m;
    for (int k = 0; k < m; ++k) t.emplace_back(k, k, jitter);
    SparseMatrix qc(m, m);
    qc.setFromTriplets(t.begin(), t.end());

    Eigen::SimplicialLDLT<SparseMatrix> solver(qc);
    if (solver.info() != Eigen::Success) throw std::runtime_error("compute_icar_scaling: factorisation failed");
    Eigen::VectorXd rhs(m);
    for (int k = 0; k < m; ++k) {
      rhs.setConstant(-1.0 / m);
      rhs[k] += 1.0;
      Eigen::VectorXd x = solver.solve(rhs);
      x.array() -= x.mean();
      const double var = x[k];
      if (!(var > 0.0)) throw std::runtime_error("compute_icar_scaling: non-positive marginal variance");
      log_sum += std::log(var);
      ++count;
    }
  }
  if (count == 0)
    throw std::invalid_argument("compute_icar_scaling: every component is a singleton; no structured variation");
  return std::exp(log_sum / static_cast<double>(count));
}

/// Areal units with their neighbourhood structure. Immutable once built.
class AreaGraph {
 public:
  AreaGraph() = default;

  /// Build from symmetric, self-loop free, sorted neighbour lists.
  static AreaGraph from_neighbours(std::vector<std::string> ids, std::vector<std::vector<int>> nbrs) {
    if (ids.size() != nbrs.size()) throw std::invalid_argument("AreaGraph: ids and neighbour lists differ in length");
    AreaGraph g;
    g.ids_ = std::move(ids);
    g.nbrs_ = std::move(nbrs);
    const int n = static_cast<int>(g.nbrs_.size());
    for (int i = 0; i < n; ++i) {
      auto& v = g.nbrs_[i];
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
      for (int j : v) {
        if (j == i) throw std::invalid_argument("AreaGraph: self-loop at area " + std::to_string(i));
        if (j < 0 || j >= n) throw std::invalid_argument("AreaGraph: neighbour index out of range");
      }
    }
    for (int i = 0; i < n; ++i)
      for (int j : g.nbrs_[i])
        if (!std::binary_search(g.nbrs_[j].begin(), g.nbrs_[j].end(), i))
          throw std::invalid_argument("AreaGraph: adjacency is not symmetric");
    std::map<std::string, int> seen;
    for (int i = 0; i < n; ++i)
      if (!seen.emplace(g.ids_[i], i).second) throw std::invalid_argument("AreaGraph: duplicate area id '" + g.ids_[i] + "'");
    g.index_ = std::move(seen);

    g.degrees_.resize(n);
    for (int i = 0; i < n; ++i) g.degrees_[i] = static_cast<int>(g.nbrs_[i].size());
    g.q_ = icar_precision_from(g.nbrs_);
    g.components_ = connected_components(g.nbrs_);
    g.component_of_.assign(n, -1);
    for (std::size_t c = 0; c < g.components_.size(); ++c)
      for (int i : g.components_[c]) g.component_of_[i] = static_cast<int>(c);
    const bool structured =
        std::any_of(g.components_.begin(), g.components_.end(), [](const auto& c) { return c.size() >= 2; });
    if (structured) g.scaling_ = compute_icar_scaling(g.q_, g.components_);
    return g;
  }

  int n_areas() const { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& area_ids() const { return ids_; }
  const std::vector<int>& neighbours(int i) const { return nbrs_.at(i); }
  const std::vector<std::vector<int>>& adjacency() const { return nbrs_; }
  const std::vector<int>& degrees() const { return degrees_; }
  bool adjacent(int i, int j) const { return std::binary_search(nbrs_.at(i).begin(), nbrs_.at(i).end(), j); }
  std::size_t n_edges() const {
    std::size_t s = 0;
    for (const auto& v : nbrs_) s += v.size();
    return s / 2;
  }

  /// Q(W) = diag(degrees) - W.
  const SparseMatrix& icar_precision() const { return q_; }

  bool has_icar_structure() const { return scaling_.has_value(); }
  /// Geometric-mean marginal variance of the constrained ICAR field.
  double scaling_factor() const {
    if (!scaling_) throw std::logic_error("AreaGraph: no component of size >= 2, ICAR scaling undefined");
    return *scaling_;
  }
  /// Precision of the scaled ICAR field, scaling_factor * Q.
  SparseMatrix scaled_icar_precision() const { return scaling_factor() * q_; }

  const std::vector<std::vector<int>>& components() const { return components_; }
  const std::vector<int>& component_of() const { return component_of_; }
  std::vector<int> islands() const {
    std::vector<int> out;
    for (int i = 0; i < n_areas(); ++i)
      if (degrees_[i] == 0) out.push_back(i);
    return out;
  }

  int index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("AreaGraph: unknown area id '" + id + "'");
    return it->second;
  }
  bool contains(const std::string& id) const { return index_.count(id) > 0; }

  bool operator==(const AreaGraph& o) const { return ids_ == o.ids_ && nbrs_ == o.nbrs_; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::vector<int>> nbrs_;
  std::map<std::string, int> index_;
  std::vector<int> degrees_;
  SparseMatrix q_;
  std::optional<double> scaling_;
  std::vector<std::vector<int>> components_;
  std::vector<int> component_of_;
};

inline std::vector<std::string> default_area_ids(int n) {
  std::vector<std::string> ids(n);
  for (int i = 0; i < n; ++i) ids[i] = std::to_string(i);
  return ids;
}

/// Symmetrised graph from an index edge list. Duplicate edges collapse silently.
inline AreaGraph build_adjacency_from_edges(int n_areas, const std::vector<std::pair<int, int>>& edges,
                                            std::vector<std::string> ids = {}) {
  if (n_areas < 1) throw std::invalid_argument("build_adjacency_from_edges: need at least one area");
  if (ids.empty()) ids = default_area_ids(n_areas);
  if (static_cast<int>(ids.size()) != n_areas) throw std::invalid_argument("build_adjacency_from_edges: id count mismatch");
  std::vector<std::vector<int>> nbrs(n_areas);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_areas || b >= n_areas)
      throw std::out_of_range("build_adjacency_from_edges: edge (" + std::to_string(a) + "," + std::to_string(b) +
                              ") out of range");
    if (a == b) throw std::invalid_argument("build_adjacency_from_edges: self-loop at area " + std::to_string(a));
    nbrs[a].push_back(b);
    nbrs[b].push_back(a);
  }
  return AreaGraph::from_neighbours(std::move(ids), std::move(nbrs));
}

/// Queen contiguity: areas are adjacent iff their boundaries share at least one
/// point (edge or corner) after snapping coordinates to a grid of `snap_tolerance`.
inline AreaGraph build_queen_adjacency(const std::vector<AreaGeometry>& areas, double snap_tolerance = 1e-9) {
  if (areas.size() < 2) throw std::invalid_argument("build_queen_adjacency: need at least two areas");
  if (!(snap_tolerance > 0.0)) throw std::invalid_argument("build_queen_adjacency: snap tolerance must be positive");
  const int n = static_cast<int>(areas.size());
  std::vector<detail::SnappedBoundary> bounds;
  bounds.reserve(n);
  std::vector<std::string> ids;
  for (const auto& a : areas) {
    bounds.push_back(detail::snap_area(a, snap_tolerance));
    ids.push_back(a.id);
  }
  std::vector<std::vector<int>> nbrs(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (detail::boundaries_touch(bounds[i], bounds[j])) {
        nbrs[i].push_back(j);
        nbrs[j].push_back(i);
      }
  return AreaGraph::from_neighbours(std::move(ids), std::move(nbrs));
}

/// Induced subgraph on `keep` (in the given order).
inline AreaGraph subgraph(const AreaGraph& g, const std::vector<int>& keep) {
  std::vector<int> pos(g.n_areas(), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) pos[keep[k]] = static_cast<int>(k);
  std::vector<std::string> ids;
  std::vector<std::vector<int>> nbrs(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    ids.push_back(g.area_ids()[keep[k]]);
    for (int j : g.neighbours(keep[k]))
      if (pos[j] >= 0) nbrs[k].push_back(pos[j]);
  }
  return AreaGraph::from_neighbours(std::move(ids), std::move(nbrs));
}

}  // namespace mapval
