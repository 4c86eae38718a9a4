#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mapval/graph.hpp"
#include "mapval/io/geojson.hpp"
#include "mapval/model.hpp"
#include "mapval/sampler.hpp"

namespace testing_support {

inline std::string data_path(const std::string& name) { return std::string(MAPVAL_DATA_DIR) + "/" + name; }

inline mapval::AreaGraph path_graph(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return mapval::build_adjacency_from_edges(n, e);
}

inline const std::vector<mapval::io::GeoFeature>& nc_features() {
  static const auto fs = mapval::io::read_geojson(data_path("nc_counties.geojson"));
  return fs;
}

inline std::shared_ptr<const mapval::AreaGraph> nc_graph() {
  static const auto g =
      std::make_shared<const mapval::AreaGraph>(mapval::build_queen_adjacency(mapval::io::geometries(nc_features())));
  return g;
}

/// Axis-aligned square with lower-left corner (x, y).
inline mapval::AreaGeometry square(const std::string& id, double x, double y, double side = 1.0) {
  mapval::AreaGeometry a;
  a.id = id;
  a.parts.push_back({{{x, y}, {x + side, y}, {x + side, y + side}, {x, y + side}, {x, y}}, {}});
  return a;
}

/// Small paired dataset on a path graph.
inline mapval::PairedDataset path_dataset(std::vector<int> ref, std::vector<int> cand, std::vector<double> expected = {}) {
  const int n = static_cast<int>(ref.size());
  mapval::PairedDataset d;
  d.graph = std::make_shared<const mapval::AreaGraph>(path_graph(n));
  d.counts_ref = std::move(ref);
  d.counts_cand = std::move(cand);
  d.population = Eigen::VectorXd::Constant(n, 100.0);
  if (expected.empty())
    d.expected = mapval::internal_standardisation(d.counts_ref, d.population);
  else
    d.expected = Eigen::Map<const Eigen::VectorXd>(expected.data(), n);
  return d;
}

/// Short sampler settings for tests that only exercise plumbing.
inline mapval::SamplerConfig quick_sampler(int warmup = 200, int kept = 200) {
  mapval::SamplerConfig c;
  c.n_warmup = warmup;
  c.n_kept = kept;
  c.threads = 1;
  return c;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("mapval_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing_support
