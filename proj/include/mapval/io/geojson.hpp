#pragma once

// GeoJSON FeatureCollection reading and writing for areal geometries.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapval/geometry.hpp"

namespace mapval::io {

using json = nlohmann::json;

struct GeoFeature {
  AreaGeometry geometry;
  json properties = json::object();
};

namespace detail {

inline std::string property_id(const json& props, std::size_t index) {
  if (!props.is_object() || !props.contains("id"))
    throw std::invalid_argument("GeoJSON feature " + std::to_string(index) + " has no 'id' property");
  const auto& v = props["id"];
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw std::invalid_argument("GeoJSON feature " + std::to_string(index) + ": 'id' must be a string or integer");
}

inline Ring parse_ring(const json& coords, const std::string& id) {
  if (!coords.is_array()) throw GeometryError(id, "ring is not an array");
  Ring r;
  for (const auto& p : coords) {
    if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number())
      throw GeometryError(id, "malformed coordinate");
    r.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return r;
}

inline Polygon parse_polygon(const json& rings, const std::string& id) {
  if (!rings.is_array() || rings.empty()) throw GeometryError(id, "polygon without rings");
  Polygon poly;
  poly.outer = parse_ring(rings[0], id);
  for (std::size_t k = 1; k < rings.size(); ++k) poly.holes.push_back(parse_ring(rings[k], id));
  return poly;
}

inline json ring_json(const Ring& r) {
  json out = json::array();
  for (const auto& p : r) out.push_back({p.x, p.y});
  return out;
}

}  // namespace detail

inline std::vector<GeoFeature> parse_geojson(const json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features"))
    throw std::invalid_argument("GeoJSON: expected a FeatureCollection");
  std::vector<GeoFeature> out;
  std::size_t index = 0;
  for (const auto& feat : doc["features"]) {
    const json props = feat.contains("properties") ? feat["properties"] : json::object();
    GeoFeature f;
    f.properties = props;
    f.geometry.id = detail::property_id(props, index);
    if (!feat.contains("geometry") || !feat["geometry"].is_object())
      throw GeometryError(f.geometry.id, "missing geometry");
    const auto& g = feat["geometry"];
    const std::string type = g.value("type", "");
    if (type == "Polygon") {
      f.geometry.parts.push_back(detail::parse_polygon(g["coordinates"], f.geometry.id));
    } else if (type == "MultiPolygon") {
      for (const auto& p : g["coordinates"]) f.geometry.parts.push_back(detail::parse_polygon(p, f.geometry.id));
    } else {
      throw GeometryError(f.geometry.id, "unsupported geometry type '" + type + "'");
    }
    out.push_back(std::move(f));
    ++index;
  }
  return out;
}

inline std::vector<GeoFeature> read_geojson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return parse_geojson(doc);
}

inline std::vector<AreaGeometry> geometries(const std::vector<GeoFeature>& fs) {
  std::vector<AreaGeometry> out;
  out.reserve(fs.size());
  for (const auto& f : fs) out.push_back(f.geometry);
  return out;
}

inline json to_geojson(const std::vector<GeoFeature>& fs) {
  json features = json::array();
  for (const auto& f : fs) {
    json coords = json::array();
    for (const auto& part : f.geometry.parts) {
      json rings = json::array();
      rings.push_back(detail::ring_json(part.outer));
      for (const auto& h : part.holes) rings.push_back(detail::ring_json(h));
      coords.push_back(std::move(rings));
    }
    json props = f.properties.is_object() ? f.properties : json::object();
    props["id"] = f.geometry.id;
    features.push_back({{"type", "Feature"},
                        {"properties", props},
                        {"geometry", {{"type", "MultiPolygon"}, {"coordinates", coords}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

}  // namespace mapval::io
