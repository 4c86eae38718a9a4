#pragma once

// Planar polygon geometry for Queen contiguity. Coordinates are snapped to an
// integer grid so that boundary contact is decided with exact integer
// orientation tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mapval {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Closed ring; the closing vertex may or may not repeat the first one.
using Ring = std::vector<Point>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;
};

/// Geometry of one areal unit (a MultiPolygon; a plain polygon has one part).
struct AreaGeometry {
  std::string id;
  std::vector<Polygon> parts;
};

class GeometryError : public std::runtime_error {
 public:
  GeometryError(const std::string& area_id, const std::string& what)
      : std::runtime_error("invalid geometry for area '" + area_id + "': " + what), area_id_(area_id) {}
  const std::string& area_id() const { return area_id_; }

 private:
  std::string area_id_;
};

namespace detail {

struct GridPoint {
  std::int64_t x = 0;
  std::int64_t y = 0;
  bool operator==(const GridPoint&) const = default;
};

struct GridPointHash {
  std::size_t operator()(const GridPoint& p) const noexcept {
    auto h = static_cast<std::uint64_t>(p.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<std::uint64_t>(p.y) + 0x7f4a7c159e3779b9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct Segment {
  GridPoint a;
  GridPoint b;
};

struct Box {
  std::int64_t xmin = std::numeric_limits<std::int64_t>::max();
  std::int64_t ymin = std::numeric_limits<std::int64_t>::max();
  std::int64_t xmax = std::numeric_limits<std::int64_t>::min();
  std::int64_t ymax = std::numeric_limits<std::int64_t>::min();

  void expand(const GridPoint& p) {
    xmin = std::min(xmin, p.x);
    ymin = std::min(ymin, p.y);
    xmax = std::max(xmax, p.x);
    ymax = std::max(ymax, p.y);
  }
  bool overlaps(const Box& o) const {
    return xmin <= o.xmax && o.xmin <= xmax && ymin <= o.ymax && o.ymin <= ymax;
  }
};

inline int orientation(const GridPoint& p, const GridPoint& q, const GridPoint& r) {
  const __int128 v = static_cast<__int128>(q.x - p.x) * (r.y - p.y) -
                     static_cast<__int128>(q.y - p.y) * (r.x - p.x);
  return (v > 0) - (v < 0);
}

inline bool on_segment(const GridPoint& p, const GridPoint& q, const GridPoint& r) {
  // q collinear with p-r; is it within the bounding box?
  return std::min(p.x, r.x) <= q.x && q.x <= std::max(p.x, r.x) && std::min(p.y, r.y) <= q.y &&
         q.y <= std::max(p.y, r.y);
}

/// Closed-segment intersection (touching counts).
inline bool segments_touch(const Segment& s, const Segment& t) {
  const int o1 = orientation(s.a, s.b, t.a);
  const int o2 = orientation(s.a, s.b, t.b);
  const int o3 = orientation(t.a, t.b, s.a);
  const int o4 = orientation(t.a, t.b, s.b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(s.a, t.a, s.b)) return true;
  if (o2 == 0 && on_segment(s.a, t.b, s.b)) return true;
  if (o3 == 0 && on_segment(t.a, s.a, t.b)) return true;
  if (o4 == 0 && on_segment(t.a, s.b, t.b)) return true;
  return false;
}

/// Snapped boundary of one area: all ring segments plus the vertex set.
struct SnappedBoundary {
  std::vector<Segment> segments;
  std::unordered_set<GridPoint, GridPointHash> vertices;
  Box box;
};

inline GridPoint snap(const Point& p, double tol) {
  return {static_cast<std::int64_t>(std::llround(p.x / tol)),
          static_cast<std::int64_t>(std::llround(p.y / tol))};
}

inline std::vector<GridPoint> snap_ring(const Ring& ring, double tol, const std::string& id) {
  std::vector<GridPoint> out;
  out.reserve(ring.size());
  for (const auto& p : ring) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw GeometryError(id, "non-finite coordinate");
    const double limit = 4.0e18 * tol;
    if (std::abs(p.x) > limit || std::abs(p.y) > limit)
      throw GeometryError(id, "coordinate out of range for the snap grid");
    auto g = snap(p, tol);
    if (out.empty() || !(out.back() == g)) out.push_back(g);
  }
  if (out.size() > 1 && out.front() == out.back()) out.pop_back();
  if (out.size() < 3) throw GeometryError(id, "ring with fewer than three distinct vertices");
  return out;
}

/// A ring is simple when non-adjacent edges never touch.
inline void check_simple_ring(const std::vector<GridPoint>& v, const std::string& id) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Segment si{v[i], v[(i + 1) % n]};
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      const Segment sj{v[j], v[(j + 1) % n]};
      if (segments_touch(si, sj)) throw GeometryError(id, "self-intersecting ring");
    }
  }
  // Consecutive edges folding back onto each other also make a degenerate ring.
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = v[i];
    const auto& q = v[(i + 1) % n];
    const auto& r = v[(i + 2) % n];
    if (orientation(p, q, r) == 0) {
      const __int128 dot = static_cast<__int128>(q.x - p.x) * (r.x - q.x) +
                           static_cast<__int128>(q.y - p.y) * (r.y - q.y);
      if (dot < 0) throw GeometryError(id, "self-intersecting ring (spike)");
    }
  }
}

inline SnappedBoundary snap_area(const AreaGeometry& area, double tol) {
  if (area.parts.empty()) throw GeometryError(area.id, "empty geometry");
  SnappedBoundary b;
  auto add_ring = [&](const Ring& ring) {
    auto v = snap_ring(ring, tol, area.id);
    check_simple_ring(v, area.id);
    for (std::size_t i = 0; i < v.size(); ++i) {
      b.segments.push_back({v[i], v[(i + 1) % v.size()]});
      b.vertices.insert(v[i]);
      b.box.expand(v[i]);
    }
  };
  for (const auto& part : area.parts) {
    add_ring(part.outer);
    for (const auto& h : part.holes) add_ring(h);
  }
  return b;
}

inline bool boundaries_touch(const SnappedBoundary& a, const SnappedBoundary& b) {
  if (!a.box.overlaps(b.box)) return false;
  const auto& small = a.vertices.size() <= b.vertices.size() ? a : b;
  const auto& large = a.vertices.size() <= b.vertices.size() ? b : a;
  for (const auto& v : small.vertices)
    if (large.vertices.count(v)) return true;
  for (const auto& s : a.segments) {
    Box sb;
    sb.expand(s.a);
    sb.expand(s.b);
    if (!sb.overlaps(b.box)) continue;
    for (const auto& t : b.segments) {
      Box tb;
      tb.expand(t.a);
      tb.expand(t.b);
      if (sb.overlaps(tb) && segments_touch(s, t)) return true;
    }
  }
  return false;
}

}  // namespace detail
}  // namespace mapval
