#pragma once

// Static SVG output: choropleth maps and metric heatmaps. Output is plain
// text built with fixed formatting so it is byte-stable across runs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mapval/geometry.hpp"

namespace mapval::io {

struct Rgb {
  int r = 0, g = 0, b = 0;
  std::string hex() const {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
  }
};

/// Colour scale. Diverging: blue below `center`, red above, white at it, with
/// `half_range` mapped to full saturation. Sequential: white to red over [lo, hi].
struct ColourScale {
  enum class Kind { Diverging, Sequential };
  Kind kind = Kind::Sequential;
  double center = 0.0;
  double half_range = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  static ColourScale diverging(double center, double half_range) {
    ColourScale s;
    s.kind = Kind::Diverging;
    s.center = center;
    s.half_range = half_range > 0.0 ? half_range : 1.0;
    return s;
  }
  static ColourScale sequential(double lo, double hi) {
    ColourScale s;
    s.lo = lo;
    s.hi = hi > lo ? hi : lo + 1.0;
    return s;
  }

  Rgb operator()(double v) const {
    if (!std::isfinite(v)) return {204, 204, 204};
    auto mix = [](Rgb a, Rgb b, double t) {
      t = std::clamp(t, 0.0, 1.0);
      return Rgb{static_cast<int>(std::lround(a.r + (b.r - a.r) * t)), static_cast<int>(std::lround(a.g + (b.g - a.g) * t)),
                 static_cast<int>(std::lround(a.b + (b.b - a.b) * t))};
    };
    const Rgb white{247, 247, 247}, red{178, 24, 43}, blue{33, 102, 172};
    if (kind == Kind::Sequential) return mix(white, red, (v - lo) / (hi - lo));
    const double t = (v - center) / half_range;
    return t >= 0 ? mix(white, red, t) : mix(white, blue, -t);
  }
};

/// Symmetric half range covering every finite value.
inline double covering_half_range(const std::vector<double>& v, double center) {
  double m = 0.0;
  for (double x : v)
    if (std::isfinite(x)) m = std::max(m, std::abs(x - center));
  return m > 0.0 ? m : 1.0;
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o.push_back(c);
    }
  }
  return o;
}

inline std::string header(int w, int h, const std::string& comment) {
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (!comment.empty()) os << "<!-- " << comment << " -->\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << " " << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  return os.str();
}

}  // namespace detail

/// Choropleth of one value per area, areas in `geoms` order. The legend shows
/// the scale's end points and centre.
inline std::string choropleth_svg(const std::vector<AreaGeometry>& geoms, const std::vector<double>& values,
                                  const ColourScale& scale, const std::string& title, const std::string& comment = {},
                                  int width = 800) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  for (const auto& g : geoms)
    for (const auto& p : g.parts)
      for (const auto& pt : p.outer) {
        x0 = std::min(x0, pt.x), x1 = std::max(x1, pt.x);
        y0 = std::min(y0, pt.y), y1 = std::max(y1, pt.y);
      }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  const double margin = 20.0, top = 30.0, legend = 50.0;
  const double s = (width - 2 * margin) / (x1 - x0);
  const int height = static_cast<int>(std::ceil(top + (y1 - y0) * s + legend + margin));
  auto px = [&](const Point& p) { return detail::num(margin + (p.x - x0) * s) + "," + detail::num(top + (y1 - p.y) * s); };

  std::ostringstream os;
  os << detail::header(width, height, comment);
  os << "<text x=\"" << margin << "\" y=\"18\" font-size=\"14\">" << detail::xml_escape(title) << "</text>\n";
  for (std::size_t i = 0; i < geoms.size(); ++i) {
    const double v = i < values.size() ? values[i] : std::numeric_limits<double>::quiet_NaN();
    os << "<path id=\"" << detail::xml_escape(geoms[i].id) << "\" fill=\"" << scale(v).hex()
       << "\" stroke=\"#555555\" stroke-width=\"0.4\" fill-rule=\"evenodd\" d=\"";
    for (const auto& p : geoms[i].parts) {
      auto ring = [&](const Ring& r) {
        for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "L" : "M") << px(r[k]);
        os << "Z";
      };
      ring(p.outer);
      for (const auto& h : p.holes) ring(h);
    }
    os << "\"><title>" << detail::xml_escape(geoms[i].id) << ": " << detail::num(v) << "</title></path>\n";
  }
  // Legend bar.
  const double ly = height - legend - margin + 15, lw = 200.0;
  double a, b;
  if (scale.kind == ColourScale::Kind::Diverging) {
    a = scale.center - scale.half_range;
    b = scale.center + scale.half_range;
  } else {
    a = scale.lo;
    b = scale.hi;
  }
  for (int k = 0; k < 20; ++k) {
    const double v = a + (b - a) * (k + 0.5) / 20.0;
    os << "<rect x=\"" << detail::num(margin + k * lw / 20) << "\" y=\"" << detail::num(ly) << "\" width=\""
       << detail::num(lw / 20) << "\" height=\"12\" fill=\"" << scale(v).hex() << "\"/>\n";
  }
  char buf[64];
  auto label = [&](double x, double v) {
    std::snprintf(buf, sizeof buf, "%.3g", v);
    os << "<text x=\"" << detail::num(x) << "\" y=\"" << detail::num(ly + 26) << "\" text-anchor=\"middle\">" << buf
       << "</text>\n";
  };
  label(margin, a);
  label(margin + lw / 2, (a + b) / 2);
  label(margin + lw, b);
  os << "</svg>\n";
  return os.str();
}

/// Heatmap of a rows x cols table in [0,1]; missing cells are grey and marked NA.
inline std::string heatmap_svg(const std::vector<std::string>& row_labels, const std::vector<std::string>& col_labels,
                               const std::vector<std::vector<std::optional<double>>>& cells, const std::string& title,
                               const std::string& comment = {}) {
  const int cw = 64, ch = 20, left = 200, top = 110;
  const int width = left + cw * static_cast<int>(col_labels.size()) + 20;
  const int height = top + ch * static_cast<int>(row_labels.size()) + 20;
  const ColourScale scale = ColourScale::sequential(0.0, 1.0);
  std::ostringstream os;
  os << detail::header(width, height, comment);
  os << "<text x=\"10\" y=\"18\" font-size=\"14\">" << detail::xml_escape(title) << "</text>\n";
  for (std::size_t c = 0; c < col_labels.size(); ++c) {
    const int x = left + static_cast<int>(c) * cw + cw / 2;
    os << "<text x=\"" << x << "\" y=\"" << top - 6 << "\" transform=\"rotate(-60 " << x << " " << top - 6 << ")\">"
       << detail::xml_escape(col_labels[c]) << "</text>\n";
  }
  char buf[32];
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    const int y = top + static_cast<int>(r) * ch;
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + 14 << "\" text-anchor=\"end\">" << detail::xml_escape(row_labels[r])
       << "</text>\n";
    for (std::size_t c = 0; c < col_labels.size(); ++c) {
      const auto& v = r < cells.size() && c < cells[r].size() ? cells[r][c] : std::optional<double>{};
      const int x = left + static_cast<int>(c) * cw;
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\""
         << (v ? scale(*v).hex() : std::string("#cccccc")) << "\" stroke=\"#ffffff\"/>\n";
      if (v)
        std::snprintf(buf, sizeof buf, "%.2f", *v);
      else
        std::snprintf(buf, sizeof buf, "NA");
      os << "<text x=\"" << x + cw / 2 << "\" y=\"" << y + 14 << "\" text-anchor=\"middle\">" << buf << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mapval::io
