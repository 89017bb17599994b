#pragma once

// Deterministic SVG scatter plots of 2-D prior clouds.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fpl/error.hpp"

namespace fpl {

struct SvgRect {
  double lo_x, lo_y, hi_x, hi_y;
  std::string color = "red";
};

struct SvgSegment {
  double x1, y1, x2, y2;
  std::string color = "gray";
};

struct SvgOverlays {
  std::vector<SvgRect> boxes;
  std::vector<SvgSegment> segments;
  bool diagonal = true;  // reference line x1 = x2
  std::string title;
};

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Renders flat 2-D points [x0, y0, x1, y1, ...] with equal axis scales.
inline std::string render_svg_scatter(std::span<const double> points, std::size_t dim, const SvgOverlays& overlays = {}) {
  if (dim != 2) throw InvalidArgument("SVG scatter needs 2-D points");
  if (points.size() % 2 != 0) throw InvalidArgument("SVG scatter needs an even number of coordinates");
  constexpr double kSize = 600.0, kMargin = 60.0, kPlot = kSize - 2 * kMargin;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  auto extend = [&](double x, double y) {
    xmin = std::min(xmin, x), xmax = std::max(xmax, x);
    ymin = std::min(ymin, y), ymax = std::max(ymax, y);
  };
  for (std::size_t k = 0; k + 1 < points.size(); k += 2) extend(points[k], points[k + 1]);
  for (const auto& b : overlays.boxes) extend(b.lo_x, b.lo_y), extend(b.hi_x, b.hi_y);
  for (const auto& s : overlays.segments) extend(s.x1, s.y1), extend(s.x2, s.y2);
  if (!(xmin <= xmax)) xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;

  double span = std::max({xmax - xmin, ymax - ymin, 1e-9});
  span *= 1.1;
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  const double x0 = cx - 0.5 * span, y0 = cy - 0.5 * span;
  auto px = [&](double x) { return kMargin + (x - x0) / span * kPlot; };
  auto py = [&](double y) { return kSize - kMargin - (y - y0) / span * kPlot; };
  auto p2 = [](double v) { return detail::fmt("%.2f", v); };

  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"0 0 600 600\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"600\" height=\"600\" fill=\"white\"/>\n";
  if (!overlays.title.empty()) {
    os << "<text x=\"300\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
       << detail::xml_escape(overlays.title) << "</text>\n";
  }
  // Axes and ticks.
  os << "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n"
     << "<rect x=\"" << p2(kMargin) << "\" y=\"" << p2(kMargin) << "\" width=\"" << p2(kPlot) << "\" height=\""
     << p2(kPlot) << "\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double frac = t / 5.0;
    const double gx = kMargin + frac * kPlot, gy = kSize - kMargin - frac * kPlot;
    os << "<line x1=\"" << p2(gx) << "\" y1=\"" << p2(kSize - kMargin) << "\" x2=\"" << p2(gx) << "\" y2=\""
       << p2(kSize - kMargin + 5) << "\"/>\n";
    os << "<line x1=\"" << p2(kMargin - 5) << "\" y1=\"" << p2(gy) << "\" x2=\"" << p2(kMargin) << "\" y2=\""
       << p2(gy) << "\"/>\n";
  }
  os << "</g>\n<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (int t = 0; t <= 5; ++t) {
    const double frac = t / 5.0;
    const double gx = kMargin + frac * kPlot, gy = kSize - kMargin - frac * kPlot;
    os << "<text x=\"" << p2(gx) << "\" y=\"" << p2(kSize - kMargin + 18) << "\" text-anchor=\"middle\">"
       << detail::fmt("%.4g", x0 + frac * span) << "</text>\n";
    os << "<text x=\"" << p2(kMargin - 8) << "\" y=\"" << p2(gy + 4) << "\" text-anchor=\"end\">"
       << detail::fmt("%.4g", y0 + frac * span) << "</text>\n";
  }
  os << "<text x=\"300\" y=\"" << p2(kSize - 15) << "\" text-anchor=\"middle\">x_1</text>\n"
     << "<text x=\"15\" y=\"300\" text-anchor=\"middle\" transform=\"rotate(-90 15 300)\">x_2</text>\n</g>\n";

  if (overlays.diagonal) {
    const double lo = std::max(x0, y0), hi = std::min(x0 + span, y0 + span);
    if (lo < hi) {
      os << "<line x1=\"" << p2(px(lo)) << "\" y1=\"" << p2(py(lo)) << "\" x2=\"" << p2(px(hi)) << "\" y2=\""
         << p2(py(hi)) << "\" stroke=\"gray\" stroke-dasharray=\"6 4\"/>\n";
    }
  }
  os << "<g fill=\"black\" fill-opacity=\"0.6\">\n";
  for (std::size_t k = 0; k + 1 < points.size(); k += 2) {
    os << "<circle cx=\"" << p2(px(points[k])) << "\" cy=\"" << p2(py(points[k + 1])) << "\" r=\"1.5\"/>\n";
  }
  os << "</g>\n";
  for (const auto& s : overlays.segments) {
    os << "<line x1=\"" << p2(px(s.x1)) << "\" y1=\"" << p2(py(s.y1)) << "\" x2=\"" << p2(px(s.x2)) << "\" y2=\""
       << p2(py(s.y2)) << "\" stroke=\"" << detail::xml_escape(s.color) << "\"/>\n";
  }
  for (const auto& b : overlays.boxes) {
    os << "<rect x=\"" << p2(px(b.lo_x)) << "\" y=\"" << p2(py(b.hi_y)) << "\" width=\""
       << p2(px(b.hi_x) - px(b.lo_x)) << "\" height=\"" << p2(py(b.lo_y) - py(b.hi_y)) << "\" fill=\"none\" stroke=\""
       << detail::xml_escape(b.color) << "\" stroke-width=\"2\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void write_svg_scatter(std::span<const double> points, std::size_t dim, const SvgOverlays& overlays,
                              const std::string& path) {
  const std::string doc = render_svg_scatter(points, dim, overlays);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc;
}

}  // namespace fpl
