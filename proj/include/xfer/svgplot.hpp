#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "xfer/sweep.hpp"

namespace xfer {

// Static SVG learning-curve plots: per metric, one mean curve per init mode
// with a translucent min..max band over seeds. x is the training-size
// fraction, y the metric value; both axes span [0,1].

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline const char* mode_color(InitMode m) {
  switch (m) {
    case InitMode::Direct: return "#7f7f7f";
    case InitMode::GenericPretrained: return "#1f77b4";
    case InitMode::SourcePretrained: return "#d62728";
  }
  return "#000000";
}

}  // namespace detail

inline std::string learning_curve_svg(const std::string& metric_name,
                                      const std::vector<std::pair<InitMode, std::vector<CurvePoint>>>& series) {
  const double width = 640, height = 440;
  const double left = 70, right = 610, top = 40, bottom = 390;
  auto sx = [&](double x) { return left + (right - left) * x; };
  auto sy = [&](double y) { return bottom - (bottom - top) * y; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << width << " " << height
     << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << (width / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\">"
     << metric_name << " vs training size</text>\n";

  // axes and grid
  for (int i = 0; i <= 10; i += 2) {
    const double v = i / 10.0;
    os << "<line x1=\"" << detail::svg_num(sx(v)) << "\" y1=\"" << detail::svg_num(top)
       << "\" x2=\"" << detail::svg_num(sx(v)) << "\" y2=\"" << detail::svg_num(bottom)
       << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<line x1=\"" << detail::svg_num(left) << "\" y1=\"" << detail::svg_num(sy(v))
       << "\" x2=\"" << detail::svg_num(right) << "\" y2=\"" << detail::svg_num(sy(v))
       << "\" stroke=\"#e0e0e0\"/>\n";
    os << "<text x=\"" << detail::svg_num(sx(v)) << "\" y=\"" << detail::svg_num(bottom + 20)
       << "\" text-anchor=\"middle\">" << detail::svg_num(v) << "</text>\n";
    os << "<text x=\"" << detail::svg_num(left - 10) << "\" y=\"" << detail::svg_num(sy(v) + 4)
       << "\" text-anchor=\"end\">" << detail::svg_num(v) << "</text>\n";
  }
  os << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\""
     << bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (left + right) / 2 << "\" y=\"" << (height - 14)
     << "\" text-anchor=\"middle\">training size fraction</text>\n";

  for (const auto& [mode, points] : series) {
    if (points.empty()) continue;
    const char* color = detail::mode_color(mode);
    // min..max band
    std::ostringstream band;
    for (const auto& p : points) {
      band << detail::svg_num(sx(p.train_size)) << "," << detail::svg_num(sy(p.max)) << " ";
    }
    for (auto it = points.rbegin(); it != points.rend(); ++it) {
      band << detail::svg_num(sx(it->train_size)) << "," << detail::svg_num(sy(it->min)) << " ";
    }
    os << "<polygon points=\"" << band.str() << "\" fill=\"" << color
       << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    // mean curve
    std::ostringstream poly;
    for (const auto& p : points) {
      poly << detail::svg_num(sx(p.train_size)) << "," << detail::svg_num(sy(p.mean)) << " ";
    }
    os << "<polyline points=\"" << poly.str() << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
  }

  // legend
  double ly = top + 8;
  for (const auto& [mode, points] : series) {
    (void)points;
    const char* color = detail::mode_color(mode);
    os << "<line x1=\"" << (right - 120) << "\" y1=\"" << ly << "\" x2=\"" << (right - 96)
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << (right - 90) << "\" y=\"" << (ly + 4) << "\">" << to_string(mode)
       << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace xfer
