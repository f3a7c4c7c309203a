#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace mpg {

/// One curve: points plus an optional symmetric confidence band.
struct PlotSeries {
  std::string label;
  std::vector<double> xs, ys;
  std::vector<double> band;  // half-widths; empty for no band
  std::string color = "#1f77b4";
};

struct PlotOptions {
  std::string title, xlabel, ylabel;
  int width = 760, height = 480;
  // horizontal dashed marker (e.g. a minimum-performance line)
  bool has_marker = false;
  double marker_y = 0;
};

namespace detail_svg {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace detail_svg

/// Static SVG line plot with confidence bands; no plotting runtime needed.
inline std::string render_plot(const std::vector<PlotSeries>& series,
                               const PlotOptions& opt) {
  using detail_svg::fmt;
  using detail_svg::tick_label;
  const double ml = 70, mr = 20, mt = 36, mb = 52;
  const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.xs.size(); ++i) {
      double lo = s.ys[i] - (i < s.band.size() ? s.band[i] : 0.0);
      double hi = s.ys[i] + (i < s.band.size() ? s.band[i] : 0.0);
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, lo);
      ymax = std::max(ymax, hi);
    }
  }
  if (opt.has_marker) {
    ymin = std::min(ymin, opt.marker_y);
    ymax = std::max(ymax, opt.marker_y);
  }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
  }
  if (ymin > ymax) {
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return mt + (ymax - y) / (ymax - ymin) * ph; };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(opt.width) + "\" height=\"" +
         std::to_string(opt.height) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">" + opt.title +
         "</text>\n";

  // axes
  out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(ml) +
         "\" y2=\"" + fmt(mt + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(mt + ph) + "\" x2=\"" +
         fmt(ml + pw) + "\" y2=\"" + fmt(mt + ph) + "\" stroke=\"black\"/>\n";

  const int ticks = 6;
  for (int i = 0; i <= ticks; ++i) {
    double xv = xmin + (xmax - xmin) * i / ticks;
    double yv = ymin + (ymax - ymin) * i / ticks;
    out += "<line x1=\"" + fmt(sx(xv)) + "\" y1=\"" + fmt(mt + ph) + "\" x2=\"" +
           fmt(sx(xv)) + "\" y2=\"" + fmt(mt + ph + 5) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + fmt(sx(xv)) + "\" y=\"" + fmt(mt + ph + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + tick_label(xv) + "</text>\n";
    out += "<line x1=\"" + fmt(ml - 5) + "\" y1=\"" + fmt(sy(yv)) + "\" x2=\"" +
           fmt(ml) + "\" y2=\"" + fmt(sy(yv)) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(sy(yv) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + tick_label(yv) + "</text>\n";
  }
  out += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" +
         fmt(static_cast<double>(opt.height) - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">" + opt.xlabel + "</text>\n";
  out += "<text x=\"16\" y=\"" + fmt(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 16 " + fmt(mt + ph / 2) +
         ")\">" + opt.ylabel + "</text>\n";

  if (opt.has_marker) {
    out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(sy(opt.marker_y)) +
           "\" x2=\"" + fmt(ml + pw) + "\" y2=\"" + fmt(sy(opt.marker_y)) +
           "\" stroke=\"#555\" stroke-dasharray=\"6,4\"/>\n";
  }

  for (const auto& s : series) {
    if (!s.band.empty() && s.band.size() == s.ys.size() && s.xs.size() > 1) {
      std::string pts;
      for (size_t i = 0; i < s.xs.size(); ++i)
        pts += fmt(sx(s.xs[i])) + "," + fmt(sy(s.ys[i] + s.band[i])) + " ";
      for (size_t i = s.xs.size(); i-- > 0;)
        pts += fmt(sx(s.xs[i])) + "," + fmt(sy(s.ys[i] - s.band[i])) + " ";
      out += "<polygon points=\"" + pts + "\" fill=\"" + s.color +
             "\" opacity=\"0.18\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (size_t i = 0; i < s.xs.size(); ++i)
      pts += fmt(sx(s.xs[i])) + "," + fmt(sy(s.ys[i])) + " ";
    out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" +
           s.color + "\" stroke-width=\"1.8\"/>\n";
  }

  double ly = mt + 8;
  for (const auto& s : series) {
    out += "<line x1=\"" + fmt(ml + pw - 150) + "\" y1=\"" + fmt(ly) +
           "\" x2=\"" + fmt(ml + pw - 126) + "\" y2=\"" + fmt(ly) +
           "\" stroke=\"" + s.color + "\" stroke-width=\"2\"/>\n";
    out += "<text x=\"" + fmt(ml + pw - 120) + "\" y=\"" + fmt(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + s.label +
           "</text>\n";
    ly += 16;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace mpg
