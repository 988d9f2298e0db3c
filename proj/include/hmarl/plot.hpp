#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "hmarl/errors.hpp"
#include "hmarl/io.hpp"

namespace hmarl::plot {

struct Series {
  std::string label;
  std::vector<io::AggregateRow> rows;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                           "#9467bd", "#ff7f0e", "#8c564b"};
inline constexpr int kPaletteSize = 6;

inline std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Extent {
  double lo = 0.0, hi = 1.0;
  void widen(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

// A band whose extent collapses still needs a drawable range.
inline void pad(Extent& e, double frac) {
  if (e.hi <= e.lo) {
    e.lo -= 1.0;
    e.hi += 1.0;
    return;
  }
  const double m = (e.hi - e.lo) * frac;
  e.lo -= m;
  e.hi += m;
}

struct PanelSpec {
  double x0, y0, w, h;  // plot area in svg coordinates
  Extent xd, yd;
  double x(double v) const {
    return xd.hi == xd.lo ? x0 + w / 2 : x0 + (v - xd.lo) / (xd.hi - xd.lo) * w;
  }
  double y(double v) const { return y0 + h - (v - yd.lo) / (yd.hi - yd.lo) * h; }
};

// Curves are thinned to roughly one point per horizontal pixel; the last row
// is always kept so the curve reaches the right edge.
inline std::vector<const io::AggregateRow*> thin(
    const std::vector<io::AggregateRow>& rows, int max_points) {
  std::vector<const io::AggregateRow*> out;
  const std::size_t stride =
      std::max<std::size_t>(1, rows.size() / static_cast<std::size_t>(max_points));
  for (std::size_t i = 0; i < rows.size(); i += stride) out.push_back(&rows[i]);
  if (out.back() != &rows.back()) out.push_back(&rows.back());
  return out;
}

template <typename Mean, typename Std>
inline void draw_panel(std::string& svg, const PanelSpec& p,
                       const std::vector<Series>& series,
                       const std::string& title, Mean mean_of, Std std_of) {
  svg += "<rect class=\"frame\" x=\"" + num(p.x0) + "\" y=\"" + num(p.y0) +
         "\" width=\"" + num(p.w) + "\" height=\"" + num(p.h) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";
  svg += "<text x=\"" + num(p.x0) + "\" y=\"" + num(p.y0 - 8) +
         "\" font-size=\"13\" fill=\"#222\">" + xml_escape(title) + "</text>\n";

  for (int t = 0; t <= 4; ++t) {
    const double fx = p.xd.lo + (p.xd.hi - p.xd.lo) * t / 4.0;
    const double fy = p.yd.lo + (p.yd.hi - p.yd.lo) * t / 4.0;
    const double gx = p.x(fx);
    const double gy = p.y(fy);
    svg += "<line x1=\"" + num(gx) + "\" y1=\"" + num(p.y0 + p.h) + "\" x2=\"" +
           num(gx) + "\" y2=\"" + num(p.y0 + p.h + 4) + "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + num(gx) + "\" y=\"" + num(p.y0 + p.h + 16) +
           "\" font-size=\"10\" text-anchor=\"middle\" fill=\"#222\">" +
           num(fx) + "</text>\n";
    svg += "<line x1=\"" + num(p.x0 - 4) + "\" y1=\"" + num(gy) + "\" x2=\"" +
           num(p.x0) + "\" y2=\"" + num(gy) + "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + num(p.x0 - 6) + "\" y=\"" + num(gy + 3) +
           "\" font-size=\"10\" text-anchor=\"end\" fill=\"#222\">" + num(fy) +
           "</text>\n";
  }

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % kPaletteSize];
    const auto pts = thin(series[s].rows, static_cast<int>(p.w));

    std::string band = "M";
    for (const auto* r : pts)
      band += num(p.x(r->episode)) + " " + num(p.y(mean_of(*r) + std_of(*r))) + " L";
    band.pop_back();  // trailing L
    for (auto it = pts.rbegin(); it != pts.rend(); ++it)
      band += "L" + num(p.x((*it)->episode)) + " " +
              num(p.y(mean_of(**it) - std_of(**it))) + " ";
    band += "Z";
    svg += "<path class=\"band\" d=\"" + band + "\" fill=\"" + color +
           "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";

    std::string line = "M";
    for (const auto* r : pts)
      line += num(p.x(r->episode)) + " " + num(p.y(mean_of(*r))) + " L";
    line.pop_back();
    svg += "<path class=\"line\" d=\"" + line + "\" fill=\"none\" stroke=\"" +
           color + "\" stroke-width=\"1.5\"/>\n";
  }
}

}  // namespace detail

// Two stacked panels over the episode axis: mean reward and mean step count,
// each with a one-standard-deviation band per series.
inline std::string render_svg(const std::vector<Series>& series, int width = 960,
                              int height = 640) {
  if (series.empty()) throw ArgumentError("no series to plot");
  for (const Series& s : series)
    if (s.rows.empty())
      throw ArgumentError("series '" + s.label + "' has no rows");

  const double e0 = static_cast<double>(series[0].rows[0].episode);
  detail::Extent xd{e0, e0};
  detail::Extent yr{series[0].rows[0].mean_reward, series[0].rows[0].mean_reward};
  detail::Extent ys{series[0].rows[0].mean_steps, series[0].rows[0].mean_steps};
  for (const Series& s : series)
    for (const io::AggregateRow& r : s.rows) {
      xd.widen(r.episode);
      yr.widen(r.mean_reward - r.std_reward);
      yr.widen(r.mean_reward + r.std_reward);
      ys.widen(r.mean_steps - r.std_steps);
      ys.widen(r.mean_steps + r.std_steps);
    }
  detail::pad(yr, 0.05);
  detail::pad(ys, 0.05);

  const double left = 64, right = 18, top = 30, bottom = 40, gap = 44;
  const double pw = width - left - right;
  const double ph = (height - top - bottom - gap) / 2;
  detail::PanelSpec reward{left, top, pw, ph, xd, yr};
  detail::PanelSpec steps{left, top + ph + gap, pw, ph, xd, ys};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(width) + "\" height=\"" +
                    std::to_string(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  detail::draw_panel(svg, reward, series, "reward per episode",
                     [](const io::AggregateRow& r) { return r.mean_reward; },
                     [](const io::AggregateRow& r) { return r.std_reward; });
  detail::draw_panel(svg, steps, series, "steps per episode",
                     [](const io::AggregateRow& r) { return r.mean_steps; },
                     [](const io::AggregateRow& r) { return r.std_steps; });
  svg += "<text x=\"" + detail::num(left + pw / 2) + "\" y=\"" +
         detail::num(height - 10) +
         "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#222\">episode"
         "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = detail::kPalette[s % detail::kPaletteSize];
    const double lx = left + 10;
    const double ly = top + 14 + 16 * static_cast<double>(s);
    svg += "<line class=\"legend\" x1=\"" + detail::num(lx) + "\" y1=\"" +
           detail::num(ly) + "\" x2=\"" + detail::num(lx + 22) + "\" y2=\"" +
           detail::num(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + detail::num(lx + 28) + "\" y=\"" +
           detail::num(ly + 4) + "\" font-size=\"11\" fill=\"#222\">" +
           detail::xml_escape(series[s].label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace hmarl::plot
