#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "creg/cli.hpp"

namespace creg::cli {

namespace {

constexpr double kSize = 320.0;
constexpr double kCenter = kSize / 2.0;
constexpr double kRadius = 120.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Compass angles are counterclockwise from +x with y up; SVG y grows down.
double px(double deg, double r) { return kCenter + r * std::cos(deg * std::numbers::pi / 180.0); }
double py(double deg, double r) { return kCenter - r * std::sin(deg * std::numbers::pi / 180.0); }

std::string escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string arrow(double deg, const char* colour, const char* marker) {
  return "  <line x1=\"" + num(kCenter) + "\" y1=\"" + num(kCenter) + "\" x2=\"" + num(px(deg, kRadius + 12.0)) +
         "\" y2=\"" + num(py(deg, kRadius + 12.0)) + "\" stroke=\"" + colour +
         "\" stroke-width=\"2.5\" marker-end=\"url(#" + marker + ")\"/>\n";
}

}  // namespace

std::string compass_svg(const CompassRecord& r) {
  const int k = static_cast<int>(r.probs.size());
  const double width = 360.0 / k;
  const double top = *std::max_element(r.probs.begin(), r.probs.end());

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kSize) + "\" height=\"" + num(kSize + 30.0) +
         "\" viewBox=\"0 0 " + num(kSize) + " " + num(kSize + 30.0) + "\">\n";
  svg += "  <defs>\n";
  for (const auto& [id, colour] : {std::pair{"true-head", "#d62728"}, std::pair{"peak-head", "#1f77b4"}}) {
    svg += std::string("    <marker id=\"") + id +
           "\" viewBox=\"0 0 10 10\" refX=\"8\" refY=\"5\" markerWidth=\"6\" markerHeight=\"6\" orient=\"auto\">"
           "<path d=\"M0,0 L10,5 L0,10 z\" fill=\"" + colour + "\"/></marker>\n";
  }
  svg += "  </defs>\n";
  svg += "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "  <circle cx=\"" + num(kCenter) + "\" cy=\"" + num(kCenter) + "\" r=\"" + num(kRadius) +
         "\" fill=\"none\" stroke=\"#cccccc\"/>\n";

  for (int s = 0; s < k; ++s) {
    const double len = top > 0.0 ? kRadius * r.probs[static_cast<std::size_t>(s)] / top : 0.0;
    if (len <= 0.0) continue;
    const double a0 = s * width - width / 2.0;
    const double a1 = s * width + width / 2.0;
    svg += "  <path class=\"bar\" data-sector=\"" + std::to_string(s) + "\" d=\"M" + num(kCenter) + "," +
           num(kCenter) + " L" + num(px(a0, len)) + "," + num(py(a0, len)) + " A" + num(len) + "," + num(len) +
           " 0 0 0 " + num(px(a1, len)) + "," + num(py(a1, len)) +
           " Z\" fill=\"#9ecae1\" stroke=\"#3182bd\" stroke-width=\"1\"/>\n";
  }

  svg += arrow(r.true_angle, "#d62728", "true-head");
  svg += arrow(r.peak_angle, "#1f77b4", "peak-head");
  svg += "  <text x=\"8\" y=\"" + num(kSize + 20.0) + "\" font-family=\"sans-serif\" font-size=\"13\">" +
         escape(r.sample_id) + " [" + escape(r.method) + "] DAE = " + num(r.dae) + "&#176;" +
         (r.degenerate ? " (degenerate)" : "") + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace creg::cli
