#include "bdz/heatmap.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "bdz/csv.hpp"
#include "bdz/error.hpp"

namespace bdz {

namespace {

// Viridis anchors.
constexpr std::array<std::array<int, 3>, 5> kRamp{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
constexpr std::array<const char*, 10> kCategories{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string ramp_color(double t) {
  t = std::clamp(t, 0.0, 1.0) * (kRamp.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), kRamp.size() - 2);
  const double f = t - static_cast<double>(i);
  char buf[8];
  int c[3];
  for (int k = 0; k < 3; ++k) c[k] = static_cast<int>(std::lround(kRamp[i][k] + f * (kRamp[i + 1][k] - kRamp[i][k])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c[0], c[1], c[2]);
  return buf;
}

std::string xml_escape(const std::string& s) {
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

}  // namespace

std::string render_heatmap(const std::vector<std::optional<double>>& values, const GridSpec& spec,
                           const HeatmapOptions& options) {
  spec.validate();
  if (static_cast<int>(values.size()) != spec.cells()) {
    throw Error(ErrorKind::LengthMismatch, "heatmap needs one value per cell");
  }
  const int px = std::max(options.cell_pixels, 1);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& v : values) {
    if (v && std::isfinite(*v)) {
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
  }
  const bool any = lo <= hi;
  auto color = [&](const std::optional<double>& v) -> std::string {
    if (!v || !std::isfinite(*v)) return "#cccccc";
    if (options.categorical) {
      const long long k = std::llround(*v);
      return kCategories[static_cast<std::size_t>(((k % 10) + 10) % 10)];
    }
    return ramp_color(hi > lo ? (*v - lo) / (hi - lo) : 0.5);
  };

  const int top = options.title.empty() ? 4 : 24;
  const int map_w = spec.nx * px;
  const int map_h = spec.ny * px;
  const int legend_w = 110;
  const int width = 4 + map_w + 12 + legend_w;
  const int height = std::max(top + map_h + 4, top + 200);
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" viewBox=\"0 0 %d %d\">\n", width,
                height, width, height);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!options.title.empty()) {
    s += "<text x=\"4\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(options.title) + "</text>\n";
  }
  for (int c = 0; c < spec.cells(); ++c) {
    const int x = 4 + spec.x_index(c) * px;
    const int y = top + (spec.ny - 1 - spec.y_index(c)) * px;
    std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"%s\"/>\n", x, y, px, px,
                  color(values[c]).c_str());
    s += buf;
  }
  const int lx = 4 + map_w + 12;
  if (options.categorical) {
    std::vector<long long> seen;
    for (const auto& v : values) {
      if (v && std::isfinite(*v)) seen.push_back(std::llround(*v));
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    int y = top;
    for (long long k : seen) {
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%d\" width=\"14\" height=\"14\" fill=\"%s\"/>"
                    "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"12\">%lld</text>\n",
                    lx, y, color(static_cast<double>(k)).c_str(), lx + 20, y + 12, k);
      s += buf;
      y += 18;
    }
  } else if (any) {
    const int steps = 32;
    const int bar_h = 160;
    for (int i = 0; i < steps; ++i) {
      const double t = 1.0 - (i + 0.5) / steps;
      std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"16\" height=\"%d\" fill=\"%s\"/>\n", lx,
                    top + i * bar_h / steps, bar_h / steps, ramp_color(hi > lo ? t : 0.5).c_str());
      s += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\">%s</text>\n"
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"11\">%s</text>\n",
                  lx + 22, top + 10, csv::format(hi).c_str(), lx + 22, top + bar_h, csv::format(lo).c_str());
    s += buf;
  }
  s += "</svg>\n";
  return s;
}

void emit_heatmap(const std::vector<std::optional<double>>& values, const GridSpec& spec, const std::string& path,
                  const HeatmapOptions& options) {
  const std::string svg = render_heatmap(values, spec, options);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IOError, "cannot write " + path);
  out << svg;
  if (!out) throw Error(ErrorKind::IOError, "write failed: " + path);
}

}  // namespace bdz
