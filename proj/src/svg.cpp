#include "gazeprobe/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace gazeprobe::svg {

namespace {

std::string escape(std::string_view s) {
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

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Blue (-1) through white (0) to red (+1), linear in each channel.
std::string colour(double t) {
  t = std::clamp(t, -1.0, 1.0);
  const double lo[3] = {33, 102, 172}, mid[3] = {247, 247, 247}, hi[3] = {178, 24, 43};
  const double* end = t < 0 ? lo : hi;
  const double a = std::abs(t);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(mid[0] + a * (end[0] - mid[0]))),
                static_cast<int>(std::lround(mid[1] + a * (end[1] - mid[1]))),
                static_cast<int>(std::lround(mid[2] + a * (end[2] - mid[2]))));
  return buf;
}

}  // namespace

std::string heatmap(const probe::CorrelationTable& table, const HeatmapOptions& opt) {
  double scale = opt.scale;
  if (scale <= 0.0) {
    for (const auto& row : table.cells) {
      for (const auto& c : row) {
        if (!c.result.degenerate && std::isfinite(c.result.coefficient)) {
          scale = std::max(scale, std::abs(c.result.coefficient));
        }
      }
    }
    if (scale <= 0.0) scale = 1.0;
  }
  const int cs = opt.cell_size;
  const std::size_t n_rows = table.cells.size();
  const std::size_t n_cols = table.col_labels.size();
  const int left = 90, top = 40 + (opt.title.empty() ? 0 : 20);
  const int grid_w = cs * static_cast<int>(n_cols), grid_h = cs * static_cast<int>(n_rows);
  const int legend_x = left + grid_w + 30, legend_h = std::max(grid_h, 120);
  const int width = legend_x + 90, height = top + legend_h + 30;

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
       std::to_string(height) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s += "<defs>\n"
       "<pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
       "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"#ffffff\"/>"
       "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#888888\" stroke-width=\"2\"/></pattern>\n"
       "<linearGradient id=\"scale\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">"
       "<stop offset=\"0\" stop-color=\"" + colour(-1) + "\"/><stop offset=\"0.5\" stop-color=\"" + colour(0) +
       "\"/><stop offset=\"1\" stop-color=\"" + colour(1) + "\"/></linearGradient>\n</defs>\n";
  if (!opt.title.empty()) s += "<text x=\"" + std::to_string(left) + "\" y=\"20\" font-size=\"13\">" + escape(opt.title) + "</text>\n";

  for (std::size_t j = 0; j < n_cols; ++j) {
    const int x = left + cs * static_cast<int>(j) + cs / 2;
    s += "<text class=\"col-label\" x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(top - 6) +
         "\" text-anchor=\"middle\">" + escape(table.col_labels[j]) + "</text>\n";
  }
  for (std::size_t i = 0; i < n_rows; ++i) {
    const int y = top + cs * static_cast<int>(i);
    s += "<text class=\"row-label\" x=\"" + std::to_string(left - 6) + "\" y=\"" + std::to_string(y + cs / 2 + 3) +
         "\" text-anchor=\"end\">" + escape(i < table.row_labels.size() ? table.row_labels[i] : "") + "</text>\n";
    for (std::size_t j = 0; j < table.cells[i].size(); ++j) {
      const auto& r = table.cells[i][j].result;
      const bool undefined = r.degenerate || !std::isfinite(r.coefficient);
      const std::string fill = undefined ? "url(#hatch)" : colour(r.coefficient / scale);
      const std::string tip = undefined ? "undefined (n=" + std::to_string(r.n) + ")"
                                        : fmt("%.4f", r.coefficient) + " p=" + fmt("%.3g", r.p_value) +
                                              " n=" + std::to_string(r.n);
      s += "<rect class=\"cell" + std::string(undefined ? " degenerate" : "") + "\" x=\"" +
           std::to_string(left + cs * static_cast<int>(j)) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
           std::to_string(cs) + "\" height=\"" + std::to_string(cs) + "\" fill=\"" + fill +
           "\" stroke=\"#ffffff\"><title>" + escape(table.row_labels.at(i) + " / " + table.col_labels.at(j) + ": " + tip) +
           "</title></rect>\n";
    }
  }

  s += "<g class=\"legend\">\n<rect x=\"" + std::to_string(legend_x) + "\" y=\"" + std::to_string(top) +
       "\" width=\"14\" height=\"" + std::to_string(legend_h) + "\" fill=\"url(#scale)\" stroke=\"#444444\"/>\n";
  for (double v : {scale, 0.0, -scale}) {
    const double frac = (scale - v) / (2.0 * scale);
    const int y = top + static_cast<int>(std::lround(frac * legend_h));
    s += "<text x=\"" + std::to_string(legend_x + 20) + "\" y=\"" + std::to_string(y + 3) + "\">" + fmt("%+.3f", v) +
         "</text>\n";
  }
  s += "<rect x=\"" + std::to_string(legend_x) + "\" y=\"" + std::to_string(top + legend_h + 8) +
       "\" width=\"14\" height=\"14\" fill=\"url(#hatch)\" stroke=\"#444444\"/><text x=\"" +
       std::to_string(legend_x + 20) + "\" y=\"" + std::to_string(top + legend_h + 19) + "\">undefined</text>\n</g>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace gazeprobe::svg
