#pragma once

#include <string>

#include "gazeprobe/probe.hpp"

namespace gazeprobe::svg {

struct HeatmapOptions {
  std::string title;
  int cell_size = 28;
  // Colour range is [-scale, scale]; 0 picks the largest |coefficient|.
  double scale = 0.0;
};

// One <rect class="cell"> per table cell on a linear diverging scale, with a
// legend; degenerate cells are hatched.
std::string heatmap(const probe::CorrelationTable& table, const HeatmapOptions& options = {});

}  // namespace gazeprobe::svg
