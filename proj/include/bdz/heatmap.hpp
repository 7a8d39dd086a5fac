#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bdz/census.hpp"

namespace bdz {

struct HeatmapOptions {
  std::string title;
  int cell_pixels = 16;
  /// Treat values as category indices and use a qualitative palette.
  bool categorical = false;
};

/// SVG map with one rectangle per cell (north up, cell 0 bottom-left) and a
/// legend. Missing cells are drawn grey. Output is byte-stable.
std::string render_heatmap(const std::vector<std::optional<double>>& values, const GridSpec& spec,
                           const HeatmapOptions& options = {});

/// Writes render_heatmap to path; throws IOError.
void emit_heatmap(const std::vector<std::optional<double>>& values, const GridSpec& spec, const std::string& path,
                  const HeatmapOptions& options = {});

}  // namespace bdz
