#pragma once

#include <string>
#include <vector>

namespace arccm {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  std::vector<PlotSeries> series;
  /// Vertical marker lines at these x positions.
  std::vector<double> markers;
  int width = 720;
  int height = 420;
};

/// Line plot with axes, ticks and a legend, as a standalone SVG document.
std::string RenderSvg(const PlotSpec& spec);
void WriteSvg(const PlotSpec& spec, const std::string& path);

}  // namespace arccm
