#pragma once

#include <string>
#include <vector>

namespace tma {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  std::string comment;  // embedded as an XML comment (provenance)
  bool markers = false;
};

// Self-contained SVG line chart with axes, ticks and a legend.
std::string svg_line_plot(const PlotSpec& spec);

}  // namespace tma
