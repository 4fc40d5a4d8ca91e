#pragma once

#include <string>
#include <vector>

#include "chstab/actuators.hpp"
#include "chstab/grid.hpp"

namespace chstab {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;  // empty picks from the default palette
};

struct PlotOptions {
  std::string title;
  std::string xlabel = "t";
  std::string ylabel;
  bool log_y = true;
  int width = 720;
  int height = 480;
};

/// Line plot; with log_y, nonpositive samples are dropped.
std::string line_plot_svg(const std::vector<PlotSeries>& series, const PlotOptions& opts);

/// Domain outline with order-parameter boxes in red and heat boxes in green.
std::string layout_svg(const ActuatorLayout& layout, const GridSpec& spec, int pixels = 480);

}  // namespace chstab
