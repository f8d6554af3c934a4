#pragma once

// Minimal SVG line charts for diagnostics (polylines, axes, legend).

#include <filesystem>
#include <string>
#include <vector>

namespace dlab::report {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;  // non-positive values are dropped
  bool legend = true;
  std::vector<Series> series;
};

std::string render_svg(const Chart& chart);
void write_svg(const std::filesystem::path& path, const Chart& chart);

}  // namespace dlab::report
