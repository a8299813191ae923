#pragma once

#include <string>
#include <vector>

namespace cgnnse::eval {

/// Minimal SVG chart writer for study reports. One series per labelled
/// group; values must be finite and non-negative.
struct ChartSeries {
  std::string label;
  std::vector<double> values;
};

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& categories,
                         const std::vector<ChartSeries>& series,
                         const std::string& y_label);

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<double>& x,
                          const std::vector<ChartSeries>& series,
                          const std::string& x_label, const std::string& y_label);

}  // namespace cgnnse::eval
