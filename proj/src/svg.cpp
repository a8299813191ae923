#include "cgnnse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cgnnse/errors.hpp"

namespace cgnnse::eval {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 30;
constexpr int kMarginTop = 50;
constexpr int kMarginBottom = 70;

const char* kPalette[] = {"#4878d0", "#ee854a", "#6acc64", "#d65f5f",
                          "#956cb4", "#8c613c", "#dc7ec0", "#797979"};

double nice_max(double v) {
  if (v <= 0.0) return 1.0;
  const double mag = std::pow(10.0, std::floor(std::log10(v)));
  const double frac = v / mag;
  double nice = 10.0;
  if (frac <= 1.0) nice = 1.0;
  else if (frac <= 2.0) nice = 2.0;
  else if (frac <= 5.0) nice = 5.0;
  return nice * mag;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void open_svg(std::ostringstream& svg, const std::string& title,
              const std::string& y_label, double y_max) {
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape(title) << "</text>\n";
  // y axis with 5 ticks
  const int plot_h = kHeight - kMarginTop - kMarginBottom;
  for (int t = 0; t <= 5; ++t) {
    const double frac = static_cast<double>(t) / 5.0;
    const int y = kMarginTop + static_cast<int>((1.0 - frac) * plot_h);
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << y << "\" x2=\""
        << kWidth - kMarginRight << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    std::ostringstream lab;
    lab.precision(4);
    lab << y_max * frac;
    svg << "<text x=\"" << kMarginLeft - 6 << "\" y=\"" << y + 4
        << "\" text-anchor=\"end\">" << lab.str() << "</text>\n";
  }
  svg << "<text x=\"16\" y=\"" << kMarginTop + plot_h / 2
      << "\" transform=\"rotate(-90 16," << kMarginTop + plot_h / 2
      << ")\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& svg, const std::vector<ChartSeries>& series) {
  int x = kMarginLeft;
  const int y = kHeight - 16;
  for (std::size_t s = 0; s < series.size(); ++s) {
    svg << "<rect x=\"" << x << "\" y=\"" << y - 10 << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[s % 8] << "\"/>\n";
    svg << "<text x=\"" << x + 16 << "\" y=\"" << y << "\">" << escape(series[s].label)
        << "</text>\n";
    x += 22 + 7 * static_cast<int>(series[s].label.size()) + 14;
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open for writing: " + path);
  out << content;
}

}  // namespace

void write_bar_chart_svg(const std::string& path, const std::string& title,
                         const std::vector<std::string>& categories,
                         const std::vector<ChartSeries>& series,
                         const std::string& y_label) {
  double vmax = 0.0;
  for (const ChartSeries& s : series) {
    if (s.values.size() != categories.size()) {
      throw InputError("bar chart: series length does not match categories");
    }
    for (double v : s.values) vmax = std::max(vmax, v);
  }
  const double y_max = nice_max(vmax);
  std::ostringstream svg;
  open_svg(svg, title, y_label, y_max);

  const int plot_w = kWidth - kMarginLeft - kMarginRight;
  const int plot_h = kHeight - kMarginTop - kMarginBottom;
  const std::size_t n = categories.size();
  const double group_w = static_cast<double>(plot_w) / static_cast<double>(n);
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[c];
      const double h = plot_h * v / y_max;
      const double x = kMarginLeft + group_w * (static_cast<double>(c) + 0.1) +
                       bar_w * static_cast<double>(s);
      svg << "<rect x=\"" << x << "\" y=\"" << kMarginTop + plot_h - h << "\" width=\""
          << bar_w << "\" height=\"" << h << "\" fill=\"" << kPalette[s % 8] << "\"/>\n";
    }
    svg << "<text x=\"" << kMarginLeft + group_w * (static_cast<double>(c) + 0.5)
        << "\" y=\"" << kMarginTop + plot_h + 18 << "\" text-anchor=\"middle\">"
        << escape(categories[c]) << "</text>\n";
  }
  legend(svg, series);
  svg << "</svg>\n";
  write_file(path, svg.str());
}

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::vector<double>& x,
                          const std::vector<ChartSeries>& series,
                          const std::string& x_label, const std::string& y_label) {
  double vmax = 0.0;
  for (const ChartSeries& s : series) {
    if (s.values.size() != x.size()) {
      throw InputError("line chart: series length does not match x");
    }
    for (double v : s.values) vmax = std::max(vmax, v);
  }
  const double y_max = nice_max(vmax);
  const double x_min = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  const double x_max = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  const double x_span = x_max - x_min == 0.0 ? 1.0 : x_max - x_min;

  std::ostringstream svg;
  open_svg(svg, title, y_label, y_max);
  const int plot_w = kWidth - kMarginLeft - kMarginRight;
  const int plot_h = kHeight - kMarginTop - kMarginBottom;

  for (std::size_t s = 0; s < series.size(); ++s) {
    svg << "<polyline fill=\"none\" stroke=\"" << kPalette[s % 8]
        << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double px = kMarginLeft + plot_w * (x[i] - x_min) / x_span;
      const double py = kMarginTop + plot_h * (1.0 - series[s].values[i] / y_max);
      svg << px << "," << py << " ";
    }
    svg << "\"/>\n";
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double px = kMarginLeft + plot_w * (x[i] - x_min) / x_span;
    std::ostringstream lab;
    lab << x[i];
    svg << "<text x=\"" << px << "\" y=\"" << kMarginTop + plot_h + 18
        << "\" text-anchor=\"middle\">" << lab.str() << "</text>\n";
  }
  svg << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\""
      << kMarginTop + plot_h + 40 << "\" text-anchor=\"middle\">" << escape(x_label)
      << "</text>\n";
  legend(svg, series);
  svg << "</svg>\n";
  write_file(path, svg.str());
}

}  // namespace cgnnse::eval
