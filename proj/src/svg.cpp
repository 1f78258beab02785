#include "polishfb/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace polishfb {

namespace {

constexpr double kWidth = 760.0;
constexpr double kHeight = 440.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 160.0;
constexpr double kMarginTop = 48.0;
constexpr double kMarginBottom = 56.0;

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

} // namespace

void write_svg_lineplot(const std::filesystem::path& path, const std::string& title,
                        const std::string& x_label, const std::string& y_label,
                        const std::vector<SvgSeries>& series,
                        const std::optional<SvgBand>& band, bool log_y) {
  double xmin = std::numeric_limits<double>::infinity();
  double xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      double y = s.y[i];
      if (log_y && !(y > 0.0)) continue;
      if (log_y) y = std::log10(y);
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!(xmax >= xmin)) throw std::invalid_argument("svg plot: no data");
  if (band && !log_y) {
    ymin = std::min(ymin, band->y_low);
    ymax = std::max(ymax, band->y_high);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto sx = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) {
    if (log_y) y = std::log10(y);
    return kMarginTop + plot_h - (y - ymin) / (ymax - ymin) * plot_h;
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(kWidth) +
         "\" height=\"" + fmt(kHeight) + "\" font-family=\"sans-serif\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt(kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" "
         "font-size=\"16\">" + title + "</text>\n";

  if (band) {
    const double y0 = sy(band->y_high);
    const double y1 = sy(band->y_low);
    svg += "<rect x=\"" + fmt(kMarginLeft) + "\" y=\"" + fmt(y0) + "\" width=\"" +
           fmt(plot_w) + "\" height=\"" + fmt(y1 - y0) + "\" fill=\"" + band->color +
           "\"/>\n";
  }

  // frame
  svg += "<rect x=\"" + fmt(kMarginLeft) + "\" y=\"" + fmt(kMarginTop) + "\" width=\"" +
         fmt(plot_w) + "\" height=\"" + fmt(plot_h) +
         "\" fill=\"none\" stroke=\"#444\"/>\n";

  // ticks
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / ticks;
    const double px = sx(fx);
    svg += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(kMarginTop + plot_h) + "\" x2=\"" +
           fmt(px) + "\" y2=\"" + fmt(kMarginTop + plot_h + 5) + "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(kMarginTop + plot_h + 20) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + fmt(fx) + "</text>\n";
    const double fy_lin = ymin + (ymax - ymin) * i / ticks;
    const double py = kMarginTop + plot_h - (fy_lin - ymin) / (ymax - ymin) * plot_h;
    const double label = log_y ? std::pow(10.0, fy_lin) : fy_lin;
    svg += "<line x1=\"" + fmt(kMarginLeft - 5) + "\" y1=\"" + fmt(py) + "\" x2=\"" +
           fmt(kMarginLeft) + "\" y2=\"" + fmt(py) + "\" stroke=\"#444\"/>\n";
    svg += "<text x=\"" + fmt(kMarginLeft - 9) + "\" y=\"" + fmt(py + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + fmt(label) + "</text>\n";
  }
  svg += "<text x=\"" + fmt(kMarginLeft + plot_w / 2) + "\" y=\"" + fmt(kHeight - 14) +
         "\" text-anchor=\"middle\" font-size=\"13\">" + x_label + "</text>\n";
  svg += "<text x=\"18\" y=\"" + fmt(kMarginTop + plot_h / 2) +
         "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 " +
         fmt(kMarginTop + plot_h / 2) + ")\">" + y_label + "</text>\n";

  // series + legend
  double legend_y = kMarginTop + 10.0;
  for (const auto& s : series) {
    std::string points;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (log_y && !(s.y[i] > 0.0)) continue;
      points += fmt(sx(s.x[i])) + "," + fmt(sy(s.y[i])) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + s.color +
           "\" stroke-width=\"1.6\" points=\"" + points + "\"/>\n";
    const double lx = kMarginLeft + plot_w + 12.0;
    svg += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(legend_y) + "\" x2=\"" +
           fmt(lx + 22) + "\" y2=\"" + fmt(legend_y) + "\" stroke=\"" + s.color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt(lx + 28) + "\" y=\"" + fmt(legend_y + 4) +
           "\" font-size=\"12\">" + s.label + "</text>\n";
    legend_y += 20.0;
  }
  svg += "</svg>\n";

  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("svg plot: cannot open " + path.string());
  file << svg;
}

} // namespace polishfb
