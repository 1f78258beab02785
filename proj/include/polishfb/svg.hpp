#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace polishfb {

/// One polyline in a plot.
struct SvgSeries {
  std::string label;
  std::string color = "#1f6fb2";
  std::vector<double> x;
  std::vector<double> y;
};

struct SvgBand {
  double y_low = 0.0;
  double y_high = 0.0;
  std::string color = "#dce9f5";
};

/// Writes a static line plot (axes, ticks, legend, optional horizontal
/// band). Self-contained SVG, no display server involved.
void write_svg_lineplot(const std::filesystem::path& path, const std::string& title,
                        const std::string& x_label, const std::string& y_label,
                        const std::vector<SvgSeries>& series,
                        const std::optional<SvgBand>& band = std::nullopt,
                        bool log_y = false);

} // namespace polishfb
