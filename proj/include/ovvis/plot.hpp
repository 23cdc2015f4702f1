#pragma once
// Minimal dependency-free line plots written as 24-bit BMP files.

#include <string>
#include <vector>

namespace ovvis {

struct PlotSeries {
  std::vector<double> y;
  uint8_t r = 30, g = 90, b = 200;
};

// One x grid shared by all series; axis extents label the corners with a
// tiny built-in digit font.
void write_line_plot_bmp(const std::string& path, const std::vector<double>& x,
                         const std::vector<PlotSeries>& series, size_t width = 640,
                         size_t height = 400);

}  // namespace ovvis
