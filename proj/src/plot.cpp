#include "ovvis/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "ovvis/common.hpp"

namespace ovvis {

namespace {

struct Canvas {
  size_t w, h;
  std::vector<uint8_t> px;  // RGB, top-down rows

  Canvas(size_t width, size_t height) : w(width), h(height), px(width * height * 3, 255) {}

  void set(long x, long y, uint8_t r, uint8_t g, uint8_t b) {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return;
    const size_t i = (static_cast<size_t>(y) * w + static_cast<size_t>(x)) * 3;
    px[i] = r;
    px[i + 1] = g;
    px[i + 2] = b;
  }

  void line(double x0, double y0, double x1, double y1, uint8_t r, uint8_t g, uint8_t b) {
    const double steps = std::max({std::abs(x1 - x0), std::abs(y1 - y0), 1.0});
    for (double s = 0; s <= steps; ++s) {
      const double t = s / steps;
      set(std::lround(x0 + (x1 - x0) * t), std::lround(y0 + (y1 - y0) * t), r, g, b);
    }
  }
};

// 3x5 glyphs for "0123456789.-", one bit per pixel, row-major.
constexpr uint16_t kGlyphs[12] = {
    0b111101101101111,  // 0
    0b010110010010111,  // 1
    0b111001111100111,  // 2
    0b111001111001111,  // 3
    0b101101111001001,  // 4
    0b111100111001111,  // 5
    0b111100111101111,  // 6
    0b111001001001001,  // 7
    0b111101111101111,  // 8
    0b111101111001111,  // 9
    0b000000000000010,  // .
    0b000000111000000,  // -
};

void draw_text(Canvas& c, long x, long y, const std::string& text) {
  for (char ch : text) {
    int gi = -1;
    if (ch >= '0' && ch <= '9') gi = ch - '0';
    if (ch == '.') gi = 10;
    if (ch == '-') gi = 11;
    if (gi >= 0) {
      for (int ry = 0; ry < 5; ++ry)
        for (int rx = 0; rx < 3; ++rx) {
          if (kGlyphs[gi] & (1u << (14 - (ry * 3 + rx)))) c.set(x + rx, y + ry, 40, 40, 40);
        }
    }
    x += 4;
  }
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void write_bmp(const std::string& path, const Canvas& c) {
  const size_t row_bytes = (c.w * 3 + 3) / 4 * 4;
  const size_t data_size = row_bytes * c.h;
  const size_t file_size = 54 + data_size;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write plot: " + path);
  auto put16 = [&](uint16_t v) { os.put(static_cast<char>(v & 0xff)).put(static_cast<char>(v >> 8)); };
  auto put32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  os.put('B').put('M');
  put32(static_cast<uint32_t>(file_size));
  put32(0);
  put32(54);
  put32(40);
  put32(static_cast<uint32_t>(c.w));
  put32(static_cast<uint32_t>(c.h));
  put16(1);
  put16(24);
  put32(0);
  put32(static_cast<uint32_t>(data_size));
  put32(2835);
  put32(2835);
  put32(0);
  put32(0);
  std::vector<char> row(row_bytes, 0);
  for (size_t y = c.h; y-- > 0;) {  // BMP stores bottom-up
    for (size_t x = 0; x < c.w; ++x) {
      const size_t i = (y * c.w + x) * 3;
      row[x * 3 + 0] = static_cast<char>(c.px[i + 2]);  // BGR
      row[x * 3 + 1] = static_cast<char>(c.px[i + 1]);
      row[x * 3 + 2] = static_cast<char>(c.px[i + 0]);
    }
    os.write(row.data(), static_cast<std::streamsize>(row_bytes));
  }
}

}  // namespace

void write_line_plot_bmp(const std::string& path, const std::vector<double>& x,
                         const std::vector<PlotSeries>& series, size_t width,
                         size_t height) {
  if (x.empty() || series.empty()) throw ConfigError("plot: nothing to draw");
  for (const auto& s : series) {
    if (s.y.size() != x.size()) throw ConfigError("plot: series length mismatch");
  }
  Canvas canvas(width, height);
  const double ml = 48, mr = 16, mt = 16, mb = 32;
  const double px0 = ml, px1 = static_cast<double>(width) - mr;
  const double py0 = static_cast<double>(height) - mb, py1 = mt;

  double xmin = x[0], xmax = x[0], ymin = series[0].y[0], ymax = series[0].y[0];
  for (double v : x) {
    xmin = std::min(xmin, v);
    xmax = std::max(xmax, v);
  }
  for (const auto& s : series)
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;

  auto sx = [&](double v) { return px0 + (v - xmin) / (xmax - xmin) * (px1 - px0); };
  auto sy = [&](double v) { return py0 + (v - ymin) / (ymax - ymin) * (py1 - py0); };

  canvas.line(px0, py0, px1, py0, 0, 0, 0);  // x axis
  canvas.line(px0, py0, px0, py1, 0, 0, 0);  // y axis
  for (double v : x) canvas.line(sx(v), py0 - 2, sx(v), py0 + 2, 0, 0, 0);

  for (const auto& s : series) {
    for (size_t i = 0; i + 1 < x.size(); ++i) {
      canvas.line(sx(x[i]), sy(s.y[i]), sx(x[i + 1]), sy(s.y[i + 1]), s.r, s.g, s.b);
    }
    for (size_t i = 0; i < x.size(); ++i) {
      canvas.set(std::lround(sx(x[i])), std::lround(sy(s.y[i])) - 1, s.r, s.g, s.b);
      canvas.set(std::lround(sx(x[i])) + 1, std::lround(sy(s.y[i])), s.r, s.g, s.b);
    }
  }

  draw_text(canvas, 4, static_cast<long>(py1) - 2, short_num(ymax));
  draw_text(canvas, 4, static_cast<long>(py0) - 5, short_num(ymin));
  draw_text(canvas, static_cast<long>(px0), static_cast<long>(height) - 12, short_num(xmin));
  draw_text(canvas, static_cast<long>(px1) - 24, static_cast<long>(height) - 12,
            short_num(xmax));
  write_bmp(path, canvas);
}

}  // namespace ovvis
