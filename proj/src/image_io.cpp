#include "minco/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

namespace minco::io {

void write_png(const std::filesystem::path& path, const torch::Tensor& image) {
  if (image.dim() != 3 || image.size(2) != 3 || image.scalar_type() != torch::kUInt8) {
    throw std::invalid_argument("write_png: expected [H, W, 3] uint8");
  }
  auto img = image.contiguous();
  const auto h = static_cast<png_uint_32>(img.size(0));
  const auto w = static_cast<png_uint_32>(img.size(1));

  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("write_png: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_png: libpng error writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  auto* data = img.data_ptr<std::uint8_t>();
  for (png_uint_32 y = 0; y < h; ++y) png_write_row(png, data + static_cast<std::size_t>(y) * w * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

torch::Tensor make_grid(const torch::Tensor& images, std::int64_t columns) {
  if (images.dim() != 4) throw std::invalid_argument("make_grid: expected [N, H, W, 3]");
  const auto n = images.size(0);
  const auto h = images.size(1);
  const auto w = images.size(2);
  columns = std::max<std::int64_t>(1, std::min(columns, n));
  const auto rows = (n + columns - 1) / columns;
  auto grid = torch::zeros({rows * (h + 1) + 1, columns * (w + 1) + 1, 3}, torch::kUInt8);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = i / columns;
    const auto c = i % columns;
    grid.narrow(0, r * (h + 1) + 1, h).narrow(1, c * (w + 1) + 1, w).copy_(images[i]);
  }
  return grid;
}

namespace {

using Color = std::array<std::uint8_t, 3>;

constexpr std::array<Color, 6> kPalette{{{31, 119, 180},
                                         {214, 39, 40},
                                         {44, 160, 44},
                                         {255, 127, 14},
                                         {148, 103, 189},
                                         {140, 86, 75}}};

class Canvas {
public:
  Canvas(int w, int h) : w_(w), h_(h), pixels_(torch::full({h, w, 3}, 255, torch::kUInt8)) {}

  void set(int x, int y, const Color& c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    auto* p = pixels_.data_ptr<std::uint8_t>() + (static_cast<std::size_t>(y) * w_ + x) * 3;
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  void line(int x0, int y0, int x1, int y1, const Color& c) {
    const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void rect(int x0, int y0, int x1, int y1, const Color& c) {
    for (int y = std::min(y0, y1); y <= std::max(y0, y1); ++y)
      for (int x = std::min(x0, x1); x <= std::max(x0, x1); ++x) set(x, y, c);
  }

  torch::Tensor take() { return pixels_; }

private:
  int w_, h_;
  torch::Tensor pixels_;
};

constexpr int kMargin = 24;
constexpr Color kAxis{0, 0, 0};

}  // namespace

torch::Tensor render_line_chart(const std::vector<Series>& series, int width, int height) {
  Canvas canvas(width, height);
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  const int left = kMargin, right = width - kMargin / 2, top = kMargin / 2, bottom = height - kMargin;
  canvas.line(left, bottom, right, bottom, kAxis);
  canvas.line(left, bottom, left, top, kAxis);
  if (!std::isfinite(xmin)) return canvas.take();
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const auto px = [&](double x) {
    return left + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (right - left)));
  };
  const auto py = [&](double y) {
    return bottom - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (bottom - top)));
  };
  if (ymin < 0.0 && ymax > 0.0) {
    for (int x = left; x <= right; x += 4) canvas.set(x, py(0.0), {160, 160, 160});
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const auto& color = kPalette[k % kPalette.size()];
    bool have_prev = false;
    int prev_x = 0, prev_y = 0;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        have_prev = false;
        continue;
      }
      const int x = px(s.x[i]), y = py(s.y[i]);
      if (have_prev) canvas.line(prev_x, prev_y, x, y, color);
      else canvas.set(x, y, color);
      prev_x = x;
      prev_y = y;
      have_prev = true;
    }
    // Legend swatch.
    canvas.rect(right - 14, top + 4 + 10 * static_cast<int>(k), right - 4,
                top + 10 + 10 * static_cast<int>(k), color);
  }
  return canvas.take();
}

torch::Tensor render_histogram(const std::vector<double>& values, double lo, double hi, int bins,
                               int width, int height) {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("render_histogram: bad range or bins");
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    const int b = std::clamp(static_cast<int>((v - lo) / (hi - lo) * bins), 0, bins - 1);
    ++counts[b];
  }
  Canvas canvas(width, height);
  const int left = kMargin, right = width - kMargin / 2, top = kMargin / 2, bottom = height - kMargin;
  canvas.line(left, bottom, right, bottom, kAxis);
  canvas.line(left, bottom, left, top, kAxis);
  const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));
  const double bar_w = static_cast<double>(right - left) / bins;
  for (int b = 0; b < bins; ++b) {
    const int x0 = left + static_cast<int>(b * bar_w) + 1;
    const int x1 = left + static_cast<int>((b + 1) * bar_w) - 1;
    const int y = bottom - static_cast<int>(std::lround(static_cast<double>(counts[b]) / peak * (bottom - top)));
    const double center = lo + (b + 0.5) * (hi - lo) / bins;
    if (counts[b] > 0) canvas.rect(x0, y, x1, bottom - 1, center > 0.0 ? kPalette[2] : kPalette[1]);
  }
  // Zero marker.
  if (lo < 0.0 && hi > 0.0) {
    const int zx = left + static_cast<int>(std::lround(-lo / (hi - lo) * (right - left)));
    for (int y = top; y <= bottom; y += 3) canvas.set(zx, y, kAxis);
  }
  return canvas.take();
}

}  // namespace minco::io
