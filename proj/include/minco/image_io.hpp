#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace minco::io {

/// Writes a [H, W, 3] uint8 image as PNG.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);

/// Tiles [N, H, W, 3] uint8 images into a grid with a 1-px black border.
torch::Tensor make_grid(const torch::Tensor& images, std::int64_t columns);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal raster line chart; one color per series, axes drawn at the data bounds.
torch::Tensor render_line_chart(const std::vector<Series>& series, int width = 480, int height = 320);

/// Histogram of values in [lo, hi] with `bins` bars.
torch::Tensor render_histogram(const std::vector<double>& values, double lo, double hi, int bins,
                               int width = 480, int height = 320);

}  // namespace minco::io
