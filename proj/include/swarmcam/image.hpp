#pragma once

#include <cstddef>
#include <vector>

namespace swarmcam {

/// Grayscale raster, row-major, values in [0, 1].
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

/// Interleaved RGB raster, row-major, values in [0, 1].
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t ch) { return data[(y * width + x) * 3 + ch]; }
  double at(std::size_t y, std::size_t x, std::size_t ch) const { return data[(y * width + x) * 3 + ch]; }
  bool operator==(const RgbImage&) const = default;
};

/// Dense motion field: u horizontal, v vertical, in pixels per frame pair.
struct FlowField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> u;
  std::vector<double> v;

  FlowField() = default;
  FlowField(std::size_t h, std::size_t w) : height(h), width(w), u(h * w, 0.0), v(h * w, 0.0) {}

  bool operator==(const FlowField&) const = default;
};

}  // namespace swarmcam
