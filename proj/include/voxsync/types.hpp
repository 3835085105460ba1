#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace voxsync {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

/// Dense H×W×C map stored row-major with interleaved channels.
struct FeatureImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  FeatureImage() = default;
  FeatureImage(int w, int h, int c)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0.0) {}

  int pixel_count() const { return width * height; }
  std::span<double> pixel(int index) {
    return {data.data() + static_cast<std::size_t>(index) * channels, static_cast<std::size_t>(channels)};
  }
  std::span<const double> pixel(int index) const {
    return {data.data() + static_cast<std::size_t>(index) * channels, static_cast<std::size_t>(channels)};
  }
  std::span<double> pixel(int x, int y) { return pixel(y * width + x); }
  std::span<const double> pixel(int x, int y) const { return pixel(y * width + x); }
};

/// Dense H×W scalar probability map.
struct ProbImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ProbImage() = default;
  ProbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h, 0.0) {}

  int pixel_count() const { return width * height; }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

/// One byte per pixel, nonzero = pixel belongs to the ray set.
using PixelMask = std::vector<std::uint8_t>;

inline PixelMask full_mask(int pixels) { return PixelMask(static_cast<std::size_t>(pixels), 1); }

}  // namespace voxsync
