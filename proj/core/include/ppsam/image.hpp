#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ppsam/geometry.hpp"

namespace ppsam {

/// Channel-major (CHW) float image.
struct ImageTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Dimensions dims() const { return {width, height}; }
  std::span<const float> plane(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * height * width, static_cast<std::size_t>(height) * width};
  }
};

/// Per-pixel foreground probabilities, row-major.
struct ProbabilityMap {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Dimensions dims() const { return {width, height}; }
};

/// Per-channel normalization applied to 0..255 RGB values: (v - mean) / std.
struct Normalization {
  std::array<float, 3> mean{0.f, 0.f, 0.f};
  std::array<float, 3> std{1.f, 1.f, 1.f};
};

/// 8-bit RGB image, interleaved.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Dimensions dims() const { return {width, height}; }
};

/// 8-bit single channel image.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Dimensions dims() const { return {width, height}; }
};

RgbImage read_rgb(const std::filesystem::path& path);
GrayImage read_gray(const std::filesystem::path& path);
void write_rgb(const std::filesystem::path& path, const RgbImage& image);
void write_gray(const std::filesystem::path& path, const GrayImage& image);

/// Width/height from a PNG or JPEG header without decoding pixels; falls back to
/// a full decode for other formats. Throws CorruptFile.
Dimensions probe_image_size(const std::filesystem::path& path);

RgbImage resize_bilinear(const RgbImage& image, Dimensions target);
GrayImage resize_nearest(const GrayImage& image, Dimensions target);
ProbabilityMap resize_bilinear(const ProbabilityMap& map, Dimensions target);

ImageTensor to_tensor(const RgbImage& image, const Normalization& norm);

/// Pixels strictly above threshold * max(image) become foreground.
BinaryMask binarize(const GrayImage& image, double threshold_fraction);

/// Foreground iff probability > threshold.
BinaryMask threshold_map(const ProbabilityMap& map, double threshold);

}  // namespace ppsam
