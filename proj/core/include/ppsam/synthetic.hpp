#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppsam/geometry.hpp"
#include "ppsam/image.hpp"

namespace ppsam {

/// Procedural image/mask pairs for desk-scale experiments.
struct SyntheticOptions {
  enum class Shape {
    Rectangle,  // axis-aligned rectangle; GT box equals the mask extent
    Blob,       // rotated ellipse plus look-alike distractors
  };

  Shape shape = Shape::Blob;
  Dimensions size{256, 256};
  int count = 20;
  std::uint64_t seed = 0;
  int min_extent = 24;  // half-axis (blob) or half-side (rectangle) range, pixels
  int max_extent = 56;
  int max_distractors = 3;  // Blob only
  int distractor_reach = 48;  // max distractor centre distance outside the target box
  int empty_masks = 0;      // trailing samples with an all-background mask
  std::string id_prefix = "s";
};

struct SyntheticSample {
  std::string sample_id;
  RgbImage image;
  GrayImage mask;  // 0 or 255
};

SyntheticSample make_synthetic_sample(const SyntheticOptions& options, int index);

/// Writes `<root>/<name>/images/<id>.png` and `<root>/<name>/masks/<id>.png`.
/// Returns the generated sample ids in order.
std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& root, const std::string& name,
                                                 const SyntheticOptions& options);

SyntheticOptions::Shape synthetic_shape_from_string(const std::string& name);

}  // namespace ppsam
