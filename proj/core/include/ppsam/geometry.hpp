#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ppsam {

struct Dimensions {
  int width = 0;
  int height = 0;

  std::size_t area() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  bool operator==(const Dimensions&) const = default;
};

/// Row-major binary mask. Each entry is 0 or 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width);
  BinaryMask(int height, int width, std::vector<std::uint8_t> data);

  int height() const { return height_; }
  int width() const { return width_; }
  Dimensions dims() const { return {width_, height_}; }
  std::size_t size() const { return data_.size(); }

  bool at(int row, int col) const { return data_[index(row, col)] != 0; }
  void set(int row, int col, bool value) { data_[index(row, col)] = value ? 1 : 0; }

  std::span<const std::uint8_t> data() const { return data_; }
  std::size_t count() const;
  bool empty_foreground() const { return count() == 0; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(col);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Axis-aligned box in pixel coordinates. Min is inclusive, max is exclusive,
/// so width() == x_max - x_min exactly.
struct BoundingBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  std::int64_t area() const { return valid() ? std::int64_t{width()} * height() : 0; }

  bool valid() const { return 0 <= x_min && x_min < x_max && 0 <= y_min && y_min < y_max; }
  bool within(Dimensions image) const { return valid() && x_max <= image.width && y_max <= image.height; }
  bool contains(const BoundingBox& other) const {
    return x_min <= other.x_min && y_min <= other.y_min && other.x_max <= x_max && other.y_max <= y_max;
  }

  bool operator==(const BoundingBox&) const = default;
};

/// Intersection of two boxes; invalid (zero area) when disjoint.
BoundingBox intersect(const BoundingBox& a, const BoundingBox& b);

std::string to_string(const BoundingBox& box);

struct PerturbationPolicy {
  enum class Mode { None, Fixed, Variable };

  Mode mode = Mode::None;
  int magnitude = 0;  // p for Fixed, n for Variable; ignored for None
  std::uint64_t rng_seed = 0;

  static PerturbationPolicy none() { return {}; }
  static PerturbationPolicy fixed(int p) { return {Mode::Fixed, p, 0}; }
  static PerturbationPolicy variable(int n, std::uint64_t seed = 0) { return {Mode::Variable, n, seed}; }

  bool operator==(const PerturbationPolicy&) const = default;
};

std::string to_string(PerturbationPolicy::Mode mode);
PerturbationPolicy::Mode perturbation_mode_from_string(const std::string& name);

/// Outward offsets per side, in pixels.
struct SideOffsets {
  int left = 0;
  int top = 0;
  int right = 0;
  int bottom = 0;
};

using GeometryRng = std::mt19937_64;

/// Tightest box covering every foreground pixel. Throws EmptyMask.
BoundingBox extract_bbox(const BinaryMask& mask);

/// Four independent uniform integer draws in [0, n], in left, top, right, bottom order.
SideOffsets draw_variable_offsets(int n, GeometryRng& rng);

/// Moves each side outward by the given offset, then clips to the image.
BoundingBox expand_and_clip(const BoundingBox& box, const SideOffsets& offsets, Dimensions image);

BoundingBox perturb_variable(const BoundingBox& box, int n, GeometryRng& rng, Dimensions image);
BoundingBox perturb_fixed(const BoundingBox& box, int p, Dimensions image);

/// Applies a policy. The rng is consumed only in Variable mode.
BoundingBox apply_perturbation(const BoundingBox& box, const PerturbationPolicy& policy, GeometryRng& rng,
                               Dimensions image);

/// Scales a box between resolutions. Min coordinates floor, max coordinates ceil,
/// so foreground coverage is never lost. Throws DegenerateBox.
BoundingBox rescale_bbox(const BoundingBox& box, Dimensions from, Dimensions to);

}  // namespace ppsam
