#include "ppsam/geometry.hpp"

#include <algorithm>
#include <numeric>

#include "ppsam/error.hpp"

namespace ppsam {

namespace {

void require_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw Error(ErrorCode::ShapeMismatch,
                "mask dimensions must be positive, got " + std::to_string(height) + "x" + std::to_string(width));
  }
}

void require_box_in_image(const BoundingBox& box, Dimensions image, const char* what) {
  if (!box.within(image)) {
    throw Error(ErrorCode::InvalidBox, std::string(what) + ": box " + to_string(box) + " is not valid within " +
                                           std::to_string(image.width) + "x" + std::to_string(image.height));
  }
}

std::int64_t floor_div(std::int64_t num, std::int64_t den) {
  std::int64_t q = num / den;
  if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t num, std::int64_t den) { return -floor_div(-num, den); }

}  // namespace

BinaryMask::BinaryMask(int height, int width) : height_(height), width_(width) {
  require_dims(height, width);
  data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), 0);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> data)
    : height_(height), width_(width), data_(std::move(data)) {
  require_dims(height, width);
  if (data_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw Error(ErrorCode::ShapeMismatch, "mask data has " + std::to_string(data_.size()) + " entries, expected " +
                                              std::to_string(height * width));
  }
  for (auto& v : data_) v = v != 0 ? 1 : 0;
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

BoundingBox intersect(const BoundingBox& a, const BoundingBox& b) {
  BoundingBox out{std::max(a.x_min, b.x_min), std::max(a.y_min, b.y_min), std::min(a.x_max, b.x_max),
                  std::min(a.y_max, b.y_max)};
  if (out.x_min >= out.x_max || out.y_min >= out.y_max) return {};
  return out;
}

std::string to_string(const BoundingBox& box) {
  return "[" + std::to_string(box.x_min) + ", " + std::to_string(box.y_min) + ", " + std::to_string(box.x_max) +
         ", " + std::to_string(box.y_max) + "]";
}

std::string to_string(PerturbationPolicy::Mode mode) {
  switch (mode) {
    case PerturbationPolicy::Mode::None: return "none";
    case PerturbationPolicy::Mode::Fixed: return "fixed";
    case PerturbationPolicy::Mode::Variable: return "variable";
  }
  return "none";
}

PerturbationPolicy::Mode perturbation_mode_from_string(const std::string& name) {
  if (name == "none") return PerturbationPolicy::Mode::None;
  if (name == "fixed") return PerturbationPolicy::Mode::Fixed;
  if (name == "variable") return PerturbationPolicy::Mode::Variable;
  throw Error(ErrorCode::ConfigError, "unknown perturbation mode '" + name + "'");
}

BoundingBox extract_bbox(const BinaryMask& mask) {
  int x_min = mask.width();
  int y_min = mask.height();
  int x_max = -1;
  int y_max = -1;
  const auto data = mask.data();
  for (int row = 0; row < mask.height(); ++row) {
    const auto* line = data.data() + static_cast<std::size_t>(row) * mask.width();
    const auto* first = std::find(line, line + mask.width(), std::uint8_t{1});
    if (first == line + mask.width()) continue;
    const auto* last = std::find(std::make_reverse_iterator(line + mask.width()), std::make_reverse_iterator(line),
                                 std::uint8_t{1})
                           .base() -
                       1;
    x_min = std::min(x_min, static_cast<int>(first - line));
    x_max = std::max(x_max, static_cast<int>(last - line));
    y_min = std::min(y_min, row);
    y_max = row;
  }
  if (x_max < 0) throw Error(ErrorCode::EmptyMask, "mask has no foreground pixel");
  return {x_min, y_min, x_max + 1, y_max + 1};
}

SideOffsets draw_variable_offsets(int n, GeometryRng& rng) {
  if (n < 0) throw Error(ErrorCode::ConfigError, "perturbation magnitude must be >= 0");
  std::uniform_int_distribution<int> draw(0, n);
  SideOffsets offsets;
  offsets.left = draw(rng);
  offsets.top = draw(rng);
  offsets.right = draw(rng);
  offsets.bottom = draw(rng);
  return offsets;
}

BoundingBox expand_and_clip(const BoundingBox& box, const SideOffsets& offsets, Dimensions image) {
  return {std::max(0, box.x_min - offsets.left), std::max(0, box.y_min - offsets.top),
          std::min(image.width, box.x_max + offsets.right), std::min(image.height, box.y_max + offsets.bottom)};
}

BoundingBox perturb_variable(const BoundingBox& box, int n, GeometryRng& rng, Dimensions image) {
  require_box_in_image(box, image, "perturb_variable");
  return expand_and_clip(box, draw_variable_offsets(n, rng), image);
}

BoundingBox perturb_fixed(const BoundingBox& box, int p, Dimensions image) {
  require_box_in_image(box, image, "perturb_fixed");
  if (p < 0) throw Error(ErrorCode::ConfigError, "perturbation magnitude must be >= 0");
  return expand_and_clip(box, {p, p, p, p}, image);
}

BoundingBox apply_perturbation(const BoundingBox& box, const PerturbationPolicy& policy, GeometryRng& rng,
                               Dimensions image) {
  switch (policy.mode) {
    case PerturbationPolicy::Mode::None:
      require_box_in_image(box, image, "apply_perturbation");
      return box;
    case PerturbationPolicy::Mode::Fixed: return perturb_fixed(box, policy.magnitude, image);
    case PerturbationPolicy::Mode::Variable: return perturb_variable(box, policy.magnitude, rng, image);
  }
  return box;
}

BoundingBox rescale_bbox(const BoundingBox& box, Dimensions from, Dimensions to) {
  if (from.width < 1 || from.height < 1 || to.width < 1 || to.height < 1) {
    throw Error(ErrorCode::ConfigError, "rescale_bbox needs positive dimensions");
  }
  BoundingBox out{
      static_cast<int>(floor_div(std::int64_t{box.x_min} * to.width, from.width)),
      static_cast<int>(floor_div(std::int64_t{box.y_min} * to.height, from.height)),
      static_cast<int>(ceil_div(std::int64_t{box.x_max} * to.width, from.width)),
      static_cast<int>(ceil_div(std::int64_t{box.y_max} * to.height, from.height)),
  };
  if (!out.valid()) {
    throw Error(ErrorCode::DegenerateBox, "box " + to_string(box) + " collapses to " + to_string(out));
  }
  return out;
}

}  // namespace ppsam
