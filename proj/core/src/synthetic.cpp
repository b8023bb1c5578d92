#include "ppsam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "ppsam/error.hpp"

namespace ppsam {

namespace {

struct Ellipse {
  double cx = 0, cy = 0, a = 1, b = 1, theta = 0;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double u = (c * dx + s * dy) / a;
    const double v = (-s * dx + c * dy) / b;
    return u * u + v * v <= 1.0;
  }

  // Axis-aligned extent of the rotated ellipse.
  BoundingBox bounds() const {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double hx = std::sqrt(a * a * c * c + b * b * s * s);
    const double hy = std::sqrt(a * a * s * s + b * b * c * c);
    return {static_cast<int>(std::floor(cx - hx)), static_cast<int>(std::floor(cy - hy)),
            static_cast<int>(std::ceil(cx + hx)) + 1, static_cast<int>(std::ceil(cy + hy)) + 1};
  }
};

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::string make_id(const SyntheticOptions& options, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return options.id_prefix + buf;
}

}  // namespace

SyntheticOptions::Shape synthetic_shape_from_string(const std::string& name) {
  if (name == "rectangle" || name == "rectangles") return SyntheticOptions::Shape::Rectangle;
  if (name == "blob" || name == "blobs") return SyntheticOptions::Shape::Blob;
  throw Error(ErrorCode::ConfigError, "unknown synthetic shape '" + name + "'");
}

SyntheticSample make_synthetic_sample(const SyntheticOptions& options, int index) {
  const int w = options.size.width;
  const int h = options.size.height;
  if (w < 8 || h < 8) throw Error(ErrorCode::ConfigError, "synthetic images must be at least 8x8");
  if (options.min_extent < 1 || options.max_extent < options.min_extent) {
    throw Error(ErrorCode::ConfigError, "invalid synthetic extent range");
  }
  std::seed_seq seq{options.seed, static_cast<std::uint64_t>(index), std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 10.0);

  const int max_ext = std::min({options.max_extent, w / 2 - 2, h / 2 - 2});
  const int min_ext = std::min(options.min_extent, max_ext);
  auto extent = [&] { return min_ext + unit(rng) * (max_ext - min_ext); };

  SyntheticSample sample;
  sample.sample_id = make_id(options, index);
  sample.image = RgbImage{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
  sample.mask = GrayImage{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};

  // Tissue-like background with a soft illumination gradient.
  const double base[3] = {140 + 30 * unit(rng), 70 + 25 * unit(rng), 60 + 25 * unit(rng)};
  const double gx = (unit(rng) - 0.5) * 40.0 / w;
  const double gy = (unit(rng) - 0.5) * 40.0 / h;
  const double contrast = 45 + 30 * unit(rng);
  const double lesion[3] = {base[0] + contrast, base[1] + contrast * 0.8, base[2] + contrast * 0.4};

  const bool empty = index >= options.count - options.empty_masks;
  std::vector<Ellipse> objects;  // first entry is the target
  BoundingBox rect_target{};
  if (options.shape == SyntheticOptions::Shape::Rectangle) {
    const int hw = static_cast<int>(extent());
    const int hh = static_cast<int>(extent());
    const int x0 = static_cast<int>(unit(rng) * (w - 2 * hw));
    const int y0 = static_cast<int>(unit(rng) * (h - 2 * hh));
    rect_target = {x0, y0, x0 + 2 * hw, y0 + 2 * hh};
  } else {
    Ellipse target;
    target.a = extent();
    target.b = extent();
    target.theta = unit(rng) * std::numbers::pi;
    const auto probe = Ellipse{0, 0, target.a, target.b, target.theta}.bounds();
    const double hx = probe.x_max - 1;
    const double hy = probe.y_max - 1;
    target.cx = hx + 1 + unit(rng) * std::max(0.0, w - 2 * hx - 3);
    target.cy = hy + 1 + unit(rng) * std::max(0.0, h - 2 * hy - 3);
    objects.push_back(target);

    const auto keep_out = objects[0].bounds();
    std::uniform_int_distribution<int> how_many(0, std::max(0, options.max_distractors));
    const int wanted = how_many(rng);
    for (int attempt = 0; attempt < 50 && static_cast<int>(objects.size()) <= wanted; ++attempt) {
      // Look-alikes sit near the target so enlarged prompts start to cover them.
      const double r = options.distractor_reach;
      Ellipse d{keep_out.x_min - r + unit(rng) * (keep_out.width() + 2 * r),
                keep_out.y_min - r + unit(rng) * (keep_out.height() + 2 * r), 0.6 * extent(), 0.6 * extent(),
                unit(rng) * std::numbers::pi};
      const auto db = d.bounds();
      if (!db.within(options.size)) continue;
      // Distractors stay clear of the target's tight box by a small margin.
      const BoundingBox grown{keep_out.x_min - 6, keep_out.y_min - 6, keep_out.x_max + 6, keep_out.y_max + 6};
      if (intersect(db, grown).valid()) continue;
      objects.push_back(d);
    }
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const double shade = gx * (x - w / 2.0) + gy * (y - h / 2.0);
      bool in_target = false;
      bool in_any = false;
      if (options.shape == SyntheticOptions::Shape::Rectangle) {
        in_target = x >= rect_target.x_min && x < rect_target.x_max && y >= rect_target.y_min && y < rect_target.y_max;
        in_any = in_target;
      } else {
        for (std::size_t k = 0; k < objects.size(); ++k) {
          if (objects[k].contains(x + 0.5, y + 0.5)) {
            in_any = true;
            in_target = in_target || k == 0;
          }
        }
      }
      const double* color = in_any ? lesion : base;
      for (int c = 0; c < 3; ++c) sample.image.data[3 * i + c] = clamp_u8(color[c] + shade + noise(rng));
      if (in_target && !empty) sample.mask.data[i] = 255;
    }
  }
  return sample;
}

std::vector<std::string> write_synthetic_dataset(const std::filesystem::path& root, const std::string& name,
                                                 const SyntheticOptions& options) {
  std::vector<std::string> ids;
  for (int i = 0; i < options.count; ++i) {
    const auto sample = make_synthetic_sample(options, i);
    write_rgb(root / name / "images" / (sample.sample_id + ".png"), sample.image);
    write_gray(root / name / "masks" / (sample.sample_id + ".png"), sample.mask);
    ids.push_back(sample.sample_id);
  }
  return ids;
}

}  // namespace ppsam
