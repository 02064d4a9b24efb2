#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/image.hpp"
#include "patchnet/rng.hpp"

namespace patchnet {

// Training-time augmentation keeps the native resolution: horizontal flip,
// small rotation and a fixed-size crop, never scaling or aspect changes.
struct AugmentationConfig {
  int patch_size = 160;
  double flip_probability = 0.5;
  double rotation_range_deg = 10.0;

  void validate() const {
    require(patch_size > 0, ErrorCode::InvariantViolation, "patch_size must be > 0");
    require(flip_probability >= 0 && flip_probability <= 1, ErrorCode::InvariantViolation,
            "flip_probability must lie in [0, 1]");
    require(rotation_range_deg >= 0, ErrorCode::InvariantViolation,
            "rotation_range must be >= 0");
  }
};

// The exact transform a view was produced with; fixing these makes the
// augmentation a deterministic function of the source image.
struct AugmentationParams {
  bool flip = false;
  double angle_deg = 0.0;
  int origin_x = 0;
  int origin_y = 0;
};

struct PatchView {
  int size = 0;
  int channels = 1;
  std::vector<double> pixels;  // row-major, size x size x channels, in [0,1]
  std::string source_id;
  AugmentationParams params;

  double& at(int x, int y, int c = 0) {
    return pixels[(static_cast<size_t>(y) * size + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * size + x) * channels + c];
  }
};

namespace detail {

struct OriginBox {
  int lo_x = 0, hi_x = -1, lo_y = 0, hi_y = -1;  // inclusive; empty if hi < lo
  bool empty() const { return hi_x < lo_x || hi_y < lo_y; }
};

// Source coordinates sampled by patch offset k from origin o under rotation
// by `angle` about the image center (flip is handled by mirroring sx later).
inline void source_coords(double ox, double oy, double kx, double ky, double cx,
                          double cy, double cos_a, double sin_a, double* sx, double* sy) {
  const double dx = ox + kx - cx;
  const double dy = oy + ky - cy;
  *sx = cx + cos_a * dx + sin_a * dy;
  *sy = cy - sin_a * dx + cos_a * dy;
}

inline bool origin_valid(int ox, int oy, int w, int h, int size, double cx, double cy,
                         double cos_a, double sin_a) {
  const double edge = size - 1;
  const double corners[4][2] = {{0, 0}, {edge, 0}, {0, edge}, {edge, edge}};
  for (const auto& k : corners) {
    double sx = 0, sy = 0;
    source_coords(ox, oy, k[0], k[1], cx, cy, cos_a, sin_a, &sx, &sy);
    if (sx < 0 || sx > w - 1 || sy < 0 || sy > h - 1) return false;
  }
  return true;
}

// Largest axis-aligned box of crop origins whose rotated sampling footprint
// stays inside the source raster (so bilinear lookup never needs fill).
inline OriginBox valid_origin_box(int w, int h, int size, double angle_deg) {
  const double rad = angle_deg * (3.14159265358979323846 / 180.0);
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double edge = size - 1;

  // Reach of the sampling footprint over patch offsets, per rotated axis.
  const double mx = std::min(0.0, s * edge), Mx = c * edge + std::max(0.0, s * edge);
  const double my = std::min(0.0, -s * edge), My = c * edge + std::max(0.0, -s * edge);
  const double ax = -cx - mx, bx = (w - 1) - cx - Mx;
  const double ay = -cy - my, by = (h - 1) - cy - My;
  OriginBox box;
  if (bx < ax || by < ay) return box;

  const double e1 = 0.5 * (ax + bx), r1 = 0.5 * (bx - ax);
  const double e2 = 0.5 * (ay + by), r2 = 0.5 * (by - ay);
  // Center of the valid set, mapped back to origin space.
  const double qx = c * e1 - s * e2;
  const double qy = s * e1 + c * e2;
  const double abs_s = std::abs(s);
  const double cos2 = c * c - s * s;
  double tx = 0, ty = 0;
  if (cos2 > 1e-9) {
    tx = (c * r1 - abs_s * r2) / cos2;
    ty = (c * r2 - abs_s * r1) / cos2;
    if (tx < 0 || ty < 0) {
      tx = ty = std::min(r1, r2) / (c + abs_s);
    }
  } else {
    tx = ty = std::min(r1, r2) / (c + abs_s);
  }

  box.lo_x = static_cast<int>(std::ceil(cx + qx - tx));
  box.hi_x = static_cast<int>(std::floor(cx + qx + tx));
  box.lo_y = static_cast<int>(std::ceil(cy + qy - ty));
  box.hi_y = static_cast<int>(std::floor(cy + qy + ty));
  box.lo_x = std::max(box.lo_x, 0);
  box.lo_y = std::max(box.lo_y, 0);
  box.hi_x = std::min(box.hi_x, w - size);
  box.hi_y = std::min(box.hi_y, h - size);

  // Absorb any floating-point slack on the box edges with the exact test;
  // the valid set is convex, so corner validity covers the interior.
  auto corners_ok = [&]() {
    return origin_valid(box.lo_x, box.lo_y, w, h, size, cx, cy, c, s) &&
           origin_valid(box.hi_x, box.lo_y, w, h, size, cx, cy, c, s) &&
           origin_valid(box.lo_x, box.hi_y, w, h, size, cx, cy, c, s) &&
           origin_valid(box.hi_x, box.hi_y, w, h, size, cx, cy, c, s);
  };
  int guard = 0;
  while (!box.empty() && !corners_ok() && guard++ < 8) {
    ++box.lo_x;
    ++box.lo_y;
    if (box.hi_x > box.lo_x) --box.hi_x;
    if (box.hi_y > box.lo_y) --box.hi_y;
  }
  if (!box.empty() && !corners_ok()) box.hi_x = box.lo_x - 1;
  return box;
}

inline double bilinear(const ImageBuffer& img, double x, double y, int ch) {
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  int x1 = std::min(x0 + 1, img.width - 1);
  int y1 = std::min(y0 + 1, img.height - 1);
  const double v00 = img.at(x0, y0, ch), v10 = img.at(x1, y0, ch);
  const double v01 = img.at(x0, y1, ch), v11 = img.at(x1, y1, ch);
  return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 +
         fx * fy * v11;
}

}  // namespace detail

// Deterministic core: applies flip -> rotate -> crop with the given
// parameters. Rotation 0 takes an exact integer-copy path, so a plain crop
// is reproduced pixel-exact.
inline PatchView apply_augmentation(const ImageBuffer& image, int patch_size,
                                    const AugmentationParams& params,
                                    const std::string& source_id = "") {
  require(patch_size > 0, ErrorCode::InvariantViolation, "patch_size must be > 0");
  require(image.width >= patch_size && image.height >= patch_size,
          ErrorCode::InvariantViolation,
          "image " + format_int(image.width) + "x" + format_int(image.height) +
              " smaller than patch size " + format_int(patch_size));

  PatchView view;
  view.size = patch_size;
  view.channels = image.channels;
  view.pixels.resize(static_cast<size_t>(patch_size) * patch_size * image.channels);
  view.source_id = source_id;
  view.params = params;

  const int w = image.width, h = image.height;
  if (params.angle_deg == 0.0) {
    require(params.origin_x >= 0 && params.origin_y >= 0 &&
                params.origin_x + patch_size <= w && params.origin_y + patch_size <= h,
            ErrorCode::InvariantViolation, "crop origin out of bounds");
    for (int y = 0; y < patch_size; ++y)
      for (int x = 0; x < patch_size; ++x) {
        int sx = params.origin_x + x;
        if (params.flip) sx = w - 1 - sx;
        for (int c = 0; c < image.channels; ++c)
          view.at(x, y, c) = image.at(sx, params.origin_y + y, c);
      }
    return view;
  }

  const double rad = params.angle_deg * (3.14159265358979323846 / 180.0);
  const double cos_a = std::cos(rad), sin_a = std::sin(rad);
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  require(detail::origin_valid(params.origin_x, params.origin_y, w, h, patch_size, cx,
                               cy, cos_a, sin_a),
          ErrorCode::InvariantViolation,
          "rotated crop leaves the source raster; no fill pixels are permitted");
  for (int y = 0; y < patch_size; ++y)
    for (int x = 0; x < patch_size; ++x) {
      double sx = 0, sy = 0;
      detail::source_coords(params.origin_x, params.origin_y, x, y, cx, cy, cos_a,
                            sin_a, &sx, &sy);
      if (params.flip) sx = (w - 1) - sx;
      for (int c = 0; c < image.channels; ++c)
        view.at(x, y, c) = detail::bilinear(image, sx, sy, c);
    }
  return view;
}

// One random view: flip ~ Bernoulli(p), angle ~ U[-range, range], origin
// uniform over the valid integer origins for that angle. Pure function of
// (image, cfg, seed). The draw order (flip, angle, origin x, origin y) is
// part of the determinism contract.
inline PatchView augment_view(const ImageBuffer& image, const AugmentationConfig& cfg,
                              std::uint64_t seed, const std::string& source_id = "") {
  cfg.validate();
  Rng rng(seed);
  AugmentationParams params;
  params.flip = rng.bernoulli(cfg.flip_probability);
  params.angle_deg =
      cfg.rotation_range_deg == 0
          ? 0.0
          : rng.uniform(-cfg.rotation_range_deg, cfg.rotation_range_deg);
  detail::OriginBox box =
      detail::valid_origin_box(image.width, image.height, cfg.patch_size, params.angle_deg);
  if (box.empty()) {
    const double rad = cfg.rotation_range_deg * (3.14159265358979323846 / 180.0);
    const int need = static_cast<int>(std::ceil(
                         (cfg.patch_size - 1) * (std::cos(rad) + std::abs(std::sin(rad))))) + 1;
    fail(ErrorCode::InvariantViolation,
         "image " + format_int(image.width) + "x" + format_int(image.height) +
             " too small for a " + format_int(cfg.patch_size) +
             " patch under +/-" + format_double(cfg.rotation_range_deg) +
             " deg rotation; needs at least " + format_int(need) + "x" + format_int(need));
  }
  params.origin_x =
      box.lo_x + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(box.hi_x - box.lo_x + 1)));
  params.origin_y =
      box.lo_y + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(box.hi_y - box.lo_y + 1)));
  return apply_augmentation(image, cfg.patch_size, params, source_id);
}

// Two independent draws on the same source image.
inline std::pair<PatchView, PatchView> two_views(const ImageBuffer& image,
                                                 const AugmentationConfig& cfg,
                                                 std::uint64_t seed,
                                                 const std::string& source_id = "") {
  return {augment_view(image, cfg, derive_seed(seed, {0}), source_id),
          augment_view(image, cfg, derive_seed(seed, {1}), source_id)};
}

namespace detail {
// round(n/d) with ties toward the smaller value; n >= 0, d > 0, exact.
inline int round_half_down(std::int64_t n, std::int64_t d) {
  return static_cast<int>((2 * n + d - 1) / (2 * d));
}
}  // namespace detail

// Per-axis centers: `a` evenly spaced values from size/2 to extent - size/2
// inclusive (a == 1 gives the midpoint). Fractional positions round to the
// nearest pixel, ties down. Returns the row-major Cartesian product.
inline std::vector<std::pair<int, int>> test_grid_centers(int width, int height,
                                                          int size, int anchors) {
  require(size > 0, ErrorCode::InvariantViolation, "patch size must be > 0");
  require(anchors >= 1, ErrorCode::InvariantViolation, "anchors per side must be >= 1");
  require(width >= size && height >= size, ErrorCode::InvariantViolation,
          "extent " + format_int(width) + "x" + format_int(height) +
              " smaller than patch size " + format_int(size));
  auto axis = [&](int extent) {
    std::vector<int> cs;
    if (anchors == 1) {
      cs.push_back(detail::round_half_down(extent, 2));
      return cs;
    }
    const std::int64_t d = 2LL * (anchors - 1);
    for (int i = 0; i < anchors; ++i) {
      const std::int64_t n =
          static_cast<std::int64_t>(size) * (anchors - 1) + 2LL * i * (extent - size);
      cs.push_back(detail::round_half_down(n, d));
    }
    return cs;
  };
  const std::vector<int> xs = axis(width), ys = axis(height);
  std::vector<std::pair<int, int>> centers;
  centers.reserve(xs.size() * ys.size());
  for (int y : ys)
    for (int x : xs) centers.emplace_back(x, y);
  return centers;
}

// Axis-aligned crop around an integer center, no resampling. The center must
// sit at least size/2 from every border.
inline PatchView crop_at_center(const ImageBuffer& image, double center_x,
                                double center_y, int size,
                                const std::string& source_id = "") {
  require(size > 0 && size <= image.width && size <= image.height,
          ErrorCode::InvariantViolation, "crop size must fit the image");
  require(center_x == std::floor(center_x) && center_y == std::floor(center_y),
          ErrorCode::InvariantViolation,
          "crop centers must align to the pixel grid, got (" + format_double(center_x) +
              ", " + format_double(center_y) + ")");
  const int ox = static_cast<int>(center_x) - size / 2;
  const int oy = static_cast<int>(center_y) - size / 2;
  require(ox >= 0 && oy >= 0 && ox + size <= image.width && oy + size <= image.height,
          ErrorCode::InvariantViolation,
          "crop center (" + format_double(center_x) + ", " + format_double(center_y) +
              ") closer than size/2 to a border");
  AugmentationParams params;
  params.origin_x = ox;
  params.origin_y = oy;
  return apply_augmentation(image, size, params, source_id);
}

// Uniform anchor grid used at test time.
struct TestGrid {
  int anchors_per_side = 3;
  int patch_size = 160;

  int patch_count() const { return anchors_per_side * anchors_per_side; }

  void validate() const {
    require(anchors_per_side >= 1, ErrorCode::InvariantViolation,
            "anchors_per_side must be >= 1");
    require(patch_size > 0, ErrorCode::InvariantViolation, "patch_size must be > 0");
  }

  std::vector<std::pair<int, int>> centers(int width, int height) const {
    validate();
    return test_grid_centers(width, height, patch_size, anchors_per_side);
  }
};

// Golden patches persist as PGM/PPM plus a one-line provenance sidecar in
// the manifest text style: source_id,flip,angle_deg,origin_x,origin_y.
inline void save_patch(const PatchView& view, const std::string& path) {
  ImageBuffer img(view.size, view.size, view.channels);
  img.pixels = view.pixels;
  write_pnm(img, path);
  std::ofstream side(path + ".prov", std::ios::binary);
  require(side.good(), ErrorCode::MissingFile, "cannot write " + path + ".prov");
  side << "# source_id,flip,angle_deg,origin_x,origin_y\n"
       << view.source_id << ',' << (view.params.flip ? 1 : 0) << ','
       << format_double(view.params.angle_deg) << ',' << view.params.origin_x << ','
       << view.params.origin_y << '\n';
}

}  // namespace patchnet
