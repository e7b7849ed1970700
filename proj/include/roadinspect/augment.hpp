#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "roadinspect/rng.hpp"
#include "roadinspect/tensor.hpp"

namespace roadinspect {

struct AugmentConfig {
  double rotation_deg = 15.0;
  double width_shift = 0.1;   // fraction of width
  double height_shift = 0.1;  // fraction of height
  double shear_deg = 10.0;
  double zoom = 0.1;          // zoom factor drawn from [1 - zoom, 1 + zoom]
  double hflip_prob = 0.5;
  std::size_t cutout_size = 40;
  double cutout_prob = 0.5;

  static AugmentConfig none() { return {0, 0, 0, 0, 0, 0, 0, 0}; }
};

/// Row-major 2x3 matrix mapping source pixel coordinates to output coordinates.
using Affine = std::array<double, 6>;

inline constexpr Affine kIdentityAffine = {1, 0, 0, 0, 1, 0};

struct AffineParams {
  double angle_deg = 0;
  double shift_x = 0;  // pixels
  double shift_y = 0;
  double shear_deg = 0;
  double zoom = 1;
};

struct AffineDraw {
  Affine matrix = kIdentityAffine;
  bool flip = false;
};

/// Zoom * rotate * shear about the pixel-grid center ((W-1)/2, (H-1)/2),
/// followed by the translation.
inline Affine compose_affine(const AffineParams& p, std::size_t width, std::size_t height) {
  if (p.angle_deg == 0 && p.shift_x == 0 && p.shift_y == 0 && p.shear_deg == 0 && p.zoom == 1) {
    return kIdentityAffine;
  }
  const double th = p.angle_deg * std::numbers::pi / 180.0;
  const double sh = std::tan(p.shear_deg * std::numbers::pi / 180.0);
  const double c = std::cos(th), s = std::sin(th);
  // Z R S with S = [[1, sh], [0, 1]].
  const double a = p.zoom * c, b = p.zoom * (c * sh - s);
  const double d = p.zoom * s, e = p.zoom * (s * sh + c);
  const double cx = (static_cast<double>(width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(height) - 1.0) / 2.0;
  return {a, b, cx - a * cx - b * cy + p.shift_x, d, e, cy - d * cx - e * cy + p.shift_y};
}

/// Draw order: angle, shift x, shift y, shear, zoom, flip.
inline AffineDraw sample_affine(const AugmentConfig& cfg, std::size_t width, std::size_t height, Rng& rng) {
  AffineParams p;
  p.angle_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  p.shift_x = rng.uniform(-cfg.width_shift, cfg.width_shift) * static_cast<double>(width);
  p.shift_y = rng.uniform(-cfg.height_shift, cfg.height_shift) * static_cast<double>(height);
  p.shear_deg = rng.uniform(-cfg.shear_deg, cfg.shear_deg);
  p.zoom = rng.uniform(1.0 - cfg.zoom, 1.0 + cfg.zoom);
  AffineDraw draw;
  draw.matrix = compose_affine(p, width, height);
  draw.flip = rng.uniform() < cfg.hflip_prob;
  return draw;
}

/// Flips (x -> W-1-x) if requested, then warps by inverse-mapped bilinear
/// sampling with edge replication. img is H x W x C.
inline Tensor apply_affine(const Tensor& img, const Affine& m, bool flip) {
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  Tensor src = img;
  if (flip) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        for (std::size_t c = 0; c < C; ++c) src.at(y, x, c) = img.at(y, W - 1 - x, c);
      }
    }
  }
  if (m == kIdentityAffine) return src;

  const double det = m[0] * m[4] - m[1] * m[3];
  const double ia = m[4] / det, ib = -m[1] / det, id = -m[3] / det, ie = m[0] / det;
  const double itx = -(ia * m[2] + ib * m[5]);
  const double ity = -(id * m[2] + ie * m[5]);

  auto snap = [](double v, double hi) {
    const double r = std::round(v);
    if (std::abs(v - r) < 1e-9) v = r;
    return std::clamp(v, 0.0, hi);
  };

  Tensor out(img.shape());
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double sx = snap(ia * x + ib * y + itx, static_cast<double>(W - 1));
      const double sy = snap(id * x + ie * y + ity, static_cast<double>(H - 1));
      const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
      const double fx = sx - static_cast<double>(x0), fy = sy - static_cast<double>(y0);
      for (std::size_t c = 0; c < C; ++c) {
        const double top = src.at(y0, x0, c) * (1 - fx) + src.at(y0, x1, c) * fx;
        const double bot = src.at(y1, x0, c) * (1 - fx) + src.at(y1, x1, c) * fx;
        out.at(y, x, c) = static_cast<float>(top * (1 - fy) + bot * fy);
      }
    }
  }
  return out;
}

struct CutoutRegion {
  std::size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open, clipped; empty when not applied
  bool applied() const noexcept { return x1 > x0 && y1 > y0; }
};

/// Zeroes a cutout_size square centered uniformly over the image with
/// probability cutout_prob. Draw order: gate, center x, center y.
inline CutoutRegion cutout_inplace(Tensor& img, const AugmentConfig& cfg, Rng& rng) {
  CutoutRegion r;
  const bool gate = rng.uniform() < cfg.cutout_prob;
  if (!gate || cfg.cutout_size == 0) return r;
  const std::size_t H = img.dim(0), W = img.dim(1), C = img.dim(2);
  const auto cx = static_cast<long>(rng.below(W));
  const auto cy = static_cast<long>(rng.below(H));
  const auto size = static_cast<long>(cfg.cutout_size);
  const long half = size / 2;
  r.x0 = static_cast<std::size_t>(std::clamp(cx - half, 0L, static_cast<long>(W)));
  r.y0 = static_cast<std::size_t>(std::clamp(cy - half, 0L, static_cast<long>(H)));
  r.x1 = static_cast<std::size_t>(std::clamp(cx - half + size, 0L, static_cast<long>(W)));
  r.y1 = static_cast<std::size_t>(std::clamp(cy - half + size, 0L, static_cast<long>(H)));
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      for (std::size_t c = 0; c < C; ++c) img.at(y, x, c) = 0.0f;
    }
  }
  return r;
}

inline Tensor cutout(const Tensor& img, const AugmentConfig& cfg, Rng& rng) {
  Tensor out = img;
  cutout_inplace(out, cfg, rng);
  return out;
}

/// Affine warp, flip and cutout in one pass, as applied per training sample.
inline Tensor augment(const Tensor& img, const AugmentConfig& cfg, Rng& rng) {
  const AffineDraw draw = sample_affine(cfg, img.dim(1), img.dim(0), rng);
  Tensor out = apply_affine(img, draw.matrix, draw.flip);
  cutout_inplace(out, cfg, rng);
  return out;
}

}  // namespace roadinspect
