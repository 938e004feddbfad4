#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "goldisim/errors.hpp"
#include "goldisim/noise.hpp"
#include "goldisim/rng.hpp"

namespace goldisim {

struct LesionParams {
  int radius_min = 20;
  int radius_max = 75;
  double smoothness_alpha = 0.5;  // fraction of the radius that ramps to 0
  FractalNoiseParams noise;
  std::uint64_t affine_seed = 0;

  void validate() const {
    if (radius_min < 1 || radius_min > radius_max)
      throw ParameterError("radius range: need 0 < min <= max");
    if (!(smoothness_alpha > 0.0 && smoothness_alpha <= 1.0))
      throw ParameterError("smoothness alpha must be in (0,1]");
    noise.validate();
  }
};

// Lesion patch: values in [0,1], support marks pixels belonging to the lesion.
struct LesionPatch {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> support;

  LesionPatch() = default;
  LesionPatch(int w, int h)
      : width(w), height(h),
        values(static_cast<std::size_t>(w) * h, 0.0),
        support(static_cast<std::size_t>(w) * h, 0) {
    if (w < 1 || h < 1) throw ParameterError("LesionPatch: dimensions must be >= 1");
  }

  double value(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool in_support(int x, int y) const { return support[static_cast<std::size_t>(y) * width + x] != 0; }
};

// 2x2 linear map, row major: [a b; c d]. Applied around the patch center.
struct AffineMap {
  double a = 1, b = 0, c = 0, d = 1;
  double det() const { return a * d - b * c; }
};

// Square patch of side 2r+1. Flat core of 1.0 up to r(1-alpha), linear ramp
// (r-d)/(r*alpha) out to r, zero beyond.
inline LesionPatch smoothed_circle_mask(int r, double alpha) {
  if (r < 1) throw ParameterError("smoothed_circle_mask: r must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ParameterError("smoothed_circle_mask: alpha must be in (0,1]");
  const int side = 2 * r + 1;
  LesionPatch patch(side, side);
  const double core = r * (1.0 - alpha);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double d = std::hypot(x - r, y - r);
      double v = 0.0;
      if (d <= core) v = 1.0;
      else if (d <= r) v = (r - d) / (r * alpha);
      if (v > 0.0) {
        patch.values[static_cast<std::size_t>(y) * side + x] = v;
        patch.support[static_cast<std::size_t>(y) * side + x] = 1;
      }
    }
  }
  return patch;
}

namespace detail {

inline double bilinear_patch(const LesionPatch& p, double x, double y) {
  if (x < 0.0 || y < 0.0 || x > p.width - 1 || y > p.height - 1) return 0.0;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, p.width - 1);
  const int y1 = std::min(y0 + 1, p.height - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = p.value(x0, y0) * (1 - fx) + p.value(x1, y0) * fx;
  const double bot = p.value(x0, y1) * (1 - fx) + p.value(x1, y1) * fx;
  return top * (1 - fy) + bot * fy;
}

inline LesionPatch tight_crop(const LesionPatch& p) {
  int x0 = p.width, y0 = p.height, x1 = -1, y1 = -1;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x)
      if (p.in_support(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
  if (x1 < 0) return LesionPatch();  // empty support
  LesionPatch out(x1 - x0 + 1, y1 - y0 + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const std::size_t src = static_cast<std::size_t>(y) * p.width + x;
      const std::size_t dst = static_cast<std::size_t>(y - y0) * out.width + (x - x0);
      out.values[dst] = p.values[src];
      out.support[dst] = p.support[src];
    }
  return out;
}

inline bool support_connected(const LesionPatch& p) {
  std::size_t total = 0;
  int sx = -1, sy = -1;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x)
      if (p.in_support(x, y)) {
        ++total;
        if (sx < 0) { sx = x; sy = y; }
      }
  if (total == 0) return false;
  std::vector<std::uint8_t> seen(p.support.size(), 0);
  std::vector<std::pair<int, int>> stack{{sx, sy}};
  seen[static_cast<std::size_t>(sy) * p.width + sx] = 1;
  std::size_t reached = 0;
  while (!stack.empty()) {
    auto [x, y] = stack.back();
    stack.pop_back();
    ++reached;
    static constexpr int dx[4] = {1, -1, 0, 0};
    static constexpr int dy[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int nx = x + dx[k], ny = y + dy[k];
      if (nx < 0 || ny < 0 || nx >= p.width || ny >= p.height) continue;
      const std::size_t idx = static_cast<std::size_t>(ny) * p.width + nx;
      if (p.in_support(nx, ny) && !seen[idx]) {
        seen[idx] = 1;
        stack.emplace_back(nx, ny);
      }
    }
  }
  return reached == total;
}

}  // namespace detail

// Apply a fixed 2x2 map around the patch center, inverse-mapped bilinear
// sampling, tight crop to the transformed support. Exposed for tests.
inline LesionPatch apply_affine(const LesionPatch& mask, const AffineMap& m) {
  if (mask.values.empty()) throw ParameterError("apply_affine: empty mask");
  const double det = m.det();
  if (std::abs(det) < 0.05) throw ParameterError("apply_affine: degenerate transform");
  const double cx = (mask.width - 1) / 2.0;
  const double cy = (mask.height - 1) / 2.0;

  // forward-map the patch corners to size the output canvas
  double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  const std::array<std::pair<double, double>, 4> corners = {
      std::pair{-cx, -cy}, {cx, -cy}, {-cx, cy}, {cx, cy}};
  bool first = true;
  for (auto [px, py] : corners) {
    const double tx = m.a * px + m.b * py;
    const double ty = m.c * px + m.d * py;
    if (first) { min_x = max_x = tx; min_y = max_y = ty; first = false; }
    min_x = std::min(min_x, tx); max_x = std::max(max_x, tx);
    min_y = std::min(min_y, ty); max_y = std::max(max_y, ty);
  }
  const int out_w = static_cast<int>(std::ceil(max_x - min_x)) + 1;
  const int out_h = static_cast<int>(std::ceil(max_y - min_y)) + 1;
  const double ocx = (out_w - 1) / 2.0;
  const double ocy = (out_h - 1) / 2.0;

  // inverse map
  const double ia = m.d / det, ib = -m.b / det, ic = -m.c / det, id = m.a / det;
  LesionPatch out(out_w, out_h);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const double ox = x - ocx, oy = y - ocy;
      const double sx = ia * ox + ib * oy + cx;
      const double sy = ic * ox + id * oy + cy;
      const double v = detail::bilinear_patch(mask, sx, sy);
      if (v > 0.0) {
        out.values[static_cast<std::size_t>(y) * out_w + x] = std::clamp(v, 0.0, 1.0);
        out.support[static_cast<std::size_t>(y) * out_w + x] = 1;
      }
    }
  return detail::tight_crop(out);
}

// Random rotation/scale/shear; re-draws (up to 10 times) if the transformed
// support comes out empty or disconnected, then falls back to identity.
inline LesionPatch random_affine(const LesionPatch& mask, std::uint64_t seed) {
  if (mask.values.empty()) throw ParameterError("random_affine: empty mask");
  Rng rng(seed);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double scale_x = rng.uniform(0.6, 1.4);
    const double scale_y = rng.uniform(0.6, 1.4);
    const double shear = rng.uniform(-0.3, 0.3);
    // R(theta) * Shear * Scale
    const double ct = std::cos(theta), st = std::sin(theta);
    AffineMap m;
    m.a = ct * scale_x + (-st) * 0.0;
    m.b = ct * shear * scale_y + (-st) * scale_y;
    m.c = st * scale_x;
    m.d = st * shear * scale_y + ct * scale_y;
    if (std::abs(m.det()) < 0.05) continue;
    LesionPatch out = apply_affine(mask, m);
    if (!out.values.empty() && detail::support_connected(out)) return out;
  }
  return apply_affine(mask, AffineMap{});
}

// Resize a normalized noise field to (w,h) with bilinear sampling.
inline NoiseField resize_field(const NoiseField& field, int w, int h) {
  if (w < 1 || h < 1) throw ParameterError("resize_field: target dims must be >= 1");
  NoiseField out(w, h);
  const double sx = w > 1 ? static_cast<double>(field.width - 1) / (w - 1) : 0.0;
  const double sy = h > 1 ? static_cast<double>(field.height - 1) / (h - 1) : 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double fx = x * sx, fy = y * sy;
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const int x1 = std::min(x0 + 1, field.width - 1);
      const int y1 = std::min(y0 + 1, field.height - 1);
      const double ux = fx - x0, uy = fy - y0;
      const double top = field.at(x0, y0) * (1 - ux) + field.at(x1, y0) * ux;
      const double bot = field.at(x0, y1) * (1 - ux) + field.at(x1, y1) * ux;
      out.at(x, y) = top * (1 - uy) + bot * uy;
    }
  return out;
}

// Mask x resized-noise product; support follows the mask.
inline LesionPatch compose_lesion(const LesionPatch& mask, const NoiseField& noise) {
  if (mask.values.empty()) throw ParameterError("compose_lesion: empty mask");
  const NoiseField resized = resize_field(noise, mask.width, mask.height);
  LesionPatch out(mask.width, mask.height);
  for (std::size_t k = 0; k < mask.values.size(); ++k) {
    if (mask.support[k]) {
      out.values[k] = std::clamp(mask.values[k] * resized.values[k], 0.0, 1.0);
      out.support[k] = 1;
    }
  }
  return out;
}

// Full pipeline: sample radius, build the smoothed mask, deform it, texture it
// with normalized fractal noise.
inline LesionPatch make_lesion(const LesionParams& params, std::uint64_t rng_seed) {
  params.validate();
  Rng rng(mix_seed(rng_seed, 0));
  const int r = static_cast<int>(rng.uniform_int(params.radius_min, params.radius_max));
  const LesionPatch mask = smoothed_circle_mask(r, params.smoothness_alpha);
  const LesionPatch deformed = random_affine(mask, mix_seed(rng_seed, params.affine_seed + 1));

  FractalNoiseParams noise_params = params.noise;
  noise_params.seed = mix_seed(rng_seed, params.noise.seed + 2);
  const int side = fractal_canonical_size(noise_params);
  const NoiseField noise = normalize_field(fractal_perlin2d(side, side, noise_params));
  return compose_lesion(deformed, noise);
}

}  // namespace goldisim
