#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "goldisim/errors.hpp"
#include "goldisim/rng.hpp"

namespace goldisim {

// Real-valued grid, one scalar per pixel.
struct NoiseField {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  NoiseField() = default;
  NoiseField(int w, int h, double fill = 0.0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {
    if (w < 1 || h < 1) throw ParameterError("NoiseField: dimensions must be >= 1");
  }

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct FractalNoiseParams {
  double persistence = 0.5;  // amplitude decay per octave, in (0,1]
  double lacunarity = 2.0;   // frequency growth per octave, > 1
  int res = 2;               // base noise periods per axis
  int octaves = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(persistence > 0.0 && persistence <= 1.0))
      throw ParameterError("persistence must be in (0,1]");
    if (!(lacunarity > 1.0)) throw ParameterError("lacunarity must be > 1");
    if (res < 1) throw ParameterError("res must be >= 1");
    if (octaves < 1) throw ParameterError("octaves must be >= 1");
  }
};

namespace detail {

// Unit gradients from 8 fixed directions, selected by a hash of (seed, cell).
inline void lattice_gradient(std::uint64_t seed, long gx, long gy, double& dx, double& dy) {
  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr double kDirs[8][2] = {
      {1, 0}, {-1, 0}, {0, 1}, {0, -1},
      {kInvSqrt2, kInvSqrt2}, {-kInvSqrt2, kInvSqrt2},
      {kInvSqrt2, -kInvSqrt2}, {-kInvSqrt2, -kInvSqrt2}};
  std::uint64_t h = seed;
  h = splitmix64(h) ^ (static_cast<std::uint64_t>(gx) * 0x8febca6bull + 1);
  h = splitmix64(h) ^ (static_cast<std::uint64_t>(gy) * 0xc2b2ae35ull + 3);
  const std::uint64_t idx = splitmix64(h) & 7;
  dx = kDirs[idx][0];
  dy = kDirs[idx][1];
}

inline double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Gradient noise sampled on a width x height pixel grid covering
// periods_x x periods_y lattice cells. Pixel (i,j) samples lattice
// coordinate (i*periods_x/width, j*periods_y/height); no divisibility
// requirement here.
inline NoiseField gradient_noise(int width, int height, int periods_x, int periods_y,
                                 std::uint64_t seed) {
  NoiseField field(width, height);
  const double sx = static_cast<double>(periods_x) / width;
  const double sy = static_cast<double>(periods_y) / height;
  for (int j = 0; j < height; ++j) {
    const double y = j * sy;
    const long cy = static_cast<long>(std::floor(y));
    const double fy = y - cy;
    const double wy = fade(fy);
    for (int i = 0; i < width; ++i) {
      const double x = i * sx;
      const long cx = static_cast<long>(std::floor(x));
      const double fx = x - cx;
      const double wx = fade(fx);

      double g00x, g00y, g10x, g10y, g01x, g01y, g11x, g11y;
      lattice_gradient(seed, cx, cy, g00x, g00y);
      lattice_gradient(seed, cx + 1, cy, g10x, g10y);
      lattice_gradient(seed, cx, cy + 1, g01x, g01y);
      lattice_gradient(seed, cx + 1, cy + 1, g11x, g11y);

      const double d00 = g00x * fx + g00y * fy;
      const double d10 = g10x * (fx - 1.0) + g10y * fy;
      const double d01 = g01x * fx + g01y * (fy - 1.0);
      const double d11 = g11x * (fx - 1.0) + g11y * (fy - 1.0);

      const double top = d00 + wx * (d10 - d00);
      const double bot = d01 + wx * (d11 - d01);
      field.at(i, j) = top + wy * (bot - top);
    }
  }
  return field;
}

// Octave 1 keeps the caller's seed so a single octave reproduces perlin2d.
inline std::uint64_t octave_seed(std::uint64_t seed, int octave) {
  return octave == 1 ? seed : mix_seed(seed, static_cast<std::uint64_t>(octave));
}

inline int octave_periods(const FractalNoiseParams& p, int octave, int dimension) {
  const double raw = p.res * std::pow(p.lacunarity, octave - 1);
  const long r = std::lround(raw);
  return static_cast<int>(std::clamp(r, 1L, static_cast<long>(dimension)));
}

}  // namespace detail

// Single octave of 2-D gradient noise; exactly 0 at lattice corner samples.
inline NoiseField perlin2d(int width, int height, int periods_x, int periods_y,
                           std::uint64_t seed) {
  if (width < 1 || height < 1) throw ParameterError("perlin2d: dimensions must be >= 1");
  if (periods_x < 1 || periods_y < 1) throw ParameterError("perlin2d: periods must be >= 1");
  if (width % periods_x != 0 || height % periods_y != 0)
    throw ParameterError("perlin2d: dimensions must be divisible by periods");
  return detail::gradient_noise(width, height, periods_x, periods_y, seed);
}

// Canonical field side under the package's shape convention,
// shape := lacunarity^(octaves-1) * res, rounded for non-integral lacunarity.
inline int fractal_canonical_size(const FractalNoiseParams& p) {
  p.validate();
  return static_cast<int>(std::lround(std::pow(p.lacunarity, p.octaves - 1)) * p.res);
}

// Sum of octaves: persistence^(i-1) * g_i at lacunarity^(i-1)-scaled frequency,
// each octave keyed by an independent derived seed.
inline NoiseField fractal_perlin2d(int width, int height, const FractalNoiseParams& params) {
  params.validate();
  if (width < 1 || height < 1) throw ParameterError("fractal_perlin2d: dimensions must be >= 1");
  if (params.res > std::min(width, height))
    throw ParameterError("fractal_perlin2d: base periods exceed grid dimension");

  NoiseField out(width, height);
  double amplitude = 1.0;
  for (int i = 1; i <= params.octaves; ++i) {
    const int px = detail::octave_periods(params, i, width);
    const int py = detail::octave_periods(params, i, height);
    const NoiseField octave =
        detail::gradient_noise(width, height, px, py, detail::octave_seed(params.seed, i));
    for (std::size_t k = 0; k < out.values.size(); ++k)
      out.values[k] += amplitude * octave.values[k];
    amplitude *= params.persistence;
  }
  return out;
}

// Affine min-max rescale to [0,1]; a constant field maps to all-0.5.
inline NoiseField normalize_field(const NoiseField& field) {
  if (field.values.empty()) throw ParameterError("normalize_field: empty field");
  const auto [mn_it, mx_it] = std::minmax_element(field.values.begin(), field.values.end());
  const double mn = *mn_it, mx = *mx_it;
  NoiseField out(field.width, field.height);
  if (mx == mn) {
    std::fill(out.values.begin(), out.values.end(), 0.5);
    return out;
  }
  const double inv = 1.0 / (mx - mn);
  for (std::size_t k = 0; k < field.values.size(); ++k)
    out.values[k] = (field.values[k] - mn) * inv;
  return out;
}

}  // namespace goldisim
