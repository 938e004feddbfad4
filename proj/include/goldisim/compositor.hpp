#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "goldisim/boxes.hpp"
#include "goldisim/errors.hpp"
#include "goldisim/image.hpp"
#include "goldisim/lesion.hpp"
#include "goldisim/noise.hpp"
#include "goldisim/parallel.hpp"
#include "goldisim/rng.hpp"

namespace goldisim {

// The five tunable simulator parameters.
struct SimParams {
  double persistence = 0.5;  // [0.2, 1]
  double lacunarity = 3.0;   // [2, 4]
  int res = 3;               // {2..5}
  double alpha = 0.5;        // smoothness, [0.2, 0.8]
  double beta = 0.5;         // whiteness, [0.1, 1]

  void validate() const {
    if (persistence < 0.2 || persistence > 1.0)
      throw ParameterError("persistence out of [0.2,1]");
    if (lacunarity < 2.0 || lacunarity > 4.0) throw ParameterError("lacunarity out of [2,4]");
    if (res < 2 || res > 5) throw ParameterError("res out of {2..5}");
    if (alpha < 0.2 || alpha > 0.8) throw ParameterError("alpha out of [0.2,0.8]");
    if (beta < 0.1 || beta > 1.0) throw ParameterError("beta out of [0.1,1]");
  }
};

inline SimParams sample_uniform_params(Rng& rng) {
  SimParams p;
  p.persistence = rng.uniform(0.2, 1.0);
  p.lacunarity = rng.uniform(2.0, 4.0);
  p.res = static_cast<int>(rng.uniform_int(2, 5));
  p.alpha = rng.uniform(0.2, 0.8);
  p.beta = rng.uniform(0.1, 1.0);
  return p;
}

struct LocationConfig {
  int margin = 240;  // reference margin at a 1024-pixel canvas
  int initial_whiteness_threshold = 90;
  int max_iteration = 20;
  std::uint64_t seed = 0;

  // M scales proportionally for non-1024 canvases.
  int effective_margin(int min_dim) const {
    return std::max(1, static_cast<int>(std::lround(margin * min_dim / 1024.0)));
  }
};

struct LocationResult {
  int x = 0;  // accepted center
  int y = 0;
  long evaluations = 0;  // candidate evaluations until acceptance
  int final_threshold = 0;
};

// The adaptive-threshold rejection loop: sample a center in [M, dim-M],
// average the image under the lesion support, accept when the average falls
// at or below the current whiteness threshold. Every max_iteration
// rejections the threshold is raised by one, so termination is guaranteed.
inline LocationResult decide_location(const GrayImage& image, const LesionPatch& lesion,
                                      const LocationConfig& config) {
  if (lesion.values.empty()) throw ParameterError("decide_location: empty lesion");
  const int min_dim = std::min(image.width, image.height);
  const int margin = config.effective_margin(min_dim);
  if (2 * margin >= min_dim)
    throw ParameterError("decide_location: margins leave no admissible region");
  if (lesion.width > 2 * margin || lesion.height > 2 * margin)
    throw ParameterError("decide_location: lesion larger than the admissible region");

  Rng rng(config.seed);
  int threshold = config.initial_whiteness_threshold;
  int iter_cnt = 0;
  LocationResult result;
  for (;;) {
    const int cx = static_cast<int>(rng.uniform_int(margin, image.width - margin));
    const int cy = static_cast<int>(rng.uniform_int(margin, image.height - margin));
    ++result.evaluations;

    const int x0 = cx - lesion.width / 2;
    const int y0 = cy - lesion.height / 2;
    long sum = 0, n = 0;
    for (int j = 0; j < lesion.height; ++j)
      for (int i = 0; i < lesion.width; ++i)
        if (lesion.in_support(i, j)) {
          sum += image.at(x0 + i, y0 + j);
          ++n;
        }
    if (n > 0 && static_cast<double>(sum) / n <= threshold) {
      result.x = cx;
      result.y = cy;
      result.final_threshold = threshold;
      return result;
    }
    if (++iter_cnt >= config.max_iteration) {
      threshold = std::min(threshold + 1, 255);
      iter_cnt = 0;
    }
  }
}

// v_out = v_in(1 - beta*v_noise) + 255*beta*v_noise, rounded half-up.
inline GrayImage insert_lesion(const GrayImage& image, const LesionPatch& lesion,
                               int center_x, int center_y, double beta) {
  if (beta < 0.1 || beta > 1.0) throw ParameterError("insert_lesion: beta out of [0.1,1]");
  const int x0 = center_x - lesion.width / 2;
  const int y0 = center_y - lesion.height / 2;
  if (x0 < 0 || y0 < 0 || x0 + lesion.width > image.width || y0 + lesion.height > image.height)
    throw ParameterError("insert_lesion: placement out of bounds");

  GrayImage out = image;
  for (int j = 0; j < lesion.height; ++j)
    for (int i = 0; i < lesion.width; ++i)
      if (lesion.in_support(i, j)) {
        const double v_in = image.at(x0 + i, y0 + j);
        const double v_noise = lesion.value(i, j);
        const double v_out = v_in * (1.0 - beta * v_noise) + 255.0 * beta * v_noise;
        out.at(x0 + i, y0 + j) = static_cast<std::uint8_t>(std::floor(v_out + 0.5));
      }
  return out;
}

// Crude anatomical proxy: two dark elliptical lung fields on a lighter body,
// with low-frequency fractal texture. Intensity statistics are what matter:
// the lung interiors stay at or below the location algorithm's initial
// whiteness threshold.
inline GrayImage phantom_normal(int width, int height, std::uint64_t seed) {
  if (width < 64 || height < 64) throw ParameterError("phantom_normal: dimensions must be >= 64");
  FractalNoiseParams tex;
  tex.persistence = 0.5;
  tex.lacunarity = 2.0;
  tex.res = 3;
  tex.octaves = 4;
  tex.seed = mix_seed(seed, 7);
  const NoiseField texture = normalize_field(fractal_perlin2d(width, height, tex));

  const double lcx1 = 0.30 * width, lcx2 = 0.70 * width, lcy = 0.48 * height;
  const double ax = 0.16 * width, ay = 0.30 * height;
  GrayImage img(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double e1 = std::pow((x - lcx1) / ax, 2) + std::pow((y - lcy) / ay, 2);
      const double e2 = std::pow((x - lcx2) / ax, 2) + std::pow((y - lcy) / ay, 2);
      const double t = texture.at(x, y);
      double v;
      if (e1 <= 1.0 || e2 <= 1.0)
        v = 45.0 + 30.0 * t;  // lung field, mean ~60
      else
        v = 150.0 + 40.0 * t;  // body, mean ~170
      img.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
    }
  return img;
}

struct AnnotatedImage {
  GrayImage image;
  std::vector<BoundingBox> boxes;
};

struct AnnotatedDataset {
  std::vector<AnnotatedImage> items;
  std::uint64_t seed = 0;  // also keys deterministic window sampling downstream
};

struct DatasetGenOptions {
  int lesions_per_image = 1;
  int radius_min = 20;  // reference radii at a 1024-pixel canvas
  int radius_max = 75;
  bool scale_radius_to_canvas = true;
  LocationConfig location;
};

namespace detail {

inline void scaled_radius(const DatasetGenOptions& opt, int min_dim, int& rmin, int& rmax) {
  rmin = opt.radius_min;
  rmax = opt.radius_max;
  if (opt.scale_radius_to_canvas && min_dim != 1024) {
    rmin = std::max(2, static_cast<int>(std::lround(opt.radius_min * min_dim / 1024.0)));
    rmax = std::max(rmin, static_cast<int>(std::lround(opt.radius_max * min_dim / 1024.0)));
  }
}

}  // namespace detail

// Insert lesions_per_image lesions with the given simulator parameters into
// one normal image. Deterministic for (image, phi, image_seed).
inline AnnotatedImage synthesize_abnormal(const GrayImage& normal, const SimParams& phi,
                                          const DatasetGenOptions& opt, std::uint64_t image_seed) {
  phi.validate();
  int rmin, rmax;
  detail::scaled_radius(opt, std::min(normal.width, normal.height), rmin, rmax);

  AnnotatedImage out;
  out.image = normal;
  for (int j = 0; j < opt.lesions_per_image; ++j) {
    LesionParams lp;
    lp.radius_min = rmin;
    lp.radius_max = rmax;
    lp.smoothness_alpha = phi.alpha;
    lp.noise.persistence = phi.persistence;
    lp.noise.lacunarity = phi.lacunarity;
    lp.noise.res = phi.res;
    lp.noise.octaves = 5;
    const LesionPatch lesion = make_lesion(lp, mix_seed(image_seed, 100 + j));

    LocationConfig loc = opt.location;
    loc.seed = mix_seed(image_seed, 200 + j);
    const LocationResult pos = decide_location(out.image, lesion, loc);
    out.image = insert_lesion(out.image, lesion, pos.x, pos.y, phi.beta);

    BoundingBox gt;
    gt.x = pos.x - lesion.width / 2;
    gt.y = pos.y - lesion.height / 2;
    gt.w = lesion.width;
    gt.h = lesion.height;
    gt.evaluable = true;
    out.boxes.push_back(gt);
  }
  return out;
}

// Fixed-phi dataset; per-image seeds are derived from (seed, index) so the
// result does not depend on generation order.
inline AnnotatedDataset generate_dataset(const std::vector<GrayImage>& normals,
                                         const SimParams& phi, int lesions_per_image,
                                         std::uint64_t seed,
                                         const DatasetGenOptions& base_opt = {}) {
  if (lesions_per_image < 1) throw ParameterError("generate_dataset: lesions_per_image >= 1");
  DatasetGenOptions opt = base_opt;
  opt.lesions_per_image = lesions_per_image;
  AnnotatedDataset ds;
  ds.seed = seed;
  ds.items.resize(normals.size());
  parallel_for(normals.size(), [&](std::size_t i) {
    ds.items[i] = synthesize_abnormal(normals[i], phi, opt, mix_seed(seed, i));
  });
  return ds;
}

// UDR data: each image independently draws phi uniformly from the parameter
// ranges.
inline AnnotatedDataset generate_dataset_udr(const std::vector<GrayImage>& normals,
                                             int lesions_per_image, std::uint64_t seed,
                                             const DatasetGenOptions& base_opt = {},
                                             std::vector<SimParams>* drawn_params = nullptr) {
  if (lesions_per_image < 1) throw ParameterError("generate_dataset_udr: lesions_per_image >= 1");
  DatasetGenOptions opt = base_opt;
  opt.lesions_per_image = lesions_per_image;
  AnnotatedDataset ds;
  ds.seed = seed;
  ds.items.resize(normals.size());
  std::vector<SimParams> params(normals.size());
  for (std::size_t i = 0; i < normals.size(); ++i) {
    Rng rng(mix_seed(seed, 5000 + i));
    params[i] = sample_uniform_params(rng);
  }
  parallel_for(normals.size(), [&](std::size_t i) {
    ds.items[i] = synthesize_abnormal(normals[i], params[i], opt, mix_seed(seed, i));
  });
  if (drawn_params) *drawn_params = std::move(params);
  return ds;
}

// ---- JSON Lines annotations ----

struct AnnotationRecord {
  std::string image;  // relative path
  std::vector<BoundingBox> boxes;
};

inline void write_annotations(const std::vector<AnnotationRecord>& records,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  for (const auto& rec : records) {
    nlohmann::json j;
    j["image"] = rec.image;
    j["boxes"] = nlohmann::json::array();
    for (const auto& b : rec.boxes)
      j["boxes"].push_back({{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h},
                            {"evaluable", b.evaluable}});
    out << j.dump() << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

inline std::vector<AnnotationRecord> read_annotations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for read: " + path);
  std::vector<AnnotationRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    AnnotationRecord rec;
    rec.image = j.at("image").get<std::string>();
    for (const auto& jb : j.at("boxes")) {
      BoundingBox b;
      b.x = jb.at("x").get<int>();
      b.y = jb.at("y").get<int>();
      b.w = jb.at("w").get<int>();
      b.h = jb.at("h").get<int>();
      b.evaluable = jb.at("evaluable").get<bool>();
      rec.boxes.push_back(b);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace goldisim
