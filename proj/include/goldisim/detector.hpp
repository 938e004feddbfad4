#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "goldisim/boxes.hpp"
#include "goldisim/compositor.hpp"
#include "goldisim/errors.hpp"
#include "goldisim/image.hpp"
#include "goldisim/metrics.hpp"
#include "goldisim/parallel.hpp"
#include "goldisim/rng.hpp"

namespace goldisim {

inline constexpr int kFeatureDim = 7;
inline constexpr int kParamDim = kFeatureDim + 1;  // weights + bias

// Linear logistic scorer over hand-crafted window features.
struct DetectorParams {
  std::vector<double> weights = std::vector<double>(kFeatureDim, 0.0);
  double bias = 0.0;

  void validate() const {
    if (weights.size() != kFeatureDim)
      throw ParameterError("DetectorParams: expected 7 weights");
    for (double w : weights)
      if (!std::isfinite(w)) throw ParameterError("DetectorParams: non-finite weight");
    if (!std::isfinite(bias)) throw ParameterError("DetectorParams: non-finite bias");
  }
};

inline std::vector<double> flatten(const DetectorParams& p) {
  std::vector<double> theta = p.weights;
  theta.push_back(p.bias);
  return theta;
}

inline DetectorParams unflatten(const std::vector<double>& theta) {
  if (theta.size() != kParamDim) throw ParameterError("unflatten: expected 8 entries");
  DetectorParams p;
  p.weights.assign(theta.begin(), theta.begin() + kFeatureDim);
  p.bias = theta.back();
  return p;
}

namespace detail {

// Summed-area tables for O(1) window statistics.
class SatImage {
 public:
  explicit SatImage(const GrayImage& img)
      : width_(img.width), height_(img.height),
        sum_((width_ + 1) * (height_ + 1), 0.0),
        sum_sq_((width_ + 1) * (height_ + 1), 0.0) {
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x) {
        const double v = img.at(x, y);
        const std::size_t i = idx(x + 1, y + 1);
        sum_[i] = v + sum_[idx(x, y + 1)] + sum_[idx(x + 1, y)] - sum_[idx(x, y)];
        sum_sq_[i] =
            v * v + sum_sq_[idx(x, y + 1)] + sum_sq_[idx(x + 1, y)] - sum_sq_[idx(x, y)];
      }
  }

  // sums over [x0,x1) x [y0,y1)
  double sum(int x0, int y0, int x1, int y1) const {
    return sum_[idx(x1, y1)] - sum_[idx(x0, y1)] - sum_[idx(x1, y0)] + sum_[idx(x0, y0)];
  }
  double sum_sq(int x0, int y0, int x1, int y1) const {
    return sum_sq_[idx(x1, y1)] - sum_sq_[idx(x0, y1)] - sum_sq_[idx(x1, y0)] +
           sum_sq_[idx(x0, y0)];
  }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (width_ + 1) + x; }
  int width_, height_;
  std::vector<double> sum_, sum_sq_;
};

inline std::array<double, kFeatureDim> window_features(const SatImage& sat,
                                                       const BoundingBox& w) {
  const int x0 = w.x, y0 = w.y, x1 = w.x + w.w, y1 = w.y + w.h;
  const double n = static_cast<double>(w.w) * w.h;
  const double mean = sat.sum(x0, y0, x1, y1) / n;
  const double var = std::max(0.0, sat.sum_sq(x0, y0, x1, y1) / n - mean * mean);

  // surround ring: window expanded by half its side each way, clipped
  const int ex = std::max(2, w.w / 2);
  const int ey = std::max(2, w.h / 2);
  const int rx0 = std::max(0, x0 - ex), ry0 = std::max(0, y0 - ey);
  const int rx1 = std::min(sat.width(), x1 + ex), ry1 = std::min(sat.height(), y1 + ey);
  const double ring_n = static_cast<double>(rx1 - rx0) * (ry1 - ry0) - n;
  double contrast = 0.0;
  if (ring_n > 0.0) {
    const double ring_mean = (sat.sum(rx0, ry0, rx1, ry1) - sat.sum(x0, y0, x1, y1)) / ring_n;
    contrast = (mean - ring_mean) / 255.0;
  }

  const int mx = x0 + w.w / 2, my = y0 + w.h / 2;
  auto quadrant_mean = [&](int qx0, int qy0, int qx1, int qy1) {
    const double qn = static_cast<double>(qx1 - qx0) * (qy1 - qy0);
    return qn > 0.0 ? sat.sum(qx0, qy0, qx1, qy1) / (qn * 255.0) : 0.0;
  };
  return {mean / 255.0,
          std::sqrt(var) / 255.0,
          contrast,
          quadrant_mean(x0, y0, mx, my),
          quadrant_mean(mx, y0, x1, my),
          quadrant_mean(x0, my, mx, y1),
          quadrant_mean(mx, my, x1, y1)};
}

inline double logistic(double s) { return 1.0 / (1.0 + std::exp(-s)); }

inline double score_features(const DetectorParams& p, const std::array<double, kFeatureDim>& f) {
  double s = p.bias;
  for (int k = 0; k < kFeatureDim; ++k) s += p.weights[k] * f[k];
  return logistic(s);
}

// window sides at a 256-pixel reference canvas
inline std::vector<int> detect_sides(int min_dim) {
  static constexpr int kBase[3] = {24, 40, 64};
  std::vector<int> sides;
  for (int base : kBase) {
    int side = static_cast<int>(std::lround(base * min_dim / 256.0));
    side = std::clamp(side, 8, min_dim);
    if (sides.empty() || sides.back() != side) sides.push_back(side);
  }
  return sides;
}

}  // namespace detail

// Fixed-length descriptor of one window: mean, std, center-vs-surround
// contrast, four quadrant means. Intensities scaled by 255.
inline std::array<double, kFeatureDim> extract_features(const GrayImage& image,
                                                        const BoundingBox& window) {
  window.validate();
  if (window.x < 0 || window.y < 0 || window.x + window.w > image.width ||
      window.y + window.h > image.height)
    throw ParameterError("extract_features: window out of bounds");
  return detail::window_features(detail::SatImage(image), window);
}

// Multi-scale sliding-window scan, logistic scoring, greedy NMS at
// intersection/min-area > 0.3. Deterministic scan order; score ties keep the
// earlier window.
inline std::vector<Prediction> detect(const DetectorParams& params, const GrayImage& image,
                                      double min_score = 0.05) {
  params.validate();
  const detail::SatImage sat(image);
  std::vector<Prediction> raw;
  for (int side : detail::detect_sides(std::min(image.width, image.height))) {
    const int stride = std::max(1, side / 4);
    for (int y = 0; y + side <= image.height; y += stride)
      for (int x = 0; x + side <= image.width; x += stride) {
        BoundingBox w{x, y, side, side, true};
        const double score = detail::score_features(params, detail::window_features(sat, w));
        if (score >= min_score) raw.push_back({w, score});
      }
  }

  std::stable_sort(raw.begin(), raw.end(), [](const Prediction& a, const Prediction& b) {
    return a.confidence > b.confidence;
  });
  std::vector<Prediction> kept;
  for (const auto& cand : raw) {
    bool suppressed = false;
    for (const auto& k : kept) {
      const double inter = static_cast<double>(box_intersection_area(cand.box, k.box));
      const double min_area = static_cast<double>(std::min(cand.box.area(), k.box.area()));
      if (inter / min_area > 0.3) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

// ---- training-window sampling and the logistic loss ----

struct WindowSample {
  std::array<double, kFeatureDim> features{};
  int label = 0;  // 1 = lesion window, 0 = background
};

// Positives: windows at dice >= 0.5 with a ground-truth box (the box itself
// plus jitters). Negatives: random windows at dice < 0.1, three per positive.
// Sampling is keyed off the dataset's own seed so the loss is a fixed
// function of (params, dataset).
inline std::vector<WindowSample> build_window_samples(const AnnotatedDataset& dataset) {
  std::vector<WindowSample> samples;
  Rng rng(mix_seed(dataset.seed, 0xB00F));
  long n_pos = 0;
  for (const auto& item : dataset.items) {
    const detail::SatImage sat(item.image);
    for (const auto& gt : item.boxes) {
      // the exact box, then jittered variants kept if they stay at dice >= 0.5
      std::vector<BoundingBox> pos{gt};
      for (int j = 0; j < 6 && pos.size() < 4; ++j) {
        BoundingBox c = gt;
        c.x += static_cast<int>(rng.uniform_int(-gt.w / 5, gt.w / 5));
        c.y += static_cast<int>(rng.uniform_int(-gt.h / 5, gt.h / 5));
        c.w = std::max(4, static_cast<int>(std::lround(gt.w * rng.uniform(0.85, 1.15))));
        c.h = std::max(4, static_cast<int>(std::lround(gt.h * rng.uniform(0.85, 1.15))));
        c.x = std::clamp(c.x, 0, item.image.width - c.w);
        c.y = std::clamp(c.y, 0, item.image.height - c.h);
        if (dice(c, gt) >= 0.5) pos.push_back(c);
      }
      for (const auto& b : pos) {
        samples.push_back({detail::window_features(sat, b), 1});
        ++n_pos;
      }
    }
  }
  // negatives drawn from random images until the 1:3 ratio is met
  const long n_neg_target = 3 * n_pos;
  long n_neg = 0;
  long guard = 0;
  while (n_neg < n_neg_target && !dataset.items.empty() && guard < 100 * n_neg_target + 1000) {
    ++guard;
    const auto& item = dataset.items[rng.uniform_int(0, dataset.items.size() - 1)];
    const auto sides = detail::detect_sides(std::min(item.image.width, item.image.height));
    const int side = sides[rng.uniform_int(0, sides.size() - 1)];
    if (side > item.image.width || side > item.image.height) continue;
    BoundingBox c{static_cast<int>(rng.uniform_int(0, item.image.width - side)),
                  static_cast<int>(rng.uniform_int(0, item.image.height - side)), side, side,
                  true};
    bool clean = true;
    for (const auto& gt : item.boxes)
      if (dice(c, gt) >= 0.1) {
        clean = false;
        break;
      }
    if (!clean) continue;
    samples.push_back({detail::window_features(detail::SatImage(item.image), c), 0});
    ++n_neg;
  }
  if (samples.empty()) throw ParameterError("build_window_samples: no labeled windows");
  return samples;
}

inline double loss_on_samples(const DetectorParams& params,
                              const std::vector<WindowSample>& samples) {
  if (samples.empty()) throw ParameterError("loss: empty sample set");
  double total = 0.0;
  for (const auto& s : samples) {
    const double p = detail::score_features(params, s.features);
    // clamp away from 0/1 so saturated samples stay finite
    const double pc = std::clamp(p, 1e-15, 1.0 - 1e-15);
    total += s.label ? -std::log(pc) : -std::log(1.0 - pc);
  }
  return total / static_cast<double>(samples.size());
}

inline double loss(const DetectorParams& params, const AnnotatedDataset& dataset) {
  return loss_on_samples(params, build_window_samples(dataset));
}

// Mean analytic gradient of the logistic loss over `indices` (all samples if
// empty), in flattened (weights, bias) order.
inline std::vector<double> loss_gradient(const std::vector<double>& theta,
                                         const std::vector<WindowSample>& samples,
                                         const std::vector<std::size_t>& indices = {}) {
  const DetectorParams params = unflatten(theta);
  std::vector<double> grad(kParamDim, 0.0);
  const std::size_t n = indices.empty() ? samples.size() : indices.size();
  if (n == 0) throw ParameterError("loss_gradient: empty batch");
  for (std::size_t ii = 0; ii < n; ++ii) {
    const WindowSample& s = samples[indices.empty() ? ii : indices[ii]];
    const double p = detail::score_features(params, s.features);
    const double err = p - s.label;
    for (int k = 0; k < kFeatureDim; ++k) grad[k] += err * s.features[k];
    grad[kFeatureDim] += err;
  }
  for (double& g : grad) g /= static_cast<double>(n);
  return grad;
}

// trace of the loss Hessian, closed form: mean p(1-p) (|f|^2 + 1)
inline double loss_hessian_trace(const std::vector<double>& theta,
                                 const std::vector<WindowSample>& samples) {
  const DetectorParams params = unflatten(theta);
  if (samples.empty()) throw ParameterError("loss_hessian_trace: empty sample set");
  double tr = 0.0;
  for (const auto& s : samples) {
    const double p = detail::score_features(params, s.features);
    double f2 = 1.0;  // bias coordinate
    for (int k = 0; k < kFeatureDim; ++k) f2 += s.features[k] * s.features[k];
    tr += p * (1.0 - p) * f2;
  }
  return tr / static_cast<double>(samples.size());
}

// ---- optimizers ----

enum class OptimizerKind { sgd, nvrm_sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::nvrm_sgd;
  double learning_rate = 0.0002;
  int batch_size = 64;
  int epochs = 40;
  double variability_scale_b = 0.01;  // nvrm only
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
    if (variability_scale_b < 0.0) throw ParameterError("b must be >= 0");
    if (epochs < 0) throw ParameterError("epochs must be >= 0");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  }
};

struct OptimizerState {
  std::vector<double> m = std::vector<double>(kParamDim, 0.0);
  std::vector<double> v = std::vector<double>(kParamDim, 0.0);
  long t = 0;
};

// One descent step with a precomputed gradient.
inline void apply_step(std::vector<double>& theta, const std::vector<double>& grad,
                       const OptimizerConfig& cfg, OptimizerState& state) {
  switch (cfg.kind) {
    case OptimizerKind::sgd:
    case OptimizerKind::nvrm_sgd:
      for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= cfg.learning_rate * grad[k];
      break;
    case OptimizerKind::adam: {
      static constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      ++state.t;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * grad[k];
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * grad[k] * grad[k];
        const double mh = state.m[k] / (1.0 - std::pow(b1, state.t));
        const double vh = state.v[k] / (1.0 - std::pow(b2, state.t));
        theta[k] -= cfg.learning_rate * mh / (std::sqrt(vh) + eps);
      }
      break;
    }
  }
}

struct TrainReport {
  std::vector<double> train_loss;  // per epoch, on the full sample set
  std::vector<double> val_score;   // per epoch, FAUC on the validation set
  int selected_epoch = -1;         // index of the max validation score
  DetectorParams final_params;
};

inline double performance_V(const DetectorParams& params, const AnnotatedDataset& dataset);

// Minibatch descent with per-epoch validation; returns the parameters of the
// best validation epoch. NVRM evaluates each step's gradient at theta+eps,
// eps ~ N(0, b^2 I), and applies it to theta. The shuffle and noise RNG
// streams are separate so b=0 reproduces plain SGD exactly.
inline TrainReport train(const DetectorParams& params0, const AnnotatedDataset& train_set,
                         const AnnotatedDataset& val_set, const OptimizerConfig& cfg) {
  cfg.validate();
  params0.validate();
  TrainReport report;
  report.final_params = params0;
  if (cfg.epochs == 0) return report;

  const std::vector<WindowSample> samples = build_window_samples(train_set);
  std::vector<double> theta = flatten(params0);
  OptimizerState opt_state;
  Rng shuffle_rng(mix_seed(cfg.seed, 1));
  Rng noise_rng(mix_seed(cfg.seed, 2));

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  double best_val = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i-- > 1;)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, static_cast<long>(i))]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
      std::vector<double> eval_point = theta;
      if (cfg.kind == OptimizerKind::nvrm_sgd) {
        for (double& x : eval_point) x += cfg.variability_scale_b * noise_rng.gaussian();
      }
      const std::vector<double> grad = loss_gradient(eval_point, samples, batch);
      apply_step(theta, grad, cfg, opt_state);
    }

    const DetectorParams current = unflatten(theta);
    report.train_loss.push_back(loss_on_samples(current, samples));
    const double v = performance_V(current, val_set);
    report.val_score.push_back(v);
    if (v > best_val) {
      best_val = v;
      report.selected_epoch = epoch;
      report.final_params = current;
    }
  }
  return report;
}

// FAUC of the detector over a dataset.
inline double performance_V(const DetectorParams& params, const AnnotatedDataset& dataset) {
  std::vector<std::vector<Prediction>> preds(dataset.items.size());
  std::vector<std::vector<BoundingBox>> gts(dataset.items.size());
  parallel_for(dataset.items.size(), [&](std::size_t i) {
    preds[i] = detect(params, dataset.items[i].image);
    gts[i] = dataset.items[i].boxes;
  });
  return fauc(froc(preds, gts, static_cast<long>(dataset.items.size())));
}

// Loss increase on earlier data after further training.
inline double forgetting_score(const DetectorParams& params_t, const DetectorParams& params_prev,
                               const AnnotatedDataset& dataset_prev) {
  const std::vector<WindowSample> samples = build_window_samples(dataset_prev);
  return loss_on_samples(params_t, samples) - loss_on_samples(params_prev, samples);
}

struct NvrmRiskCheck {
  double mc_estimate = 0.0;
  double taylor_estimate = 0.0;
};

// Monte-Carlo risk under Gaussian parameter noise vs the trace expansion
// L(theta) + b^2 tr(H). The expansion is kept in the quoted form; the exact
// Gaussian quadratic expectation carries an extra 1/2 on the trace term,
// negligible at small b.
inline NvrmRiskCheck nvrm_risk_check(const DetectorParams& params,
                                     const AnnotatedDataset& dataset, double b, long n_mc,
                                     std::uint64_t seed = 12345) {
  if (b < 0.0 || b > 0.05) throw ParameterError("nvrm_risk_check: b must be in [0, 0.05]");
  if (n_mc < 1) throw ParameterError("nvrm_risk_check: n_mc must be >= 1");
  const std::vector<WindowSample> samples = build_window_samples(dataset);
  const std::vector<double> theta = flatten(params);

  const std::vector<double> grad = loss_gradient(theta, samples);
  double gnorm = 0.0;
  for (double g : grad) gnorm += g * g;
  gnorm = std::sqrt(gnorm);
  if (gnorm > 1e-3)
    throw NumericalError("nvrm_risk_check: not at a stationary point (|grad| = " +
                         std::to_string(gnorm) + ")");

  const double base = loss_on_samples(params, samples);
  NvrmRiskCheck out;
  out.taylor_estimate = base + b * b * loss_hessian_trace(theta, samples);
  if (b == 0.0) {
    out.mc_estimate = base;
    return out;
  }
  Rng rng(seed);
  double acc = 0.0;
  for (long i = 0; i < n_mc; ++i) {
    std::vector<double> perturbed = theta;
    for (double& x : perturbed) x += b * rng.gaussian();
    acc += loss_on_samples(unflatten(perturbed), samples);
  }
  out.mc_estimate = acc / static_cast<double>(n_mc);
  return out;
}

// ---- checkpoint and log formats ----

inline void write_checkpoint(const DetectorParams& params, const std::string& path) {
  nlohmann::json j;
  j["weights"] = params.weights;
  j["bias"] = params.bias;
  j["feature_version"] = 1;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline DetectorParams read_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for read: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("feature_version").get<int>() != 1)
    throw IoError("unsupported checkpoint feature_version: " + path);
  DetectorParams p;
  p.weights = j.at("weights").get<std::vector<double>>();
  p.bias = j.at("bias").get<double>();
  p.validate();
  return p;
}

inline void write_training_log(const TrainReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "epoch,train_loss,val_fauc\n";
  out.precision(17);
  for (std::size_t e = 0; e < report.train_loss.size(); ++e)
    out << e << "," << report.train_loss[e] << "," << report.val_score[e] << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace goldisim
