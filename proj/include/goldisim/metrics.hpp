#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "goldisim/boxes.hpp"
#include "goldisim/errors.hpp"

namespace goldisim {

struct Prediction {
  BoundingBox box;
  double confidence = 0.0;
};

struct MatchCounts {
  long tp = 0;
  long fp = 0;
  long ignored = 0;
};

struct FrocPoint {
  double threshold = 0.0;
  double fp_per_image = 0.0;
  double tpr = 0.0;
};

struct FrocCurve {
  std::vector<FrocPoint> points;  // ordered by decreasing threshold
  long n_images = 0;
  long n_evaluable_gt = 0;
};

namespace detail {

// Greedy matching at the dice >= 0.2 rule, descending confidence, ties broken
// by (x, then y). A prediction whose best use is a claimed or non-evaluable
// ground truth is ignored rather than counted.
inline MatchCounts match_kept(std::vector<Prediction> preds,
                              const std::vector<BoundingBox>& gts) {
  std::sort(preds.begin(), preds.end(), [](const Prediction& a, const Prediction& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.box.x != b.box.x) return a.box.x < b.box.x;
    return a.box.y < b.box.y;
  });
  std::vector<std::uint8_t> claimed(gts.size(), 0);
  MatchCounts counts;
  for (const auto& p : preds) {
    bool matched_free = false;
    bool matched_any = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (dice(p.box, gts[g]) < 0.2) continue;
      matched_any = true;
      if (gts[g].evaluable && !claimed[g]) {
        claimed[g] = 1;
        matched_free = true;
        break;
      }
    }
    if (matched_free) ++counts.tp;
    else if (matched_any) ++counts.ignored;
    else ++counts.fp;
  }
  return counts;
}

}  // namespace detail

// Keep predictions with confidence strictly above the threshold, then match.
inline MatchCounts match_at_threshold(const std::vector<Prediction>& preds,
                                      const std::vector<BoundingBox>& gts, double threshold) {
  std::vector<Prediction> kept;
  for (const auto& p : preds)
    if (p.confidence > threshold) kept.push_back(p);
  return detail::match_kept(std::move(kept), gts);
}

// Enumerate distinct confidence values as thresholds (inclusive comparison),
// with a +inf sentinel point at (0 FP, 0 TPR).
inline FrocCurve froc(const std::vector<std::vector<Prediction>>& preds_per_image,
                      const std::vector<std::vector<BoundingBox>>& gts_per_image,
                      long n_images) {
  if (n_images < 1) throw ParameterError("froc: n_images must be >= 1");
  if (preds_per_image.size() != gts_per_image.size())
    throw ParameterError("froc: preds/gts image counts differ");

  long n_evaluable = 0;
  for (const auto& gts : gts_per_image)
    for (const auto& g : gts)
      if (g.evaluable) ++n_evaluable;
  if (n_evaluable == 0) throw MetricUndefinedError("froc: no evaluable ground truth");

  std::set<double, std::greater<double>> thresholds;
  for (const auto& preds : preds_per_image)
    for (const auto& p : preds) thresholds.insert(p.confidence);

  FrocCurve curve;
  curve.n_images = n_images;
  curve.n_evaluable_gt = n_evaluable;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  for (double t : thresholds) {
    MatchCounts total;
    for (std::size_t i = 0; i < preds_per_image.size(); ++i) {
      std::vector<Prediction> kept;
      for (const auto& p : preds_per_image[i])
        if (p.confidence >= t) kept.push_back(p);
      const MatchCounts c = detail::match_kept(std::move(kept), gts_per_image[i]);
      total.tp += c.tp;
      total.fp += c.fp;
      total.ignored += c.ignored;
    }
    curve.points.push_back({t, static_cast<double>(total.fp) / n_images,
                            static_cast<double>(total.tp) / n_evaluable});
  }
  return curve;
}

namespace detail {

// Piecewise-linear TPR as a function of FP/image; duplicate abscissae keep
// the highest TPR, and the curve extends flat beyond its last point.
inline double interp_tpr(const FrocCurve& curve, double fpi) {
  std::vector<std::pair<double, double>> verts;
  for (const auto& p : curve.points) {
    if (!verts.empty() && verts.back().first == p.fp_per_image)
      verts.back().second = std::max(verts.back().second, p.tpr);
    else
      verts.emplace_back(p.fp_per_image, p.tpr);
  }
  if (verts.empty()) return 0.0;
  if (fpi <= verts.front().first) return verts.front().second;
  for (std::size_t i = 1; i < verts.size(); ++i) {
    if (fpi <= verts[i].first) {
      const auto [x0, y0] = verts[i - 1];
      const auto [x1, y1] = verts[i];
      return y0 + (y1 - y0) * (fpi - x0) / (x1 - x0);
    }
  }
  return verts.back().second;
}

}  // namespace detail

// Trapezoidal area of the linearly interpolated curve over FP/image in [0,1].
inline double fauc(const FrocCurve& curve) {
  std::vector<double> xs{0.0, 1.0};
  for (const auto& p : curve.points)
    if (p.fp_per_image > 0.0 && p.fp_per_image < 1.0) xs.push_back(p.fp_per_image);
  std::sort(xs.begin(), xs.end());
  double area = 0.0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double y0 = detail::interp_tpr(curve, xs[i - 1]);
    const double y1 = detail::interp_tpr(curve, xs[i]);
    area += 0.5 * (y0 + y1) * (xs[i] - xs[i - 1]);
  }
  return area;
}

// Mean interpolated TPR at FP/image in {1/8, 1/4, 1/2, 1, 2, 4, 8}.
inline double cpm(const FrocCurve& curve) {
  static constexpr double kPoints[7] = {0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
  double sum = 0.0;
  for (double f : kPoints) sum += detail::interp_tpr(curve, f);
  return sum / 7.0;
}

inline double tpr_at_fpi(const FrocCurve& curve, double fpi = 0.2) {
  if (fpi < 0.0) throw ParameterError("tpr_at_fpi: fpi must be >= 0");
  return detail::interp_tpr(curve, fpi);
}

// ---- exports ----

inline void write_froc_csv(const FrocCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "threshold,fp_per_image,tpr\n";
  out.precision(17);
  for (const auto& p : curve.points)
    out << p.threshold << "," << p.fp_per_image << "," << p.tpr << "\n";
  if (!out) throw IoError("write failed: " + path);
}

inline void write_metrics_json(const FrocCurve& curve, const std::string& path) {
  nlohmann::json j;
  j["fauc"] = fauc(curve);
  j["cpm"] = cpm(curve);
  j["tpr_at_fpi_0.2"] = tpr_at_fpi(curve, 0.2);
  j["n_images"] = curve.n_images;
  j["n_gt"] = curve.n_evaluable_gt;
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path);
}

// Standalone SVG: FP/image horizontal, TPR vertical.
inline void write_froc_svg(const FrocCurve& curve, const std::string& path,
                           double max_fpi = 2.0) {
  const int W = 640, H = 480, ml = 60, mb = 50, mt = 20, mr = 20;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto px = [&](double f) { return ml + pw * std::min(f, max_fpi) / max_fpi; };
  auto py = [&](double t) { return mt + ph * (1.0 - t); };

  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
      << mt + ph << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double f = max_fpi * i / 4.0;
    out << "<text x=\"" << px(f) << "\" y=\"" << H - mb + 20
        << "\" font-size=\"12\" text-anchor=\"middle\">" << f << "</text>\n";
    const double t = i / 4.0;
    out << "<text x=\"" << ml - 8 << "\" y=\"" << py(t) + 4
        << "\" font-size=\"12\" text-anchor=\"end\">" << t << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10
      << "\" font-size=\"14\" text-anchor=\"middle\">FP per image</text>\n";
  out << "<text x=\"15\" y=\"" << mt + ph / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
      << mt + ph / 2 << ")\">TPR</text>\n";

  out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (const auto& p : curve.points)
    if (std::isfinite(p.threshold) || p.fp_per_image == 0.0)
      out << px(p.fp_per_image) << "," << py(p.tpr) << " ";
  out << "\"/>\n</svg>\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace goldisim
