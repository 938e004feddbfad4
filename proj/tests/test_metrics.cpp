#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <vector>

#include "goldisim/metrics.hpp"
#include "goldisim/rng.hpp"

using namespace goldisim;

namespace {

// Independent re-derivation of the matching and curve, written from the rules
// rather than shared with the library code.
double oracle_dice(const BoundingBox& a, const BoundingBox& b) {
  const long x0 = std::max(a.x, b.x);
  const long y0 = std::max(a.y, b.y);
  const long x1 = std::min(a.x + a.w, b.x + b.w);
  const long y1 = std::min(a.y + a.h, b.y + b.h);
  const long inter = std::max(0l, x1 - x0) * std::max(0l, y1 - y0);
  const long denom = static_cast<long>(a.w) * a.h + static_cast<long>(b.w) * b.h;
  if (denom == 0) return 0.0;
  return 2.0 * inter / denom;
}

struct OracleCounts {
  long tp = 0, fp = 0;
};

OracleCounts oracle_match(const std::vector<Prediction>& preds_in,
                          const std::vector<BoundingBox>& gts, double threshold) {
  std::vector<Prediction> preds;
  for (const auto& p : preds_in)
    if (p.confidence >= threshold) preds.push_back(p);
  std::stable_sort(preds.begin(), preds.end(),
                   [](const Prediction& a, const Prediction& b) {
                     if (a.confidence != b.confidence) return a.confidence > b.confidence;
                     if (a.box.x != b.box.x) return a.box.x < b.box.x;
                     return a.box.y < b.box.y;
                   });
  std::vector<bool> used(gts.size(), false);
  OracleCounts c;
  for (const auto& p : preds) {
    bool hit_any = false;
    bool took_free = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (oracle_dice(p.box, gts[g]) < 0.2) continue;
      hit_any = true;
      if (gts[g].evaluable && !used[g]) {
        used[g] = true;
        took_free = true;
        break;
      }
    }
    if (took_free)
      ++c.tp;
    else if (!hit_any)
      ++c.fp;
    // otherwise ignored: neither tp nor fp
  }
  return c;
}

FrocCurve curve_of(std::vector<FrocPoint> pts) {
  FrocCurve c;
  c.points = std::move(pts);
  c.n_images = 1;
  c.n_evaluable_gt = 1;
  return c;
}

}  // namespace

TEST_CASE("dice worked examples") {
  const BoundingBox a{0, 0, 10, 10, true};
  SECTION("identical boxes") { REQUIRE(dice(a, a) == 1.0); }
  SECTION("half overlap") {
    const BoundingBox b{5, 0, 10, 10, true};
    REQUIRE(dice(a, b) == Catch::Approx(0.5));
  }
  SECTION("disjoint") {
    const BoundingBox b{20, 20, 10, 10, true};
    REQUIRE(dice(a, b) == 0.0);
  }
  SECTION("touching edges do not overlap") {
    const BoundingBox b{10, 0, 10, 10, true};
    REQUIRE(dice(a, b) == 0.0);
  }
}

TEST_CASE("match_at_threshold basic counting") {
  const std::vector<BoundingBox> gts{{0, 0, 10, 10, true}};
  SECTION("one prediction, one hit") {
    const std::vector<Prediction> preds{{{1, 1, 10, 10, true}, 0.9}};
    const MatchCounts c = match_at_threshold(preds, gts, 0.5);
    REQUIRE(c.tp == 1);
    REQUIRE(c.fp == 0);
    REQUIRE(c.ignored == 0);
  }
  SECTION("duplicate hit on a claimed box is ignored") {
    const std::vector<Prediction> preds{{{1, 1, 10, 10, true}, 0.9},
                                        {{0, 0, 10, 10, true}, 0.8}};
    const MatchCounts c = match_at_threshold(preds, gts, 0.5);
    REQUIRE(c.tp == 1);
    REQUIRE(c.fp == 0);
    REQUIRE(c.ignored == 1);
  }
  SECTION("hit on a non-evaluable box is ignored") {
    const std::vector<BoundingBox> ne{{0, 0, 10, 10, false}};
    const std::vector<Prediction> preds{{{1, 1, 10, 10, true}, 0.9}};
    const MatchCounts c = match_at_threshold(preds, ne, 0.5);
    REQUIRE(c.tp == 0);
    REQUIRE(c.fp == 0);
    REQUIRE(c.ignored == 1);
  }
  SECTION("miss counts as fp") {
    const std::vector<Prediction> preds{{{100, 100, 10, 10, true}, 0.9}};
    const MatchCounts c = match_at_threshold(preds, gts, 0.5);
    REQUIRE(c.tp == 0);
    REQUIRE(c.fp == 1);
  }
  SECTION("threshold filter is strict") {
    const std::vector<Prediction> preds{{{1, 1, 10, 10, true}, 0.5}};
    const MatchCounts c = match_at_threshold(preds, gts, 0.5);
    REQUIRE(c.tp == 0);
    REQUIRE(c.fp == 0);
  }
}

TEST_CASE("higher confidence claims the ground truth first") {
  const std::vector<BoundingBox> gts{{0, 0, 10, 10, true}};
  const std::vector<Prediction> preds{{{0, 0, 10, 10, true}, 0.3},
                                      {{4, 0, 10, 10, true}, 0.9}};
  // the 0.9 prediction overlaps at dice 2*60/200 = 0.6 and claims the box;
  // the exact-overlap 0.3 prediction is then a duplicate
  const MatchCounts c = match_at_threshold(preds, gts, 0.0);
  REQUIRE(c.tp == 1);
  REQUIRE(c.ignored == 1);
}

TEST_CASE("froc starts at the infinity sentinel and uses inclusive thresholds") {
  const std::vector<std::vector<Prediction>> preds{
      {{{0, 0, 10, 10, true}, 0.9}, {{100, 100, 10, 10, true}, 0.4}}};
  const std::vector<std::vector<BoundingBox>> gts{{{1, 1, 10, 10, true}}};
  const FrocCurve c = froc(preds, gts, 1);
  REQUIRE(c.points.size() == 3);  // inf, 0.9, 0.4
  REQUIRE(std::isinf(c.points[0].threshold));
  REQUIRE(c.points[0].fp_per_image == 0.0);
  REQUIRE(c.points[0].tpr == 0.0);
  REQUIRE(c.points[1].threshold == 0.9);
  REQUIRE(c.points[1].tpr == 1.0);
  REQUIRE(c.points[1].fp_per_image == 0.0);
  REQUIRE(c.points[2].threshold == 0.4);
  REQUIRE(c.points[2].tpr == 1.0);
  REQUIRE(c.points[2].fp_per_image == 1.0);
}

TEST_CASE("froc throws when no evaluable ground truth exists") {
  const std::vector<std::vector<Prediction>> preds{{}};
  const std::vector<std::vector<BoundingBox>> gts{{{0, 0, 5, 5, false}}};
  REQUIRE_THROWS_AS(froc(preds, gts, 1), MetricUndefinedError);
}

TEST_CASE("froc matches the brute-force oracle on random instances") {
  Rng rng(20240815);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_images = static_cast<int>(rng.uniform_int(1, 4));
    std::vector<std::vector<Prediction>> preds(n_images);
    std::vector<std::vector<BoundingBox>> gts(n_images);
    long n_eval = 0;
    for (int i = 0; i < n_images; ++i) {
      const int ng = static_cast<int>(rng.uniform_int(0, 3));
      for (int g = 0; g < ng; ++g) {
        BoundingBox b;
        b.x = static_cast<int>(rng.uniform_int(0, 40));
        b.y = static_cast<int>(rng.uniform_int(0, 40));
        b.w = static_cast<int>(rng.uniform_int(4, 16));
        b.h = static_cast<int>(rng.uniform_int(4, 16));
        b.evaluable = rng.uniform() < 0.8;
        if (b.evaluable) ++n_eval;
        gts[i].push_back(b);
      }
      const int np = static_cast<int>(rng.uniform_int(0, 5));
      for (int p = 0; p < np; ++p) {
        Prediction pr;
        pr.box.x = static_cast<int>(rng.uniform_int(0, 40));
        pr.box.y = static_cast<int>(rng.uniform_int(0, 40));
        pr.box.w = static_cast<int>(rng.uniform_int(4, 16));
        pr.box.h = static_cast<int>(rng.uniform_int(4, 16));
        // quantized confidences force ties
        pr.confidence = rng.uniform_int(1, 5) / 5.0;
        preds[i].push_back(pr);
      }
    }
    if (n_eval == 0) {
      REQUIRE_THROWS_AS(froc(preds, gts, n_images), MetricUndefinedError);
      continue;
    }

    const FrocCurve curve = froc(preds, gts, n_images);

    std::set<double, std::greater<double>> thresholds;
    for (const auto& ps : preds)
      for (const auto& p : ps) thresholds.insert(p.confidence);
    REQUIRE(curve.points.size() == thresholds.size() + 1);

    std::size_t idx = 1;
    for (double t : thresholds) {
      long tp = 0, fp = 0;
      for (int i = 0; i < n_images; ++i) {
        const OracleCounts c = oracle_match(preds[i], gts[i], t);
        tp += c.tp;
        fp += c.fp;
      }
      REQUIRE(curve.points[idx].threshold == t);
      REQUIRE(curve.points[idx].fp_per_image ==
              Catch::Approx(static_cast<double>(fp) / n_images));
      REQUIRE(curve.points[idx].tpr == Catch::Approx(static_cast<double>(tp) / n_eval));
      ++idx;
    }
  }
}

TEST_CASE("fauc worked example") {
  const FrocCurve c = curve_of({{std::numeric_limits<double>::infinity(), 0.0, 0.0},
                                {0.8, 0.5, 0.4},
                                {0.2, 1.0, 0.8}});
  REQUIRE(fauc(c) == Catch::Approx(0.4));
}

TEST_CASE("fauc extends flat when the curve ends before fp = 1") {
  const FrocCurve c = curve_of({{std::numeric_limits<double>::infinity(), 0.0, 0.0},
                                {0.9, 0.5, 1.0}});
  // linear to (0.5, 1), flat afterwards: 0.25 + 0.5 = 0.75
  REQUIRE(fauc(c) == Catch::Approx(0.75));
}

TEST_CASE("fauc of a perfect detector is 1") {
  const FrocCurve c = curve_of({{std::numeric_limits<double>::infinity(), 0.0, 0.0},
                                {0.9, 0.0, 1.0}});
  REQUIRE(fauc(c) == Catch::Approx(1.0));
}

TEST_CASE("cpm averages the seven operating points") {
  const FrocCurve c = curve_of({{std::numeric_limits<double>::infinity(), 0.0, 0.0},
                                {0.5, 8.0, 1.0}});
  // tpr rises linearly from (0,0) to (8,1): mean of f/8 over the 7 points
  const double expect =
      (0.125 + 0.25 + 0.5 + 1.0 + 2.0 + 4.0 + 8.0) / 8.0 / 7.0;
  REQUIRE(cpm(c) == Catch::Approx(expect));
}

TEST_CASE("tpr_at_fpi worked example") {
  const FrocCurve c = curve_of({{std::numeric_limits<double>::infinity(), 0.0, 0.0},
                                {0.7, 0.4, 0.4}});
  REQUIRE(tpr_at_fpi(c, 0.2) == Catch::Approx(0.2));
  REQUIRE(tpr_at_fpi(c) == Catch::Approx(0.2));
  REQUIRE(tpr_at_fpi(c, 2.0) == Catch::Approx(0.4));
  REQUIRE_THROWS_AS(tpr_at_fpi(c, -0.1), ParameterError);
}

TEST_CASE("interpolation keeps the best tpr at duplicate abscissae") {
  const FrocCurve c = curve_of({{std::numeric_limits<double>::infinity(), 0.0, 0.0},
                                {0.9, 0.0, 0.6},
                                {0.5, 1.0, 0.8}});
  REQUIRE(tpr_at_fpi(c, 0.0) == Catch::Approx(0.6));
  REQUIRE(tpr_at_fpi(c, 0.5) == Catch::Approx(0.7));
}

TEST_CASE("metric exports produce well-formed files") {
  const FrocCurve c = curve_of({{std::numeric_limits<double>::infinity(), 0.0, 0.0},
                                {0.9, 0.5, 0.5},
                                {0.1, 1.5, 1.0}});
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string csv = (tmp / "goldisim_froc.csv").string();
  const std::string json = (tmp / "goldisim_metrics.json").string();
  const std::string svg = (tmp / "goldisim_froc.svg").string();
  write_froc_csv(c, csv);
  write_metrics_json(c, json);
  write_froc_svg(c, svg);
  {
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "threshold,fp_per_image,tpr");
  }
  {
    std::ifstream in(json);
    nlohmann::json j;
    in >> j;
    REQUIRE(j["fauc"].get<double>() == Catch::Approx(fauc(c)));
    REQUIRE(j["n_images"].get<long>() == 1);
  }
  {
    std::ifstream in(svg);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(all.find("<svg") != std::string::npos);
    REQUIRE(all.find("polyline") != std::string::npos);
  }
  std::remove(csv.c_str());
  std::remove(json.c_str());
  std::remove(svg.c_str());
}
