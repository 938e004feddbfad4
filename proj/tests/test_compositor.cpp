#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "goldisim/compositor.hpp"

using namespace goldisim;

namespace {

LesionPatch square_lesion(int side, double value = 1.0) {
  LesionPatch p(side, side);
  for (std::size_t k = 0; k < p.values.size(); ++k) {
    p.values[k] = value;
    p.support[k] = 1;
  }
  return p;
}

}  // namespace

TEST_CASE("decide_location accepts immediately on an all-black image") {
  const GrayImage img(512, 512, 0);
  const LesionPatch lesion = square_lesion(21);
  LocationConfig cfg;
  cfg.seed = 3;
  const LocationResult res = decide_location(img, lesion, cfg);
  REQUIRE(res.evaluations == 1);
  const int M = cfg.effective_margin(512);
  REQUIRE(res.x >= M);
  REQUIRE(res.x <= 512 - M);
  REQUIRE(res.y >= M);
  REQUIRE(res.y <= 512 - M);
}

TEST_CASE("decide_location on all-white terminates in exactly 3301 evaluations") {
  const GrayImage img(1024, 1024, 255);
  const LesionPatch lesion = square_lesion(31);
  LocationConfig cfg;  // threshold 90, max_iteration 20
  cfg.seed = 11;
  const LocationResult res = decide_location(img, lesion, cfg);
  REQUIRE(res.evaluations == (255 - 90) * 20 + 1);
  REQUIRE(res.final_threshold == 255);
}

TEST_CASE("decide_location default margins bound candidates on a 1024 canvas") {
  const GrayImage img(1024, 1024, 0);
  const LesionPatch lesion = square_lesion(21);
  LocationConfig cfg;
  for (std::uint64_t s = 0; s < 50; ++s) {
    cfg.seed = s;
    const LocationResult res = decide_location(img, lesion, cfg);
    REQUIRE(res.x >= 240);
    REQUIRE(res.x <= 784);
    REQUIRE(res.y >= 240);
    REQUIRE(res.y <= 784);
  }
}

TEST_CASE("decide_location rejects oversized lesions") {
  const GrayImage img(256, 256, 0);
  LocationConfig cfg;
  const int M = cfg.effective_margin(256);
  const LesionPatch lesion = square_lesion(2 * M + 5);
  REQUIRE_THROWS_AS(decide_location(img, lesion, cfg), ParameterError);
}

TEST_CASE("insert_lesion implements the scaled interpolation law") {
  GrayImage img(64, 64, 100);
  LesionPatch lesion(1, 1);
  lesion.support[0] = 1;

  SECTION("zero noise is a no-op") {
    lesion.values[0] = 0.0;
    const GrayImage out = insert_lesion(img, lesion, 32, 32, 1.0);
    REQUIRE(out.at(32, 32) == 100);
  }
  SECTION("full noise, beta 1 saturates to 255") {
    lesion.values[0] = 1.0;
    const GrayImage out = insert_lesion(img, lesion, 32, 32, 1.0);
    REQUIRE(out.at(32, 32) == 255);
  }
  SECTION("worked example: 100 * 0.6 + 255 * 0.4 = 162") {
    lesion.values[0] = 0.5;
    const GrayImage out = insert_lesion(img, lesion, 32, 32, 0.8);
    REQUIRE(out.at(32, 32) == 162);
  }
}

TEST_CASE("insertion never darkens, never exceeds 255, monotone in beta") {
  GrayImage img(32, 32);
  Rng rng(4);
  for (auto& px : img.pixels) px = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  LesionPatch lesion(8, 8);
  for (std::size_t k = 0; k < lesion.values.size(); ++k) {
    lesion.values[k] = rng.uniform();
    lesion.support[k] = 1;
  }
  const GrayImage low = insert_lesion(img, lesion, 16, 16, 0.3);
  const GrayImage high = insert_lesion(img, lesion, 16, 16, 0.9);
  for (std::size_t k = 0; k < img.pixels.size(); ++k) {
    REQUIRE(low.pixels[k] >= img.pixels[k]);
    REQUIRE(high.pixels[k] >= low.pixels[k]);
  }
}

TEST_CASE("insert_lesion rejects out-of-bounds placement") {
  const GrayImage img(32, 32, 0);
  const LesionPatch lesion = square_lesion(11);
  REQUIRE_THROWS_AS(insert_lesion(img, lesion, 2, 2, 0.5), ParameterError);
}

TEST_CASE("phantom_normal is deterministic and in range") {
  const GrayImage a = phantom_normal(256, 256, 9);
  const GrayImage b = phantom_normal(256, 256, 9);
  REQUIRE(a == b);
}

TEST_CASE("phantom_normal has enough dark lung area") {
  for (std::uint64_t s : {1ull, 2ull, 3ull}) {
    const GrayImage img = phantom_normal(256, 256, s);
    long dark = 0;
    for (auto px : img.pixels)
      if (px <= 90) ++dark;
    REQUIRE(static_cast<double>(dark) / img.pixels.size() >= 0.10);
  }
}

TEST_CASE("generate_dataset produces one box per lesion and tight ground truth") {
  std::vector<GrayImage> normals;
  for (int i = 0; i < 4; ++i) normals.push_back(phantom_normal(256, 256, 100 + i));
  SimParams phi;
  const AnnotatedDataset ds = generate_dataset(normals, phi, 1, 555);
  REQUIRE(ds.items.size() == 4);
  for (const auto& item : ds.items) {
    REQUIRE(item.boxes.size() == 1);
    const BoundingBox& b = item.boxes[0];
    REQUIRE(b.x >= 0);
    REQUIRE(b.y >= 0);
    REQUIRE(b.x + b.w <= item.image.width);
    REQUIRE(b.y + b.h <= item.image.height);
    REQUIRE(b.evaluable);
  }
}

TEST_CASE("generate_dataset with no normals is empty") {
  const AnnotatedDataset ds = generate_dataset({}, SimParams{}, 1, 1);
  REQUIRE(ds.items.empty());
}

TEST_CASE("generation is order-independent via per-index seeds") {
  std::vector<GrayImage> normals;
  for (int i = 0; i < 3; ++i) normals.push_back(phantom_normal(256, 256, 300 + i));
  SimParams phi;
  const AnnotatedDataset forward = generate_dataset(normals, phi, 1, 777);

  // regenerate each image independently, in reverse order
  DatasetGenOptions opt;
  for (int i = 2; i >= 0; --i) {
    const AnnotatedImage item = synthesize_abnormal(normals[i], phi, opt, mix_seed(777, i));
    REQUIRE(item.image == forward.items[i].image);
    REQUIRE(item.boxes == forward.items[i].boxes);
  }
}

TEST_CASE("annotations JSONL round-trips") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "goldisim_ann_test.jsonl").string();
  std::vector<AnnotationRecord> records;
  records.push_back({"a.pgm", {{3, 4, 10, 12, true}, {50, 60, 7, 7, false}}});
  records.push_back({"b.pgm", {}});
  write_annotations(records, path);
  const auto back = read_annotations(path);
  REQUIRE(back.size() == 2);
  REQUIRE(back[0].image == "a.pgm");
  REQUIRE(back[0].boxes.size() == 2);
  REQUIRE(back[0].boxes[0] == records[0].boxes[0]);
  REQUIRE(back[0].boxes[1].evaluable == false);
  REQUIRE(back[1].boxes.empty());
  std::remove(path.c_str());
}

TEST_CASE("pgm and png round-trip the same image") {
  const GrayImage img = phantom_normal(128, 128, 17);
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string pgm = (tmp / "goldisim_io_test.pgm").string();
  const std::string png = (tmp / "goldisim_io_test.png").string();
  write_pgm(img, pgm);
  write_png(img, png);
  REQUIRE(read_pgm(pgm) == img);
  REQUIRE(read_png(png) == img);
  std::remove(pgm.c_str());
  std::remove(png.c_str());
}
