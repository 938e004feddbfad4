#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "goldisim/compositor.hpp"
#include "goldisim/image.hpp"

using namespace goldisim;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = GOLDISIM_CLI_PATH;

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
#ifdef _WIN32
  return status;
#else
  return WEXITSTATUS(status);
#endif
}

fs::path work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "goldisim_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  json j;
  in >> j;
  return j;
}

std::vector<std::pair<std::string, std::uint64_t>> manifest_checksums(const fs::path& dir) {
  const json m = read_json(dir / "manifest.json");
  std::vector<std::pair<std::string, std::uint64_t>> out;
  for (const auto& f : m.at("files"))
    out.emplace_back(f.at("path").get<std::string>(), f.at("crc32").get<std::uint64_t>());
  return out;
}

}  // namespace

TEST_CASE("phantom generates images and identical reruns") {
  const fs::path a = work_dir() / "phantom_a";
  const fs::path b = work_dir() / "phantom_b";
  REQUIRE(run_cli("phantom --n 3 --size 128 --seed 7 --out " + a.string()) == 0);
  REQUIRE(run_cli("phantom --n 3 --size 128 --seed 7 --out " + b.string()) == 0);
  REQUIRE(fs::exists(a / "normal_00000.pgm"));
  REQUIRE(fs::exists(a / "normal_00002.pgm"));
  const GrayImage img = read_pgm((a / "normal_00000.pgm").string());
  REQUIRE(img.width == 128);
  REQUIRE(img.height == 128);
  REQUIRE(manifest_checksums(a) == manifest_checksums(b));
}

TEST_CASE("simulate writes one annotated abnormal per normal") {
  const fs::path normals = work_dir() / "phantom_a";  // created above
  const fs::path out = work_dir() / "sim_a";
  REQUIRE(run_cli("simulate --normals " + normals.string() + " --out " + out.string() +
                  " --seed 21") == 0);
  const auto records = read_annotations((out / "annotations.jsonl").string());
  REQUIRE(records.size() == 3);
  for (const auto& r : records) {
    REQUIRE(r.boxes.size() == 1);
    REQUIRE(fs::exists(out / r.image));
  }
  const json m = read_json(out / "manifest.json");
  REQUIRE(m.at("command").contains("parameter_ranges"));
}

TEST_CASE("simulate reruns are byte-identical") {
  const fs::path normals = work_dir() / "phantom_a";
  const fs::path out1 = work_dir() / "sim_r1";
  const fs::path out2 = work_dir() / "sim_r2";
  const std::string args = "simulate --normals " + normals.string() + " --seed 33 --out ";
  REQUIRE(run_cli(args + out1.string()) == 0);
  REQUIRE(run_cli(args + out2.string()) == 0);
  REQUIRE(manifest_checksums(out1) == manifest_checksums(out2));
}

TEST_CASE("stronger attenuation produces brighter insertions") {
  const fs::path normals = work_dir() / "phantom_a";
  const fs::path lo = work_dir() / "sim_lo";
  const fs::path hi = work_dir() / "sim_hi";
  const std::string common = "simulate --normals " + normals.string() + " --seed 44 ";
  REQUIRE(run_cli(common + "--set simulator.beta=0.1 --out " + lo.string()) == 0);
  REQUIRE(run_cli(common + "--set simulator.beta=1.0 --out " + hi.string()) == 0);
  for (int i = 0; i < 3; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "abnormal_%05d.pgm", i);
    const GrayImage a = read_pgm((lo / name).string());
    const GrayImage b = read_pgm((hi / name).string());
    REQUIRE(a.width == b.width);
    long sum_lo = 0, sum_hi = 0;
    for (std::size_t k = 0; k < a.pixels.size(); ++k) {
      sum_lo += a.pixels[k];
      sum_hi += b.pixels[k];
      REQUIRE(b.pixels[k] >= a.pixels[k]);
    }
    REQUIRE(sum_hi > sum_lo);
  }
}

TEST_CASE("uniform simulate draws fresh per-image parameters") {
  const fs::path normals = work_dir() / "phantom_a";
  const fs::path out = work_dir() / "sim_udr";
  REQUIRE(run_cli("simulate --uniform --normals " + normals.string() + " --out " +
                  out.string() + " --seed 55") == 0);
  REQUIRE(read_annotations((out / "annotations.jsonl").string()).size() == 3);
}

TEST_CASE("eval with perfect predictions reports fauc 1") {
  const fs::path sim = work_dir() / "sim_a";
  const auto records = read_annotations((sim / "annotations.jsonl").string());
  const fs::path preds_path = work_dir() / "perfect_preds.jsonl";
  {
    std::ofstream out(preds_path);
    for (const auto& r : records) {
      json j;
      j["image"] = r.image;
      j["boxes"] = json::array();
      for (const auto& b : r.boxes)
        j["boxes"].push_back(
            {{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"confidence", 1.0}});
      out << j.dump() << "\n";
    }
  }
  const fs::path out = work_dir() / "eval_perfect";
  REQUIRE(run_cli("eval --predictions " + preds_path.string() + " --images " + sim.string() +
                  " --annotations " + (sim / "annotations.jsonl").string() + " --out " +
                  out.string()) == 0);
  const json metrics = read_json(out / "metrics.json");
  REQUIRE(metrics.at("fauc").get<double>() == Catch::Approx(1.0));
  REQUIRE(metrics.at("cpm").get<double>() == Catch::Approx(1.0));
  REQUIRE(fs::exists(out / "froc.csv"));
  REQUIRE(fs::exists(out / "froc.svg"));
}

TEST_CASE("config files drive the simulator and reject unknown keys") {
  const fs::path normals = work_dir() / "phantom_a";
  const fs::path good_cfg = work_dir() / "good.cfg";
  {
    std::ofstream out(good_cfg);
    out << "# run settings\n";
    out << "[global]\n";
    out << "seed = 77\n";
    out << "[simulator]\n";
    out << "persistence = 0.5\n";
    out << "beta = 0.9\n";
  }
  const fs::path out1 = work_dir() / "sim_cfg";
  REQUIRE(run_cli("simulate --config " + good_cfg.string() + " --normals " + normals.string() +
                  " --out " + out1.string()) == 0);
  const json m = read_json(out1 / "manifest.json");
  REQUIRE(m.at("command").at("phi").at("beta").get<double>() == Catch::Approx(0.9));
  REQUIRE(m.at("command").at("seed").get<std::uint64_t>() == 77);

  const fs::path bad_cfg = work_dir() / "bad.cfg";
  {
    std::ofstream out(bad_cfg);
    out << "[simulator]\n";
    out << "bogus_knob = 3\n";
  }
  REQUIRE(run_cli("simulate --config " + bad_cfg.string() + " --normals " + normals.string() +
                  " --out " + (work_dir() / "never").string()) == 2);
}

TEST_CASE("error taxonomy maps to exit codes") {
  const fs::path normals = work_dir() / "phantom_a";
  // config error from a malformed override
  REQUIRE(run_cli("simulate --set nonsense.key=1 --normals " + normals.string() + " --out " +
                  (work_dir() / "never2").string()) == 2);
  // io error from a missing normals directory
  REQUIRE(run_cli("simulate --normals " + (work_dir() / "missing_dir").string() + " --out " +
                  (work_dir() / "never3").string()) == 3);
  // data error from out-of-range simulator parameters
  REQUIRE(run_cli("simulate --set simulator.beta=2.0 --normals " + normals.string() +
                  " --out " + (work_dir() / "never4").string()) == 4);
  // metric-undefined from an annotation set with no evaluable boxes
  const fs::path sim = work_dir() / "sim_a";
  const fs::path empty_ann = work_dir() / "no_eval.jsonl";
  {
    const auto records = read_annotations((sim / "annotations.jsonl").string());
    std::vector<AnnotationRecord> stripped;
    for (auto r : records) {
      for (auto& b : r.boxes) b.evaluable = false;
      stripped.push_back(r);
    }
    write_annotations(stripped, empty_ann.string());
  }
  const fs::path preds = work_dir() / "perfect_preds.jsonl";
  REQUIRE(run_cli("eval --predictions " + preds.string() + " --images " + sim.string() +
                  " --annotations " + empty_ann.string() + " --out " +
                  (work_dir() / "never5").string()) == 5);
}

TEST_CASE("lesion preview emits a patch image") {
  const fs::path out = work_dir() / "lesion.png";
  REQUIRE(run_cli("lesion-preview --seed 5 --out " + out.string()) == 0);
  const GrayImage img = read_png(out.string());
  REQUIRE(img.width > 0);
  REQUIRE(img.height > 0);
}

TEST_CASE("training and evaluation round-trip through checkpoints") {
  const fs::path sim = work_dir() / "sim_a";
  const fs::path val = work_dir() / "sim_r1";
  const fs::path out = work_dir() / "train_out";
  REQUIRE(run_cli("train --train-images " + sim.string() + " --train-annotations " +
                  (sim / "annotations.jsonl").string() + " --val-images " + val.string() +
                  " --val-annotations " + (val / "annotations.jsonl").string() +
                  " --set optimizer.epochs=2 --seed 11 --out " + out.string()) == 0);
  REQUIRE(fs::exists(out / "checkpoint.json"));
  {
    std::ifstream in(out / "training.csv");
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "epoch,train_loss,val_fauc");
  }
  const fs::path eval_out = work_dir() / "eval_ckpt";
  REQUIRE(run_cli("eval --checkpoint " + (out / "checkpoint.json").string() + " --images " +
                  val.string() + " --annotations " + (val / "annotations.jsonl").string() +
                  " --out " + eval_out.string()) == 0);
  const json metrics = read_json(eval_out / "metrics.json");
  REQUIRE(metrics.at("fauc").get<double>() >= 0.0);
  REQUIRE(metrics.at("fauc").get<double>() <= 1.0);
}

TEST_CASE("run executes a tiny curriculum end to end") {
  const fs::path normals = work_dir() / "phantom_a";
  const fs::path out = work_dir() / "run_gdr";
  const std::string sets =
      " --set curriculum.T=1 --set curriculum.n_init=2 --set curriculum.bo_iter=3"
      " --set curriculum.probe_normals=2 --set curriculum.epochs_per_timestep=1"
      " --set curriculum.lhs_candidates=50";
  REQUIRE(run_cli("run --strategy gdr --normals " + normals.string() + sets + " --seed 13 --out " +
                  out.string()) == 0);
  REQUIRE(fs::exists(out / "trace.csv"));
  REQUIRE(fs::exists(out / "theta_t1.json"));
  std::ifstream in(out / "trace.csv");
  std::string header, row;
  std::getline(in, header);
  REQUIRE(header.rfind("t,phi_persistence", 0) == 0);
  REQUIRE(std::getline(in, row));
  REQUIRE(!row.empty());
}
