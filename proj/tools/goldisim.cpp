// goldisim: synthetic pneumonia-lesion pipeline CLI.
//
// Subcommands: phantom, simulate, train, eval, run, bo-trace, lesion-preview.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <zlib.h>

#include "goldisim/bayesopt.hpp"
#include "goldisim/compositor.hpp"
#include "goldisim/config.hpp"
#include "goldisim/curriculum.hpp"
#include "goldisim/detector.hpp"
#include "goldisim/image.hpp"
#include "goldisim/lesion.hpp"
#include "goldisim/metrics.hpp"
#include "goldisim/noise.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// exit-code map: 2 config, 3 I/O, 4 data-shape, 5 metric-undefined, 6 numerical
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitData = 4;
constexpr int kExitMetric = 5;
constexpr int kExitNumerical = 6;

std::string zero_pad(int n, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, n);
  return buf;
}

std::uint32_t file_crc32(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw goldisim::IoError("cannot open for checksum: " + path);
  std::uint32_t crc = static_cast<std::uint32_t>(crc32(0L, Z_NULL, 0));
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    crc = static_cast<std::uint32_t>(
        crc32(crc, reinterpret_cast<const Bytef*>(buf), static_cast<uInt>(in.gcount())));
  return crc;
}

void write_manifest(const fs::path& out_dir, const json& command_info,
                    const std::vector<std::string>& files) {
  json manifest;
  manifest["command"] = command_info;
  manifest["files"] = json::array();
  for (const auto& f : files) {
    manifest["files"].push_back(
        {{"path", f}, {"crc32", file_crc32((out_dir / f).string())}});
  }
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw goldisim::IoError("cannot write manifest in " + out_dir.string());
  out << manifest.dump(2) << "\n";
}

std::vector<goldisim::GrayImage> load_normals(const std::string& dir) {
  if (!fs::is_directory(dir)) throw goldisim::IoError("not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".png") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw goldisim::ParameterError("no .pgm/.png images in " + dir);
  std::vector<goldisim::GrayImage> images;
  images.reserve(paths.size());
  for (const auto& p : paths)
    images.push_back(fs::path(p).extension() == ".png" ? goldisim::read_png(p)
                                                       : goldisim::read_pgm(p));
  return images;
}

struct LabeledSet {
  goldisim::AnnotatedDataset dataset;
};

LabeledSet load_labeled(const std::string& images_dir, const std::string& annotations,
                        std::uint64_t seed) {
  LabeledSet set;
  set.dataset.seed = seed;
  for (const auto& rec : goldisim::read_annotations(annotations)) {
    goldisim::AnnotatedImage item;
    const fs::path img = fs::path(images_dir) / rec.image;
    item.image = img.extension() == ".png" ? goldisim::read_png(img.string())
                                           : goldisim::read_pgm(img.string());
    item.boxes = rec.boxes;
    set.dataset.items.push_back(std::move(item));
  }
  if (set.dataset.items.empty())
    throw goldisim::ParameterError("empty dataset: " + annotations);
  return set;
}

json phi_json(const goldisim::SimParams& p) {
  return {{"persistence", p.persistence}, {"lacunarity", p.lacunarity}, {"res", p.res},
          {"alpha", p.alpha},            {"beta", p.beta}};
}

int cmd_phantom(int n, int size, std::uint64_t seed, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> files;
  for (int i = 0; i < n; ++i) {
    const std::string name = "normal_" + zero_pad(i, 5) + ".pgm";
    goldisim::write_pgm(goldisim::phantom_normal(size, size, goldisim::mix_seed(seed, i)),
                        (fs::path(out_dir) / name).string());
    files.push_back(name);
  }
  write_manifest(out_dir,
                 {{"name", "phantom"}, {"n", n}, {"size", size}, {"seed", seed}}, files);
  std::cout << "wrote " << n << " phantoms to " << out_dir << "\n";
  return 0;
}

int cmd_simulate(const goldisim::RunConfig& cfg, bool uniform, const std::string& normals_dir,
                 const std::string& out_dir) {
  const auto normals = load_normals(normals_dir);
  fs::create_directories(out_dir);

  goldisim::AnnotatedDataset ds;
  if (uniform) {
    ds = goldisim::generate_dataset_udr(normals, cfg.gen.lesions_per_image, cfg.seed, cfg.gen);
  } else {
    cfg.phi.validate();
    ds = goldisim::generate_dataset(normals, cfg.phi, cfg.gen.lesions_per_image, cfg.seed,
                                    cfg.gen);
  }

  std::vector<std::string> files;
  std::vector<goldisim::AnnotationRecord> records;
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const std::string name = "abnormal_" + zero_pad(static_cast<int>(i), 5) + ".pgm";
    goldisim::write_pgm(ds.items[i].image, (fs::path(out_dir) / name).string());
    files.push_back(name);
    records.push_back({name, ds.items[i].boxes});
  }
  goldisim::write_annotations(records, (fs::path(out_dir) / "annotations.jsonl").string());
  files.push_back("annotations.jsonl");

  json info{{"name", "simulate"}, {"seed", cfg.seed}, {"uniform", uniform},
            {"lesions_per_image", cfg.gen.lesions_per_image},
            {"parameter_ranges",
             {{"persistence", {0.2, 1.0}}, {"lacunarity", {2.0, 4.0}}, {"res", {2, 5}},
              {"alpha", {0.2, 0.8}}, {"beta", {0.1, 1.0}}}}};
  if (!uniform) info["phi"] = phi_json(cfg.phi);
  write_manifest(out_dir, info, files);
  std::cout << "wrote " << ds.items.size() << " abnormal images to " << out_dir << "\n";
  return 0;
}

int cmd_train(const goldisim::RunConfig& cfg, const std::string& train_images,
              const std::string& train_ann, const std::string& val_images,
              const std::string& val_ann, const std::string& out_dir) {
  const LabeledSet train_set = load_labeled(train_images, train_ann, cfg.seed);
  const LabeledSet val_set = load_labeled(val_images, val_ann, goldisim::mix_seed(cfg.seed, 1));

  goldisim::OptimizerConfig opt = cfg.curriculum.optimizer;
  opt.seed = cfg.seed;
  const goldisim::TrainReport report =
      goldisim::train(goldisim::DetectorParams{}, train_set.dataset, val_set.dataset, opt);

  fs::create_directories(out_dir);
  goldisim::write_checkpoint(report.final_params,
                             (fs::path(out_dir) / "checkpoint.json").string());
  goldisim::write_training_log(report, (fs::path(out_dir) / "training.csv").string());
  write_manifest(out_dir,
                 {{"name", "train"}, {"seed", cfg.seed},
                  {"selected_epoch", report.selected_epoch}},
                 {"checkpoint.json", "training.csv"});
  std::cout << "trained; best epoch " << report.selected_epoch << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& predictions,
             const std::string& images_dir, const std::string& annotations,
             const std::string& out_dir, std::uint64_t seed) {
  const LabeledSet set = load_labeled(images_dir, annotations, seed);
  std::vector<std::vector<goldisim::Prediction>> preds(set.dataset.items.size());
  std::vector<std::vector<goldisim::BoundingBox>> gts(set.dataset.items.size());
  for (std::size_t i = 0; i < set.dataset.items.size(); ++i) gts[i] = set.dataset.items[i].boxes;

  if (!predictions.empty()) {
    // JSONL: {"image": idx-or-name, "boxes": [{x,y,w,h,confidence}]}
    std::ifstream in(predictions);
    if (!in) throw goldisim::IoError("cannot open predictions: " + predictions);
    std::string line;
    std::size_t idx = 0;
    while (std::getline(in, line) && idx < preds.size()) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      for (const auto& jb : j.at("boxes")) {
        goldisim::Prediction p;
        p.box = {jb.at("x").get<int>(), jb.at("y").get<int>(), jb.at("w").get<int>(),
                 jb.at("h").get<int>(), true};
        p.confidence = jb.at("confidence").get<double>();
        preds[idx].push_back(p);
      }
      ++idx;
    }
  } else {
    const goldisim::DetectorParams params = goldisim::read_checkpoint(checkpoint);
    goldisim::parallel_for(set.dataset.items.size(), [&](std::size_t i) {
      preds[i] = goldisim::detect(params, set.dataset.items[i].image);
    });
  }

  const goldisim::FrocCurve curve =
      goldisim::froc(preds, gts, static_cast<long>(set.dataset.items.size()));
  fs::create_directories(out_dir);
  goldisim::write_froc_csv(curve, (fs::path(out_dir) / "froc.csv").string());
  goldisim::write_metrics_json(curve, (fs::path(out_dir) / "metrics.json").string());
  goldisim::write_froc_svg(curve, (fs::path(out_dir) / "froc.svg").string());
  write_manifest(out_dir, {{"name", "eval"}, {"fauc", goldisim::fauc(curve)}},
                 {"froc.csv", "metrics.json", "froc.svg"});
  std::cout << "fauc=" << goldisim::fauc(curve) << " cpm=" << goldisim::cpm(curve) << "\n";
  return 0;
}

int cmd_run(const goldisim::RunConfig& cfg, const std::string& normals_dir,
            const std::string& val_images, const std::string& val_ann,
            const std::string& out_dir) {
  const auto normals = load_normals(normals_dir);
  goldisim::AnnotatedDataset val_set;
  if (!val_ann.empty()) {
    val_set = load_labeled(val_images, val_ann, goldisim::mix_seed(cfg.seed, 9)).dataset;
  } else {
    // hold out a slice of the normals to synthesize a validation set
    const std::size_t n_val = std::max<std::size_t>(1, normals.size() / 5);
    const std::vector<goldisim::GrayImage> val_normals(normals.end() - n_val, normals.end());
    val_set = goldisim::generate_dataset(val_normals, cfg.phi, 1,
                                         goldisim::mix_seed(cfg.seed, 9), cfg.gen);
  }

  goldisim::CurriculumConfig cc = cfg.curriculum;
  cc.gen = cfg.gen;
  cc.seed = cfg.seed;
  const goldisim::DetectorParams detector0;

  goldisim::CurriculumResult result;
  switch (cc.strategy) {
    case goldisim::Strategy::gdr: result = goldisim::run_gdr(cc, normals, val_set, detector0); break;
    case goldisim::Strategy::udr: result = goldisim::run_udr(cc, normals, val_set, detector0); break;
    case goldisim::Strategy::bayrn:
      result = goldisim::run_bayrn(cc, normals, val_set, detector0);
      break;
    case goldisim::Strategy::easy2hard:
      result = goldisim::run_easy2hard(cc, normals, val_set, detector0);
      break;
  }

  fs::create_directories(out_dir);
  std::vector<std::string> files;
  goldisim::write_trace_csv(result.trace, (fs::path(out_dir) / "trace.csv").string());
  files.push_back("trace.csv");
  for (const auto& rec : result.trace.records) {
    const std::string name = "theta_t" + std::to_string(rec.t) + ".json";
    goldisim::write_checkpoint(rec.checkpoint, (fs::path(out_dir) / name).string());
    files.push_back(name);
  }
  json info{{"name", "run"},
            {"seed", cfg.seed},
            {"strategy", static_cast<int>(cc.strategy)},
            {"T", cc.T},
            {"n_init", cc.n_init},
            {"bo_iter", cc.bo_iter},
            {"probe_normals", cc.probe_normals},
            {"target_k", cc.target_k}};
  write_manifest(out_dir, info, files);
  std::cout << "run complete; " << result.trace.records.size() << " timesteps\n";
  return 0;
}

int cmd_bo_trace(const goldisim::RunConfig& cfg, const std::string& normals_dir,
                 const std::string& checkpoint, const std::string& out_dir) {
  const auto normals = load_normals(normals_dir);
  const goldisim::DetectorParams params =
      checkpoint.empty() ? goldisim::DetectorParams{} : goldisim::read_checkpoint(checkpoint);

  const goldisim::ParamSpace space = goldisim::ParamSpace::simulator();
  goldisim::GpState gp;
  std::vector<goldisim::BoTraceRow> rows;
  const std::vector<goldisim::GrayImage> probe_pool(
      normals.begin(),
      normals.begin() + std::min<std::size_t>(normals.size(), cfg.curriculum.probe_normals));

  auto evaluate = [&](const std::vector<double>& y, int iter) {
    const goldisim::SimParams phi = goldisim::vector_to_params(goldisim::denormalize(space, y));
    const goldisim::AnnotatedDataset ds = goldisim::generate_dataset(
        probe_pool, phi, 1, goldisim::mix_seed(cfg.seed, 100 + iter), cfg.gen);
    const double v = goldisim::performance_V(params, ds);
    const double d = -std::abs(v - cfg.curriculum.target_k);
    gp.add(y, d);
    rows.push_back({iter, phi, d});
  };

  const auto seeds = goldisim::latin_hypercube(
      cfg.curriculum.n_init, static_cast<int>(space.size()), goldisim::mix_seed(cfg.seed, 1));
  for (int i = 0; i < cfg.curriculum.n_init; ++i) evaluate(seeds[i], i);
  for (int i = cfg.curriculum.n_init; i < cfg.curriculum.bo_iter; ++i)
    evaluate(goldisim::propose_next(gp, cfg.curriculum.lhs_candidates,
                                    goldisim::mix_seed(cfg.seed, 500 + i)),
             i);

  fs::create_directories(out_dir);
  goldisim::write_bo_trace_csv(rows, (fs::path(out_dir) / "bo_trace.csv").string());
  write_manifest(out_dir, {{"name", "bo-trace"}, {"seed", cfg.seed}}, {"bo_trace.csv"});
  std::cout << "wrote " << rows.size() << " BO iterations\n";
  return 0;
}

int cmd_lesion_preview(const goldisim::RunConfig& cfg, std::uint64_t seed,
                       const std::string& out_path) {
  cfg.phi.validate();
  goldisim::LesionParams lp;
  lp.radius_min = cfg.gen.radius_min;
  lp.radius_max = cfg.gen.radius_max;
  lp.smoothness_alpha = cfg.phi.alpha;
  lp.noise.persistence = cfg.phi.persistence;
  lp.noise.lacunarity = cfg.phi.lacunarity;
  lp.noise.res = cfg.phi.res;
  lp.noise.octaves = 5;
  const goldisim::LesionPatch patch = goldisim::make_lesion(lp, seed);

  goldisim::GrayImage img(patch.width, patch.height);
  for (int y = 0; y < patch.height; ++y)
    for (int x = 0; x < patch.width; ++x)
      img.at(x, y) =
          static_cast<std::uint8_t>(std::lround(255.0 * patch.value(x, y)));
  if (fs::path(out_path).extension() == ".png") goldisim::write_png(img, out_path);
  else goldisim::write_pgm(img, out_path);
  std::cout << "wrote lesion patch " << patch.width << "x" << patch.height << " to "
            << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"goldisim: pseudo-lesion simulator, detection metrics, and "
               "curriculum domain randomization"};
  app.require_subcommand(1);

  std::string config_path, normals_dir, out_dir, checkpoint, predictions;
  std::string train_images, train_ann, val_images, val_ann, strategy_name, out_file;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int n = 10, size = 256;
  bool uniform = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (key = value sections)");
    sub->add_option("--set", overrides, "override config keys, --set section.key=value");
    sub->add_option("--seed", seed, "global seed (overrides config)");
  };

  auto* phantom = app.add_subcommand("phantom", "generate phantom normal images");
  phantom->add_option("--n", n, "number of images")->required();
  phantom->add_option("--size", size, "canvas side in pixels");
  phantom->add_option("--out", out_dir, "output directory")->required();
  phantom->add_option("--seed", seed, "generation seed");

  auto* simulate = app.add_subcommand("simulate", "insert pseudo lesions into normals");
  add_common(simulate);
  simulate->add_option("--normals", normals_dir, "directory of normal images")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();
  simulate->add_flag("--uniform", uniform, "draw per-image uniform simulator parameters");

  auto* train_cmd = app.add_subcommand("train", "train the toy detector");
  add_common(train_cmd);
  train_cmd->add_option("--train-images", train_images)->required();
  train_cmd->add_option("--train-annotations", train_ann)->required();
  train_cmd->add_option("--val-images", val_images)->required();
  train_cmd->add_option("--val-annotations", val_ann)->required();
  train_cmd->add_option("--out", out_dir)->required();

  auto* eval_cmd = app.add_subcommand("eval", "FROC/FAUC/CPM evaluation");
  eval_cmd->add_option("--checkpoint", checkpoint, "detector checkpoint JSON");
  eval_cmd->add_option("--predictions", predictions, "precomputed predictions JSONL");
  eval_cmd->add_option("--images", val_images)->required();
  eval_cmd->add_option("--annotations", val_ann)->required();
  eval_cmd->add_option("--out", out_dir)->required();
  eval_cmd->add_option("--seed", seed);

  auto* run_cmd = app.add_subcommand("run", "run a domain-randomization strategy");
  add_common(run_cmd);
  run_cmd->add_option("--strategy", strategy_name, "gdr|udr|bayrn|easy2hard");
  run_cmd->add_option("--normals", normals_dir)->required();
  run_cmd->add_option("--val-images", val_images);
  run_cmd->add_option("--val-annotations", val_ann);
  run_cmd->add_option("--out", out_dir)->required();

  auto* bo_cmd = app.add_subcommand("bo-trace", "standalone BO trace over simulator params");
  add_common(bo_cmd);
  bo_cmd->add_option("--normals", normals_dir)->required();
  bo_cmd->add_option("--checkpoint", checkpoint);
  bo_cmd->add_option("--out", out_dir)->required();

  auto* preview = app.add_subcommand("lesion-preview", "emit a single lesion patch");
  add_common(preview);
  preview->add_option("--out", out_file, "output image (.pgm or .png)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    goldisim::RunConfig cfg;
    if (!config_path.empty()) cfg = goldisim::RunConfig::parse_file(config_path);
    for (const auto& ov : overrides) {
      const auto eq = ov.find('=');
      if (eq == std::string::npos)
        throw goldisim::ConfigError("override must be section.key=value: " + ov);
      cfg.apply_override(ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (seed != 0 || config_path.empty()) {
      cfg.seed = seed;
      cfg.curriculum.seed = seed;
      cfg.curriculum.optimizer.seed = seed;
    }

    if (phantom->parsed()) return cmd_phantom(n, size, seed, out_dir);
    if (simulate->parsed()) return cmd_simulate(cfg, uniform, normals_dir, out_dir);
    if (train_cmd->parsed())
      return cmd_train(cfg, train_images, train_ann, val_images, val_ann, out_dir);
    if (eval_cmd->parsed())
      return cmd_eval(checkpoint, predictions, val_images, val_ann, out_dir, cfg.seed);
    if (run_cmd->parsed()) {
      if (!strategy_name.empty()) cfg.apply_override("curriculum.strategy", strategy_name);
      return cmd_run(cfg, normals_dir, val_images, val_ann, out_dir);
    }
    if (bo_cmd->parsed()) return cmd_bo_trace(cfg, normals_dir, checkpoint, out_dir);
    if (preview->parsed()) return cmd_lesion_preview(cfg, cfg.seed, out_file);
  } catch (const goldisim::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return kExitConfig;
  } catch (const goldisim::IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return kExitIo;
  } catch (const goldisim::ParameterError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return kExitData;
  } catch (const goldisim::MetricUndefinedError& e) {
    std::cerr << "error: metric-undefined: " << e.what() << "\n";
    return kExitMetric;
  } catch (const goldisim::NumericalError& e) {
    std::cerr << "error: numerical: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
