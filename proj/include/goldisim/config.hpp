#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "goldisim/compositor.hpp"
#include "goldisim/curriculum.hpp"
#include "goldisim/detector.hpp"
#include "goldisim/errors.hpp"

namespace goldisim {

// Structured-text run configuration: `[section]` headers and `key = value`
// lines, `#` comments. Unknown keys are rejected; paths resolve relative to
// the config file.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string normals_dir;
  std::string out_dir;

  SimParams phi;
  DatasetGenOptions gen;
  CurriculumConfig curriculum;

  static RunConfig parse_file(const std::string& path);
  void apply_override(const std::string& dotted_key, const std::string& value);
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": " + v);
}

inline std::vector<double> parse_double_list(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

inline void apply_config_key(RunConfig& cfg, const std::string& section, const std::string& key,
                             const std::string& value, const std::filesystem::path& base) {
  auto resolve = [&base](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).lexically_normal().string();
  };
  const std::string full = section.empty() ? key : section + "." + key;
  try {
    if (full == "global.seed" || full == "seed") cfg.seed = std::stoull(value);
    else if (full == "global.normals_dir" || full == "normals_dir")
      cfg.normals_dir = resolve(value);
    else if (full == "global.out_dir" || full == "out_dir") cfg.out_dir = resolve(value);
    else if (full == "simulator.persistence") cfg.phi.persistence = std::stod(value);
    else if (full == "simulator.lacunarity") cfg.phi.lacunarity = std::stod(value);
    else if (full == "simulator.res") cfg.phi.res = std::stoi(value);
    else if (full == "simulator.alpha") cfg.phi.alpha = std::stod(value);
    else if (full == "simulator.beta") cfg.phi.beta = std::stod(value);
    else if (full == "simulator.lesions_per_image")
      cfg.gen.lesions_per_image = std::stoi(value);
    else if (full == "simulator.radius_min") cfg.gen.radius_min = std::stoi(value);
    else if (full == "simulator.radius_max") cfg.gen.radius_max = std::stoi(value);
    else if (full == "simulator.scale_radius_to_canvas")
      cfg.gen.scale_radius_to_canvas = parse_bool(value, full);
    else if (full == "location.margin") cfg.gen.location.margin = std::stoi(value);
    else if (full == "location.initial_whiteness_threshold")
      cfg.gen.location.initial_whiteness_threshold = std::stoi(value);
    else if (full == "location.max_iteration")
      cfg.gen.location.max_iteration = std::stoi(value);
    else if (full == "curriculum.strategy") {
      if (value == "gdr") cfg.curriculum.strategy = Strategy::gdr;
      else if (value == "udr") cfg.curriculum.strategy = Strategy::udr;
      else if (value == "bayrn") cfg.curriculum.strategy = Strategy::bayrn;
      else if (value == "easy2hard") cfg.curriculum.strategy = Strategy::easy2hard;
      else throw ConfigError("unknown strategy: " + value);
    } else if (full == "curriculum.target_k") cfg.curriculum.target_k = std::stod(value);
    else if (full == "curriculum.pacing_schedule")
      cfg.curriculum.pacing_schedule = parse_double_list(value);
    else if (full == "curriculum.T") cfg.curriculum.T = std::stoi(value);
    else if (full == "curriculum.n_init") cfg.curriculum.n_init = std::stoi(value);
    else if (full == "curriculum.bo_iter") cfg.curriculum.bo_iter = std::stoi(value);
    else if (full == "curriculum.probe_normals")
      cfg.curriculum.probe_normals = std::stoi(value);
    else if (full == "curriculum.replay_previous")
      cfg.curriculum.replay_previous = parse_bool(value, full);
    else if (full == "curriculum.epochs_per_timestep")
      cfg.curriculum.epochs_per_timestep = std::stoi(value);
    else if (full == "curriculum.epochs_full") cfg.curriculum.epochs_full = std::stoi(value);
    else if (full == "curriculum.lhs_candidates")
      cfg.curriculum.lhs_candidates = std::stoi(value);
    else if (full == "optimizer.kind") {
      if (value == "sgd") cfg.curriculum.optimizer.kind = OptimizerKind::sgd;
      else if (value == "nvrm_sgd") cfg.curriculum.optimizer.kind = OptimizerKind::nvrm_sgd;
      else if (value == "adam") cfg.curriculum.optimizer.kind = OptimizerKind::adam;
      else throw ConfigError("unknown optimizer kind: " + value);
    } else if (full == "optimizer.learning_rate")
      cfg.curriculum.optimizer.learning_rate = std::stod(value);
    else if (full == "optimizer.batch_size")
      cfg.curriculum.optimizer.batch_size = std::stoi(value);
    else if (full == "optimizer.epochs") cfg.curriculum.optimizer.epochs = std::stoi(value);
    else if (full == "optimizer.variability_scale_b")
      cfg.curriculum.optimizer.variability_scale_b = std::stod(value);
    else
      throw ConfigError("unknown config key: " + full);
  } catch (const std::invalid_argument&) {
    throw ConfigError("invalid value for " + full + ": " + value);
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for " + full + ": " + value);
  }
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    detail::apply_config_key(cfg, section, detail::trim(t.substr(0, eq)),
                             detail::trim(t.substr(eq + 1)), base);
  }
  // the curriculum shares the optimizer's global seed
  cfg.curriculum.seed = cfg.seed;
  cfg.curriculum.optimizer.seed = cfg.seed;
  cfg.curriculum.gen = cfg.gen;
  return cfg;
}

// `--section.key=value` style override, applied after file parsing.
inline void RunConfig::apply_override(const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  const std::string section = dot == std::string::npos ? "" : dotted_key.substr(0, dot);
  const std::string key = dot == std::string::npos ? dotted_key : dotted_key.substr(dot + 1);
  detail::apply_config_key(*this, section, key, value, std::filesystem::current_path());
  curriculum.seed = seed;
  curriculum.optimizer.seed = seed;
  curriculum.gen = gen;
}

}  // namespace goldisim
