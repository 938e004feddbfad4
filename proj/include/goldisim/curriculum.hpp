#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "goldisim/bayesopt.hpp"
#include "goldisim/compositor.hpp"
#include "goldisim/detector.hpp"
#include "goldisim/errors.hpp"

namespace goldisim {

enum class Strategy { gdr, udr, bayrn, easy2hard };

struct CurriculumConfig {
  Strategy strategy = Strategy::gdr;
  double target_k = 0.5;                // gdr
  std::vector<double> pacing_schedule;  // easy2hard, length T
  int T = 10;
  int n_init = 5;
  int bo_iter = 35;  // 40 for bayrn
  int probe_normals = 30;
  bool replay_previous = false;
  std::uint64_t seed = 0;

  OptimizerConfig optimizer;  // per-timestep training
  int epochs_per_timestep = 40;
  int epochs_full = 120;  // udr / bayrn single runs
  int lhs_candidates = 1000;
  DatasetGenOptions gen;

  void validate() const {
    if (T < 0) throw ParameterError("T must be >= 0");
    if (n_init < 1 || n_init > bo_iter) throw ParameterError("need 1 <= n_init <= bo_iter");
    if (probe_normals < 1) throw ParameterError("probe_normals must be >= 1");
    if (strategy == Strategy::gdr && (target_k < 0.0 || target_k > 1.0))
      throw ParameterError("target_k must be in [0,1]");
    if (strategy == Strategy::easy2hard) {
      if (static_cast<int>(pacing_schedule.size()) != T)
        throw ParameterError("pacing_schedule length must equal T");
      for (double k : pacing_schedule)
        if (k < 0.0 || k > 1.0) throw ParameterError("pacing values must be in [0,1]");
    }
  }
};

struct TimestepRecord {
  int t = 0;
  SimParams phi;
  double target_k = 0.0;
  double probe_v = 0.0;   // V(theta^{t-1}, S_phi) for the chosen phi
  double distance = 0.0;  // -|probe_v - k|
  double val_v = 0.0;     // V(theta^t, val_set)
  std::vector<double> forgetting;  // vs each previous timestep's data
  bool target_missed = false;      // |probe_v - k| > 0.3
  DetectorParams checkpoint;       // theta^t
};

struct CurriculumTrace {
  std::vector<TimestepRecord> records;
};

struct CurriculumResult {
  DetectorParams final_params;
  CurriculumTrace trace;
};

// Test hook: replaces V(theta^{t-1}, S_phi) during the probe phase.
using ProbeOverride = std::function<double(const SimParams&)>;

namespace detail {

struct ProbeEval {
  SimParams phi;
  std::vector<double> y;  // normalized
  double v = 0.0;
  double distance = 0.0;
};

// One timestep's BO search: n_init LHS seeds, then EI proposals, exactly
// bo_iter probe evaluations total. Probe datasets are regenerated per
// evaluation with seeds derived from (timestep, iteration).
inline std::vector<ProbeEval> bo_search(const CurriculumConfig& config, int timestep, double k,
                                        const std::vector<GrayImage>& probe_pool,
                                        const DetectorParams& theta_prev,
                                        const ProbeOverride& probe_override) {
  const ParamSpace space = ParamSpace::simulator();
  GpState gp;

  auto evaluate = [&](const std::vector<double>& y, int iter) {
    ProbeEval ev;
    ev.y = y;
    ev.phi = vector_to_params(denormalize(space, y));
    if (probe_override) {
      ev.v = probe_override(ev.phi);
    } else {
      const AnnotatedDataset probe_ds = generate_dataset(
          probe_pool, ev.phi, 1,
          mix_seed(config.seed, static_cast<std::uint64_t>(timestep) * 10000 + 100 + iter),
          config.gen);
      ev.v = performance_V(theta_prev, probe_ds);
    }
    ev.distance = -std::abs(ev.v - k);
    gp.add(ev.y, ev.distance);
    return ev;
  };

  std::vector<ProbeEval> evals;
  const auto seeds = latin_hypercube(
      config.n_init, static_cast<int>(space.size()),
      mix_seed(config.seed, static_cast<std::uint64_t>(timestep) * 10000 + 1));
  for (int i = 0; i < config.n_init; ++i) evals.push_back(evaluate(seeds[i], i));
  for (int i = config.n_init; i < config.bo_iter; ++i) {
    const std::vector<double> y = propose_next(
        gp, config.lhs_candidates,
        mix_seed(config.seed, static_cast<std::uint64_t>(timestep) * 10000 + 500 + i));
    evals.push_back(evaluate(y, i));
  }
  return evals;
}

// Core loop shared by GDR and Easy2Hard; they differ only in the per-timestep
// target.
inline CurriculumResult run_goldilocks(const CurriculumConfig& config,
                                       const std::vector<GrayImage>& normals,
                                       const AnnotatedDataset& val_set,
                                       const DetectorParams& detector0,
                                       const std::function<double(int)>& k_at,
                                       const ProbeOverride& probe_override) {
  config.validate();
  if (normals.empty() && config.T > 0)
    throw ParameterError("curriculum: no normal images");

  CurriculumResult result;
  result.final_params = detector0;

  const std::vector<GrayImage> probe_pool(
      normals.begin(),
      normals.begin() + std::min<std::size_t>(normals.size(), config.probe_normals));

  std::vector<AnnotatedDataset> past_datasets;
  std::vector<DetectorParams> past_params;

  for (int t = 1; t <= config.T; ++t) {
    const double k = k_at(t);
    const auto evals =
        bo_search(config, t, k, probe_pool, result.final_params, probe_override);

    std::size_t best = 0;
    for (std::size_t i = 1; i < evals.size(); ++i)
      if (evals[i].distance > evals[best].distance) best = i;
    const detail::ProbeEval& chosen = evals[best];

    AnnotatedDataset train_ds = generate_dataset(
        normals, chosen.phi, 1,
        mix_seed(config.seed, static_cast<std::uint64_t>(t) * 10000 + 777), config.gen);
    past_datasets.push_back(train_ds);
    if (config.replay_previous) {
      for (std::size_t j = 0; j + 1 < past_datasets.size(); ++j)
        train_ds.items.insert(train_ds.items.end(), past_datasets[j].items.begin(),
                              past_datasets[j].items.end());
    }

    OptimizerConfig opt = config.optimizer;
    opt.epochs = config.epochs_per_timestep;
    opt.seed = mix_seed(config.seed, static_cast<std::uint64_t>(t) * 10000 + 888);
    const DetectorParams theta_prev = result.final_params;
    const TrainReport report = train(theta_prev, train_ds, val_set, opt);

    TimestepRecord rec;
    rec.t = t;
    rec.phi = chosen.phi;
    rec.target_k = k;
    rec.probe_v = chosen.v;
    rec.distance = chosen.distance;
    rec.target_missed = std::abs(chosen.v - k) > 0.3;
    rec.checkpoint = report.final_params;
    rec.val_v = performance_V(report.final_params, val_set);
    for (std::size_t j = 0; j + 1 < past_datasets.size(); ++j)
      rec.forgetting.push_back(
          forgetting_score(report.final_params, past_params[j], past_datasets[j]));

    past_params.push_back(report.final_params);
    result.final_params = report.final_params;
    result.trace.records.push_back(std::move(rec));
  }
  return result;
}

}  // namespace detail

inline CurriculumResult run_gdr(const CurriculumConfig& config,
                                const std::vector<GrayImage>& normals,
                                const AnnotatedDataset& val_set,
                                const DetectorParams& detector0,
                                const ProbeOverride& probe_override = nullptr) {
  if (config.strategy != Strategy::gdr) throw ParameterError("run_gdr: strategy must be gdr");
  return detail::run_goldilocks(config, normals, val_set, detector0,
                                [&](int) { return config.target_k; }, probe_override);
}

inline CurriculumResult run_easy2hard(const CurriculumConfig& config,
                                      const std::vector<GrayImage>& normals,
                                      const AnnotatedDataset& val_set,
                                      const DetectorParams& detector0,
                                      const ProbeOverride& probe_override = nullptr) {
  if (config.strategy != Strategy::easy2hard)
    throw ParameterError("run_easy2hard: strategy must be easy2hard");
  config.validate();
  return detail::run_goldilocks(config, normals, val_set, detector0,
                                [&](int t) { return config.pacing_schedule[t - 1]; },
                                probe_override);
}

// Single training run on per-image uniformly randomized parameters.
inline CurriculumResult run_udr(const CurriculumConfig& config,
                                const std::vector<GrayImage>& normals,
                                const AnnotatedDataset& val_set,
                                const DetectorParams& detector0) {
  if (config.strategy != Strategy::udr) throw ParameterError("run_udr: strategy must be udr");
  if (normals.empty()) throw ParameterError("run_udr: no normal images");

  const AnnotatedDataset train_ds =
      generate_dataset_udr(normals, 1, mix_seed(config.seed, 42), config.gen);
  OptimizerConfig opt = config.optimizer;
  opt.epochs = config.epochs_full;
  opt.seed = mix_seed(config.seed, 43);
  const TrainReport report = train(detector0, train_ds, val_set, opt);

  CurriculumResult result;
  result.final_params = report.final_params;
  TimestepRecord rec;
  rec.t = 1;
  rec.checkpoint = report.final_params;
  rec.val_v = performance_V(report.final_params, val_set);
  result.trace.records.push_back(std::move(rec));
  return result;
}

// Bilevel baseline: BO over phi, objective = validation FAUC of a model
// re-initialized from detector0 and trained on S_phi each evaluation.
inline CurriculumResult run_bayrn(const CurriculumConfig& config,
                                  const std::vector<GrayImage>& normals,
                                  const AnnotatedDataset& val_set,
                                  const DetectorParams& detector0,
                                  const std::function<double(const SimParams&)>&
                                      objective_override = nullptr) {
  if (config.strategy != Strategy::bayrn)
    throw ParameterError("run_bayrn: strategy must be bayrn");
  config.validate();
  if (normals.empty()) throw ParameterError("run_bayrn: no normal images");

  const ParamSpace space = ParamSpace::simulator();
  GpState gp;
  double best_obj = -std::numeric_limits<double>::infinity();
  SimParams best_phi;
  DetectorParams best_model = detector0;
  bool have_model = false;

  auto evaluate = [&](const std::vector<double>& y, int iter) {
    const SimParams phi = vector_to_params(denormalize(space, y));
    double obj;
    DetectorParams model = detector0;
    if (objective_override) {
      obj = objective_override(phi);
    } else {
      const AnnotatedDataset ds = generate_dataset(
          normals, phi, 1, mix_seed(config.seed, 20000 + iter), config.gen);
      OptimizerConfig opt = config.optimizer;
      opt.epochs = config.epochs_full;
      opt.seed = mix_seed(config.seed, 30000 + iter);
      model = train(detector0, ds, val_set, opt).final_params;
      obj = performance_V(model, val_set);
    }
    gp.add(y, obj);
    if (obj > best_obj) {
      best_obj = obj;
      best_phi = phi;
      best_model = model;
      have_model = true;
    }
  };

  const auto seeds = latin_hypercube(config.n_init, static_cast<int>(space.size()),
                                     mix_seed(config.seed, 10001));
  for (int i = 0; i < config.n_init; ++i) evaluate(seeds[i], i);
  for (int i = config.n_init; i < config.bo_iter; ++i)
    evaluate(propose_next(gp, config.lhs_candidates, mix_seed(config.seed, 10500 + i)), i);

  CurriculumResult result;
  result.final_params = have_model ? best_model : detector0;
  TimestepRecord rec;
  rec.t = 1;
  rec.phi = best_phi;
  rec.probe_v = best_obj;
  rec.val_v = best_obj;
  rec.checkpoint = result.final_params;
  result.trace.records.push_back(std::move(rec));
  return result;
}

// Best (k, timestep) over a family of traces by FAUC on held-out rare data;
// ties prefer the smaller timestep, then the smaller k.
inline std::pair<double, int> meta_validate(
    const std::vector<std::pair<double, CurriculumTrace>>& traces_per_k,
    const AnnotatedDataset& rare_val_set) {
  if (traces_per_k.empty()) throw ParameterError("meta_validate: no traces");
  double best_score = -1.0;
  double best_k = 0.0;
  int best_t = 0;
  bool found = false;
  for (const auto& [k, trace] : traces_per_k) {
    for (const auto& rec : trace.records) {
      const double score = performance_V(rec.checkpoint, rare_val_set);
      const bool better =
          !found || score > best_score ||
          (score == best_score && (rec.t < best_t || (rec.t == best_t && k < best_k)));
      if (better) {
        best_score = score;
        best_k = k;
        best_t = rec.t;
        found = true;
      }
    }
  }
  if (!found) throw ParameterError("meta_validate: traces contain no checkpoints");
  return {best_k, best_t};
}

// ---- trace export ----

inline void write_trace_csv(const CurriculumTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  std::size_t max_forget = 0;
  for (const auto& r : trace.records) max_forget = std::max(max_forget, r.forgetting.size());
  out << "t,phi_persistence,phi_lacunarity,phi_res,phi_alpha,phi_beta,target_k,probe_V,"
         "distance,val_V,target_missed";
  for (std::size_t j = 1; j <= max_forget; ++j) out << ",forget_" << j;
  out << "\n";
  out.precision(17);
  for (const auto& r : trace.records) {
    out << r.t << "," << r.phi.persistence << "," << r.phi.lacunarity << "," << r.phi.res << ","
        << r.phi.alpha << "," << r.phi.beta << "," << r.target_k << "," << r.probe_v << ","
        << r.distance << "," << r.val_v << "," << (r.target_missed ? 1 : 0);
    for (std::size_t j = 0; j < max_forget; ++j) {
      out << ",";
      if (j < r.forgetting.size()) out << r.forgetting[j];
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace goldisim
