#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "goldisim/compositor.hpp"
#include "goldisim/errors.hpp"
#include "goldisim/rng.hpp"

namespace goldisim {

struct ParamDim {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool discrete = false;
};

// The optimization domain; defaults to the 5 simulator dimensions.
struct ParamSpace {
  std::vector<ParamDim> dims;

  static ParamSpace simulator() {
    ParamSpace s;
    s.dims = {{"persistence", 0.2, 1.0, false},
              {"lacunarity", 2.0, 4.0, false},
              {"res", 2.0, 5.0, true},
              {"alpha", 0.2, 0.8, false},
              {"beta", 0.1, 1.0, false}};
    return s;
  }

  std::size_t size() const { return dims.size(); }
};

inline std::vector<double> normalize(const ParamSpace& space, const std::vector<double>& phi) {
  if (phi.size() != space.size()) throw ParameterError("normalize: dimension mismatch");
  std::vector<double> y(phi.size());
  for (std::size_t j = 0; j < phi.size(); ++j) {
    const auto& d = space.dims[j];
    if (phi[j] < d.lower || phi[j] > d.upper)
      throw ParameterError("normalize: " + d.name + " out of range");
    y[j] = (phi[j] - d.lower) / (d.upper - d.lower);
  }
  return y;
}

// Continuous dims: x = l + (u-l)y. Discrete dims: x = floor(l + (u-l+1)y),
// clamped to u at y = 1.
inline std::vector<double> denormalize(const ParamSpace& space, const std::vector<double>& y) {
  if (y.size() != space.size()) throw ParameterError("denormalize: dimension mismatch");
  std::vector<double> x(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) {
    const auto& d = space.dims[j];
    if (d.discrete) {
      const double v = std::floor(d.lower + (d.upper - d.lower + 1.0) * y[j]);
      x[j] = std::clamp(v, d.lower, d.upper);
    } else {
      x[j] = d.lower + (d.upper - d.lower) * y[j];
    }
  }
  return x;
}

inline std::vector<double> params_to_vector(const SimParams& p) {
  return {p.persistence, p.lacunarity, static_cast<double>(p.res), p.alpha, p.beta};
}

inline SimParams vector_to_params(const std::vector<double>& v) {
  if (v.size() != 5) throw ParameterError("vector_to_params: expected 5 dims");
  SimParams p;
  p.persistence = v[0];
  p.lacunarity = v[1];
  p.res = static_cast<int>(std::lround(v[2]));
  p.alpha = v[3];
  p.beta = v[4];
  return p;
}

// exp(-(gamma/2) * sum_j (a_j - b_j)^2)
inline double se_kernel(const std::vector<double>& a, const std::vector<double>& b,
                        double gamma) {
  if (a.size() != b.size()) throw ParameterError("se_kernel: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return std::exp(-0.5 * gamma * s);
}

struct Observation {
  std::vector<double> y;  // normalized point in [0,1]^d
  double objective = 0.0;
};

struct GpState {
  std::vector<Observation> observations;
  double gamma = 0.25;
  double noise_jitter = 1e-6;

  void add(std::vector<double> y, double objective) {
    for (double v : y)
      if (v < 0.0 || v > 1.0) throw ParameterError("GpState: point outside [0,1]^d");
    if (!std::isfinite(objective)) throw ParameterError("GpState: non-finite objective");
    observations.push_back({std::move(y), objective});
  }

  double best_objective() const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& o : observations) best = std::max(best, o.objective);
    return best;
  }
};

struct Posterior {
  double mean = 0.0;
  double variance = 0.0;
};

namespace detail {

// Cholesky factorization of a symmetric positive-definite matrix (row-major).
inline std::vector<double> cholesky(std::vector<double> a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (s <= 0.0) throw NumericalError("kernel matrix not positive definite");
        a[i * n + j] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
    for (std::size_t j = i + 1; j < n; ++j) a[i * n + j] = 0.0;
  }
  return a;
}

inline std::vector<double> cholesky_solve(const std::vector<double>& chol, std::size_t n,
                                          std::vector<double> b) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= chol[i * n + k] * b[k];
    b[i] = s / chol[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= chol[k * n + ii] * b[k];
    b[ii] = s / chol[ii * n + ii];
  }
  return b;
}

}  // namespace detail

// Zero-mean GP conditioned on mean-centered objectives; the empirical mean
// is added back to the posterior mean. Factorizes once so repeated queries
// (EI over a candidate set) cost two triangular solves each.
class GpSolver {
 public:
  explicit GpSolver(const GpState& state)
      : points_(), gamma_(state.gamma), n_(state.observations.size()) {
    if (n_ == 0) throw ParameterError("gp_posterior: need at least one observation");
    points_.reserve(n_);
    for (const auto& o : state.observations) points_.push_back(o.y);

    obs_mean_ = 0.0;
    for (const auto& o : state.observations) obs_mean_ += o.objective;
    obs_mean_ /= static_cast<double>(n_);

    std::vector<double> K(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        K[i * n_ + j] = se_kernel(points_[i], points_[j], gamma_) +
                        (i == j ? state.noise_jitter : 0.0);
    chol_ = detail::cholesky(std::move(K), n_);

    std::vector<double> centered(n_);
    for (std::size_t i = 0; i < n_; ++i) centered[i] = state.observations[i].objective - obs_mean_;
    alpha_ = detail::cholesky_solve(chol_, n_, std::move(centered));

    best_ = state.best_objective();
  }

  Posterior posterior(const std::vector<double>& query) const {
    std::vector<double> k_star(n_);
    for (std::size_t i = 0; i < n_; ++i) k_star[i] = se_kernel(points_[i], query, gamma_);
    Posterior post;
    post.mean = obs_mean_ + std::inner_product(k_star.begin(), k_star.end(), alpha_.begin(), 0.0);
    const std::vector<double> v = detail::cholesky_solve(chol_, n_, k_star);
    const double quad = std::inner_product(k_star.begin(), k_star.end(), v.begin(), 0.0);
    post.variance = std::max(0.0, 1.0 - quad);
    return post;
  }

  double best_objective() const { return best_; }

 private:
  std::vector<std::vector<double>> points_;
  std::vector<double> chol_, alpha_;
  double gamma_, obs_mean_ = 0.0, best_ = 0.0;
  std::size_t n_;
};

inline Posterior gp_posterior(const GpState& state, const std::vector<double>& query) {
  return GpSolver(state).posterior(query);
}

namespace detail {

inline double std_normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / 2.5066282746310005024;
}

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730950488); }

}  // namespace detail

// EI for maximization against the incumbent best observation; 0 under a
// deterministic posterior.
inline double expected_improvement(const GpSolver& solver, const std::vector<double>& query) {
  const Posterior post = solver.posterior(query);
  const double sigma = std::sqrt(post.variance);
  if (sigma <= 0.0) return 0.0;
  const double z = (post.mean - solver.best_objective()) / sigma;
  return sigma * (z * detail::std_normal_cdf(z) + detail::std_normal_pdf(z));
}

inline double expected_improvement(const GpState& state, const std::vector<double>& query) {
  return expected_improvement(GpSolver(state), query);
}

// One sample per stratum [i/n,(i+1)/n) in every dimension, independent
// per-dimension permutations, uniform jitter inside each stratum.
inline std::vector<std::vector<double>> latin_hypercube(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ParameterError("latin_hypercube: n, d must be >= 1");
  Rng rng(seed);
  std::vector<std::vector<double>> points(n, std::vector<double>(d));
  std::vector<int> perm(n);
  for (int j = 0; j < d; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    for (int i = 0; i < n; ++i)
      points[i][j] = (perm[i] + rng.uniform()) / n;
  }
  return points;
}

// EI argmax over an LHS candidate set; first-index tie-break.
inline std::vector<double> propose_next(const GpState& state, int n_candidates,
                                        std::uint64_t seed) {
  if (state.observations.empty()) throw ParameterError("propose_next: need observations");
  const int d = static_cast<int>(state.observations.front().y.size());
  const auto candidates = latin_hypercube(n_candidates, d, seed);
  const GpSolver solver(state);
  std::size_t best = 0;
  double best_ei = -1.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double ei = expected_improvement(solver, candidates[i]);
    if (ei > best_ei) {
      best_ei = ei;
      best = i;
    }
  }
  return candidates[best];
}

inline std::vector<double> propose_next(const GpState& state, std::uint64_t seed) {
  return propose_next(state, 1000, seed);
}

// BO trace row: the denormalized simulator point plus its objective.
struct BoTraceRow {
  int iter = 0;
  SimParams phi;
  double objective = 0.0;
};

inline void write_bo_trace_csv(const std::vector<BoTraceRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for write: " + path);
  out << "iter,phi_persistence,phi_lacunarity,phi_res,phi_alpha,phi_beta,objective\n";
  out.precision(17);
  for (const auto& r : rows)
    out << r.iter << "," << r.phi.persistence << "," << r.phi.lacunarity << "," << r.phi.res
        << "," << r.phi.alpha << "," << r.phi.beta << "," << r.objective << "\n";
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace goldisim
