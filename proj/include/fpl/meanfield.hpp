#pragma once

// Particle approximation of the mean-field density of priors.
//
// The density is carried by the velocity field u(x, t) = BRbar(t) - mu * x,
// where BRbar is the density-weighted mean best response. The field is affine
// in x, so with BRbar frozen over a step each particle can be moved along its
// exact characteristic. The second-order correction (diffusion with matrix
// h * D(x)) is realized as an Euler-Maruyama step of the equivalent SDE.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fpl/abm.hpp"
#include "fpl/error.hpp"
#include "fpl/game.hpp"
#include "fpl/initial.hpp"
#include "fpl/observables.hpp"
#include "fpl/rng.hpp"

namespace fpl {

inline constexpr double kPsdTolerance = 1e-10;
inline constexpr std::size_t kExactDiameterLimit = 2000;

/// Weighted particle cloud. Positions are flat, particle k occupying
/// [k*n, (k+1)*n).
class Ensemble {
 public:
  Ensemble(std::size_t actions, std::vector<double> positions, std::vector<double> weights, double time = 0.0)
      : n_(actions), positions_(std::move(positions)), weights_(std::move(weights)), time_(time) {
    if (n_ < 2) throw InvalidArgument("ensemble needs at least 2 coordinates");
    if (positions_.size() % n_ != 0 || positions_.size() / n_ != weights_.size()) {
      throw InvalidArgument("ensemble positions and weights disagree in size");
    }
    if (weights_.empty()) throw InvalidArgument("ensemble needs at least one particle");
    double total = 0.0;
    for (double w : weights_) {
      if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("particle weights must be positive");
      total += w;
    }
    // naive summation drifts by about one ulp per term
    const double tol = kSimplexTolerance + static_cast<double>(weights_.size()) * std::numeric_limits<double>::epsilon();
    if (std::abs(total - 1.0) > tol) throw InvalidArgument("particle weights must sum to 1");
    for (double v : positions_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("particles must lie in the closed positive orthant");
    }
  }

  static Ensemble equal_weight(std::size_t actions, std::vector<double> positions, double time = 0.0) {
    const std::size_t m = actions == 0 ? 0 : positions.size() / actions;
    if (m == 0) throw InvalidArgument("ensemble needs at least one particle");
    return Ensemble(actions, std::move(positions), std::vector<double>(m, 1.0 / static_cast<double>(m)), time);
  }

  std::size_t size() const { return weights_.size(); }
  std::size_t actions() const { return n_; }
  double time() const { return time_; }
  void set_time(double t) { time_ = t; }

  std::span<const double> position(std::size_t k) const { return {positions_.data() + k * n_, n_}; }
  std::span<double> position(std::size_t k) { return {positions_.data() + k * n_, n_}; }
  const std::vector<double>& positions() const { return positions_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Coordinates reset to 0 by the orthant clip in sde_step, cumulative.
  std::uint64_t clip_events() const { return clip_events_; }
  void add_clip_events(std::uint64_t k) { clip_events_ += k; }

  double total_weight() const {
    double s = 0.0;
    for (double w : weights_) s += w;
    return s;
  }

  bool operator==(const Ensemble&) const = default;

 private:
  std::size_t n_;
  std::vector<double> positions_;
  std::vector<double> weights_;
  double time_;
  std::uint64_t clip_events_ = 0;
};

/// Population mean best response; a point of the simplex.
class MeanBR {
 public:
  explicit MeanBR(std::vector<double> v) : v_(std::move(v)) {
    if (v_.size() < 2) throw InvalidArgument("mean best response needs at least 2 components");
    double sum = 0.0, norm2 = 0.0;
    for (double c : v_) {
      if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidArgument("mean best response components must be nonnegative");
      sum += c;
      norm2 += c * c;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) throw InvalidArgument("mean best response must sum to 1");
    if (std::sqrt(norm2) < 1.0 / static_cast<double>(v_.size()) - kSimplexTolerance) {
      throw NumericalError("mean best response norm below 1/n");
    }
  }
  MeanBR(std::initializer_list<double> v) : MeanBR(std::vector<double>(v)) {}

  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t i) const { return v_[i]; }
  const std::vector<double>& values() const { return v_; }

 private:
  std::vector<double> v_;
};

struct DiffusionMatrix {
  Eigen::MatrixXd d;

  double asymmetry() const { return (d - d.transpose()).cwiseAbs().maxCoeff(); }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(d, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
  }
  bool is_psd() const { return asymmetry() <= kPsdTolerance && min_eigenvalue() >= -kPsdTolerance; }
};

enum class InitMode { Random, Lattice };

/// M equal-weight particles. Random mode samples i.i.d. from `sampler`.
/// Lattice mode places a cell-centered grid of M^(1/n) nodes per axis on a
/// uniform box (M must be a perfect n-th power); a Lattice sampler is always
/// placed on its own grid and must have exactly M nodes.
inline Ensemble init_ensemble(const InitialDistribution& sampler, std::size_t particles, std::uint64_t seed,
                              InitMode mode = InitMode::Random) {
  validate(sampler);
  if (particles < 1) throw InvalidArgument("ensemble needs at least one particle");
  const std::size_t n = dimension(sampler);
  if (const auto* lat = std::get_if<Lattice>(&sampler)) {
    if (lattice_size(*lat) != particles) throw InvalidArgument("lattice node count must equal the particle count");
    return Ensemble::equal_weight(n, lattice_points(*lat));
  }
  if (mode == InitMode::Lattice) {
    const auto* box = std::get_if<UniformBox>(&sampler);
    if (box == nullptr) throw InvalidArgument("lattice mode needs a uniform box sampler");
    const auto side = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(particles), 1.0 / n)));
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= side;
    if (total != particles) throw InvalidArgument("lattice mode needs a particle count that is a perfect n-th power");
    return Ensemble::equal_weight(n, lattice_points(Lattice{box->lo, box->hi, std::vector<std::size_t>(n, side)}));
  }
  std::vector<double> pos(particles * n);
  Rng rng(sub_seed(seed, "init"));
  for (std::size_t k = 0; k < particles; ++k) sample_into(sampler, rng, std::span<double>(pos.data() + k * n, n));
  return Ensemble::equal_weight(n, std::move(pos));
}

/// Weighted average of best-response vertices, summed in particle order.
inline MeanBR mean_br(const Ensemble& ens, const Game& game, TieRule tie = {}) {
  if (game.actions() != ens.actions()) throw InvalidArgument("game and ensemble disagree on the action count");
  std::vector<double> acc(ens.actions(), 0.0);
  for (std::size_t k = 0; k < ens.size(); ++k) {
    accumulate_best_response(game, ens.position(k), tie, ens.weights()[k], acc);
  }
  // normalize by the accumulated mass so rounding in the sums cancels
  double total = 0.0;
  for (double a : acc) total += a;
  for (double& a : acc) a /= total;
  return MeanBR(std::move(acc));
}

/// Moves every particle along the exact characteristic of u = br - mu*x
/// over dt. The flow multiplies densities by exp(n*mu*dt); equal weights
/// already account for it, so weights are untouched.
inline void transport_step(Ensemble& ens, const MeanBR& br, double mu, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(mu >= 0.0)) throw InvalidArgument("memory rate mu must be nonnegative");
  if (br.size() != ens.actions()) throw InvalidArgument("mean best response dimension mismatch");
  const std::size_t n = ens.actions();
  if (mu == 0.0) {
    for (std::size_t k = 0; k < ens.size(); ++k) {
      auto x = ens.position(k);
      for (std::size_t i = 0; i < n; ++i) x[i] += br[i] * dt;
    }
  } else {
    const double decay = std::exp(-mu * dt);
    const double gain = -std::expm1(-mu * dt) / mu;
    for (std::size_t k = 0; k < ens.size(); ++k) {
      auto x = ens.position(k);
      for (std::size_t i = 0; i < n; ++i) x[i] = decay * x[i] + gain * br[i];
    }
  }
  ens.set_time(ens.time() + dt);
}

/// D = sum_i br_i (mu*x - e_i)(mu*x - e_i)^T.
inline DiffusionMatrix diffusion_matrix(std::span<const double> x, const MeanBR& br, double mu) {
  const auto n = static_cast<Eigen::Index>(x.size());
  if (br.size() != x.size()) throw InvalidArgument("mean best response dimension mismatch");
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) v(j) = mu * x[static_cast<std::size_t>(j)];
    v(i) -= 1.0;
    d.noalias() += br[static_cast<std::size_t>(i)] * (v * v.transpose());
  }
  // vectorized accumulation can leave ulp-level asymmetry
  Eigen::MatrixXd sym = 0.5 * (d + d.transpose());
  return {std::move(sym)};
}

/// Key and step counter of the per-particle diffusion noise. Particle k at
/// step s draws counter_normal(key, s, k, component), independent of how
/// particles are scheduled.
struct DiffusionNoise {
  std::uint64_t key = 0;
  std::uint64_t step = 0;

  static DiffusionNoise from_seed(std::uint64_t seed) { return {sub_seed(seed, "diffusion"), 0}; }
};

namespace detail {

// Symmetric PSD square root with negative eigenvalues clipped to zero.
// Throws if the matrix is not PSD within tolerance.
template <class Matrix>
Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver;
  if constexpr (Matrix::RowsAtCompileTime == 2) {
    solver.computeDirect(m);
  } else {
    solver.compute(m);
  }
  const auto& evals = solver.eigenvalues();
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (evals.minCoeff() < -kPsdTolerance * scale) throw NumericalError("diffusion matrix is not positive semidefinite");
  const auto roots = evals.cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

}  // namespace detail

/// Euler-Maruyama step of dx = (br - mu*x) dt + B dW with B B^T = 2h D(x),
/// followed by clipping to the nonnegative orthant. With h = 0 this is the
/// forward-Euler transport step.
inline void sde_step(Ensemble& ens, const MeanBR& br, double mu, double h, double dt, DiffusionNoise& noise) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(h >= 0.0)) throw InvalidArgument("learning increment h must be nonnegative");
  if (br.size() != ens.actions()) throw InvalidArgument("mean best response dimension mismatch");
  const std::size_t n = ens.actions();
  const double sqrt_dt = std::sqrt(dt);
  std::uint64_t clipped = 0;
  Eigen::VectorXd xi(static_cast<Eigen::Index>(n)), kick(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < ens.size(); ++k) {
    auto x = ens.position(k);
    kick.setZero();
    if (h > 0.0) {
      for (std::size_t c = 0; c < n; ++c) xi(static_cast<Eigen::Index>(c)) = counter_normal(noise.key, noise.step, k, c);
      const DiffusionMatrix dm = diffusion_matrix(x, br, mu);
      if (n == 2) {
        const Eigen::Matrix2d b = detail::psd_sqrt<Eigen::Matrix2d>(2.0 * h * dm.d);
        kick = b * xi;
      } else {
        const Eigen::MatrixXd b = detail::psd_sqrt<Eigen::MatrixXd>(2.0 * h * dm.d);
        kick = b * xi;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += (br[i] - mu * x[i]) * dt;
      if (h > 0.0) x[i] += kick(static_cast<Eigen::Index>(i)) * sqrt_dt;
      if (x[i] < 0.0) {
        x[i] = 0.0;
        ++clipped;
      }
    }
  }
  ens.add_clip_events(clipped);
  ++noise.step;
  ens.set_time(ens.time() + dt);
}

struct SupportMetrics {
  std::vector<double> bbox_lo, bbox_hi;
  double diameter = 0.0;
  std::string diameter_method;  // "exact-pairwise", "convex-hull" or "subsample"
  std::vector<double> mean;
  std::vector<double> lambda;
};

namespace detail {

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double max_pairwise(const std::vector<std::span<const double>>& pts) {
  double best = 0.0;
  for (std::size_t a = 0; a < pts.size(); ++a) {
    for (std::size_t b = a + 1; b < pts.size(); ++b) best = std::max(best, distance(pts[a], pts[b]));
  }
  return best;
}

// Andrew's monotone chain; returns hull vertices of 2-D points.
inline std::vector<std::span<const double>> convex_hull_2d(std::vector<std::span<const double>> pts) {
  std::sort(pts.begin(), pts.end(), [](auto a, auto b) { return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]); });
  auto cross = [](auto o, auto a, auto b) { return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]); };
  std::vector<std::span<const double>> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 1 ? k - 1 : k);
  return hull;
}

}  // namespace detail

/// Bounding box, diameter, weighted mean position and weighted mean belief.
///
/// The diameter is exact: all pairs up to 2000 particles, the convex hull
/// above that in 2-D. For n > 2 and more than 2000 particles it is the exact
/// diameter of a deterministic subsample (every k-th particle plus the
/// per-coordinate extremes), a lower bound on the true value.
inline SupportMetrics support_metrics(const Ensemble& ens) {
  const std::size_t n = ens.actions();
  const std::size_t m = ens.size();
  SupportMetrics out;
  out.bbox_lo.assign(n, std::numeric_limits<double>::infinity());
  out.bbox_hi.assign(n, -std::numeric_limits<double>::infinity());
  out.mean.assign(n, 0.0);
  out.lambda.assign(n, 0.0);
  std::vector<std::size_t> arg_lo(n, 0), arg_hi(n, 0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto x = ens.position(k);
    const double w = ens.weights()[k];
    double sum = 0.0;
    for (double v : x) sum += v;
    if (!(sum > 0.0)) throw InvalidArgument("particle with zero prior sum");
    for (std::size_t i = 0; i < n; ++i) {
      if (x[i] < out.bbox_lo[i]) out.bbox_lo[i] = x[i], arg_lo[i] = k;
      if (x[i] > out.bbox_hi[i]) out.bbox_hi[i] = x[i], arg_hi[i] = k;
      out.mean[i] += w * x[i];
      out.lambda[i] += w * (x[i] / sum);
    }
  }
  std::vector<std::span<const double>> pts;
  if (m <= kExactDiameterLimit) {
    for (std::size_t k = 0; k < m; ++k) pts.push_back(ens.position(k));
    out.diameter = detail::max_pairwise(pts);
    out.diameter_method = "exact-pairwise";
  } else if (n == 2) {
    for (std::size_t k = 0; k < m; ++k) pts.push_back(ens.position(k));
    out.diameter = detail::max_pairwise(detail::convex_hull_2d(std::move(pts)));
    out.diameter_method = "convex-hull";
  } else {
    const std::size_t stride = (m + kExactDiameterLimit - 1) / kExactDiameterLimit;
    for (std::size_t k = 0; k < m; k += stride) pts.push_back(ens.position(k));
    for (std::size_t i = 0; i < n; ++i) {
      pts.push_back(ens.position(arg_lo[i]));
      pts.push_back(ens.position(arg_hi[i]));
    }
    out.diameter = detail::max_pairwise(pts);
    out.diameter_method = "subsample";
  }
  return out;
}

/// Observable record of an ensemble given its current mean best response.
inline ObservableRecord observe(const Ensemble& ens, const MeanBR& br) {
  const std::size_t n = ens.actions();
  ObservableRecord rec;
  rec.t = ens.time();
  rec.lambda.assign(n, 0.0);
  rec.mean_prior.assign(n, 0.0);
  rec.bbox_lo.assign(n, std::numeric_limits<double>::infinity());
  rec.bbox_hi.assign(n, -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < ens.size(); ++k) {
    const auto x = ens.position(k);
    const double w = ens.weights()[k];
    double sum = 0.0;
    for (double v : x) sum += v;
    for (std::size_t i = 0; i < n; ++i) {
      rec.lambda[i] += w * (x[i] / sum);
      rec.mean_prior[i] += w * x[i];
      rec.bbox_lo[i] = std::min(rec.bbox_lo[i], x[i]);
      rec.bbox_hi[i] = std::max(rec.bbox_hi[i], x[i]);
    }
  }
  rec.mean_br = br.values();
  return rec;
}

struct MeanFieldOptions {
  double mu = 0.0;
  double h = 0.0;  // diffusion strength; only read when diffusion is on
  double dt = 1e-3;
  double horizon_t = 1.0;
  double sample_every = 0.1;
  bool diffusion = false;
  TieRule tie{};
  std::uint64_t noise_seed = 0;
};

/// Explicit coupling: BRbar is evaluated from the current positions, then
/// held fixed over one transport (or SDE) step. Records observables at the
/// first step at or after each multiple of sample_every and at the end.
inline ObservableSeries run_meanfield(Ensemble& ens, const Game& game, const MeanFieldOptions& opt) {
  if (!(opt.dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(opt.horizon_t > 0.0)) throw InvalidArgument("horizon must be positive");
  if (!(opt.sample_every > 0.0)) throw InvalidArgument("sample interval must be positive");
  if (opt.diffusion && !(opt.h > 0.0)) throw InvalidArgument("diffusion needs a positive learning increment h");
  const auto steps = static_cast<std::uint64_t>(std::llround(opt.horizon_t / opt.dt));
  const double t0 = ens.time();
  DiffusionNoise noise = DiffusionNoise::from_seed(opt.noise_seed);

  ObservableSeries series;
  series.n = ens.actions();
  std::uint64_t k = 0, next = 0;
  for (std::uint64_t s = 0;; ++s) {
    ens.set_time(t0 + static_cast<double>(s) * opt.dt);
    const MeanBR br = mean_br(ens, game, opt.tie);
    if (s == next || s == steps) {
      if (series.size() == 0 || series.back().t < ens.time()) series.push(observe(ens, br));
      while (next <= s) next = detail::first_step_at_or_after(static_cast<double>(++k) * opt.sample_every / opt.dt);
    }
    if (s == steps) break;
    if (opt.diffusion) {
      sde_step(ens, br, opt.mu, opt.h, opt.dt, noise);
    } else {
      transport_step(ens, br, opt.mu, opt.dt);
    }
  }
  return series;
}

}  // namespace fpl
