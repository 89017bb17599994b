#pragma once

// Symmetric n-action games, beliefs over opponent actions and best responses.
//
// Action indices are 0-based throughout the library; the CSV and SVG outputs
// label them 1..n.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpl/error.hpp"
#include "fpl/rng.hpp"

namespace fpl {

inline constexpr double kSimplexTolerance = 1e-12;
inline constexpr double kConcavityThreshold = -1e-10;

/// Symmetric game: payoff(i, j) is the row player's payoff for playing
/// action i against action j.
class Game {
 public:
  explicit Game(Eigen::MatrixXd payoff, std::vector<std::string> labels = {})
      : payoff_(std::move(payoff)), labels_(std::move(labels)) {
    if (payoff_.rows() < 2) throw InvalidArgument("game needs at least 2 actions");
    if (payoff_.rows() != payoff_.cols()) throw InvalidArgument("payoff matrix must be square");
    if (!payoff_.allFinite()) throw InvalidArgument("payoff entries must be finite");
    if (labels_.empty()) {
      for (Eigen::Index i = 0; i < payoff_.rows(); ++i) labels_.push_back("s" + std::to_string(i + 1));
    } else if (static_cast<Eigen::Index>(labels_.size()) != payoff_.rows()) {
      throw InvalidArgument("label count does not match the action count");
    }
  }

  static Game from_rows(const std::vector<std::vector<double>>& rows,
                        std::vector<std::string> labels = {}) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != n) {
        throw InvalidArgument("payoff matrix must be square");
      }
      for (Eigen::Index j = 0; j < n; ++j) a(i, j) = rows[i][j];
    }
    return Game(std::move(a), std::move(labels));
  }

  std::size_t actions() const { return static_cast<std::size_t>(payoff_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return payoff_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Eigen::MatrixXd& payoff() const { return payoff_; }
  const std::vector<std::string>& labels() const { return labels_; }

 private:
  Eigen::MatrixXd payoff_;
  std::vector<std::string> labels_;
};

/// Point of the probability simplex. Construction renormalizes the input.
class Belief {
 public:
  explicit Belief(std::span<const double> weights) : p_(weights.begin(), weights.end()) {
    double sum = 0.0;
    for (double w : p_) {
      if (!std::isfinite(w) || w < 0.0) throw InvalidArgument("belief weights must be finite and nonnegative");
      sum += w;
    }
    if (!(sum > 0.0)) throw InvalidArgument("belief weights must have a positive sum");
    for (double& w : p_) w /= sum;
    double check = 0.0;
    for (double w : p_) check += w;
    if (std::abs(check - 1.0) > kSimplexTolerance) throw NumericalError("belief failed to normalize");
  }
  Belief(std::initializer_list<double> weights)
      : Belief(std::span<const double>(weights.begin(), weights.size())) {}

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }

 private:
  std::vector<double> p_;
};

struct TieRule {
  enum class Kind { LowestIndex, Uniform };
  Kind kind = Kind::LowestIndex;

  static TieRule lowest_index() { return {Kind::LowestIndex}; }
  static TieRule uniform() { return {Kind::Uniform}; }
  bool operator==(const TieRule&) const = default;
};

inline std::vector<double> expected_payoffs(const Game& game, const Belief& p) {
  const std::size_t n = game.actions();
  if (p.size() != n) throw InvalidArgument("belief dimension does not match the game");
  std::vector<double> v(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += game(i, j) * p[j];
    v[i] = s;
  }
  return v;
}

namespace detail {

// Small-dimension scratch buffer; games beyond kInline actions fall back to the heap.
class Scratch {
 public:
  static constexpr std::size_t kInline = 16;
  explicit Scratch(std::size_t n) : n_(n) {
    if (n > kInline) heap_.resize(n);
  }
  double* data() { return n_ > kInline ? heap_.data() : inline_.data(); }

 private:
  std::size_t n_;
  std::array<double, kInline> inline_;
  std::vector<double> heap_;
};

// Payoff vector A·p written into v; returns (max payoff, size of the argmax set).
inline std::pair<double, std::size_t> payoff_scan(const Game& game, const double* p, double* v) {
  const std::size_t n = game.actions();
  double best = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += game(i, j) * p[j];
    if (!std::isfinite(s)) throw NumericalError("non-finite expected payoff");
    v[i] = s;
    if (s > best) best = s;
  }
  std::size_t ties = 0;
  for (std::size_t i = 0; i < n; ++i) ties += (v[i] == best);
  return {best, ties};
}

inline std::size_t best_response_kernel(const Game& game, const double* p, TieRule tie, Rng* rng) {
  Scratch scratch(game.actions());
  double* v = scratch.data();
  const auto [best, ties] = payoff_scan(game, p, v);
  std::size_t pick = 0;
  if (ties > 1 && tie.kind == TieRule::Kind::Uniform) {
    if (rng == nullptr) throw InvalidArgument("uniform tie rule needs a random stream");
    pick = rng->below(ties);
  }
  for (std::size_t i = 0;; ++i) {
    if (v[i] == best) {
      if (pick == 0) return i;
      --pick;
    }
  }
}

// Normalizes a prior exactly the way Belief does (same summation order).
inline void normalize_into(std::span<const double> x, double* p) {
  double sum = 0.0;
  for (double xi : x) sum += xi;
  if (!(sum > 0.0)) throw InvalidArgument("prior vector has a non-positive sum");
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = x[i] / sum;
}

}  // namespace detail

/// Index of a maximizer of expected_payoffs(game, p). The Uniform tie rule
/// draws from `rng` only when the argmax set has more than one element.
inline std::size_t best_response(const Game& game, const Belief& p, TieRule tie = {}, Rng* rng = nullptr) {
  if (p.size() != game.actions()) throw InvalidArgument("belief dimension does not match the game");
  return detail::best_response_kernel(game, p.values().data(), tie, rng);
}

/// Best response of an agent holding the unnormalized prior counts `x`.
/// Bit-identical to best_response(game, Belief(x), ...).
inline std::size_t best_response_to_prior(const Game& game, std::span<const double> x, TieRule tie = {},
                                          Rng* rng = nullptr) {
  if (x.size() != game.actions()) throw InvalidArgument("prior dimension does not match the game");
  detail::Scratch scratch(x.size());
  detail::normalize_into(x, scratch.data());
  return detail::best_response_kernel(game, scratch.data(), tie, rng);
}

inline std::vector<double> best_response_vertex(const Game& game, const Belief& p, TieRule tie = {},
                                                Rng* rng = nullptr) {
  std::vector<double> e(game.actions(), 0.0);
  e[best_response(game, p, tie, rng)] = 1.0;
  return e;
}

/// Adds `weight` times the expected best-response vertex of prior `x` to
/// `out`. Under the Uniform rule a tied set shares the weight evenly, which
/// makes population averages deterministic without consuming randomness.
inline void accumulate_best_response(const Game& game, std::span<const double> x, TieRule tie, double weight,
                                     std::span<double> out) {
  const std::size_t n = game.actions();
  detail::Scratch p(n), v(n);
  detail::normalize_into(x, p.data());
  const auto [best, ties] = detail::payoff_scan(game, p.data(), v.data());
  if (ties == 1 || tie.kind == TieRule::Kind::LowestIndex) {
    for (std::size_t i = 0; i < n; ++i) {
      if (v.data()[i] == best) {
        out[i] += weight;
        return;
      }
    }
  }
  const double share = weight / static_cast<double>(ties);
  for (std::size_t i = 0; i < n; ++i) {
    if (v.data()[i] == best) out[i] += share;
  }
}

/// Interior mixed equilibrium of a symmetric 2x2 game with payoffs
/// (L,L)=a, (R,L)=c, (L,R)=d, (R,R)=b, valid when a < c and b < d.
inline Belief mixed_ne_2x2(const Game& game) {
  if (game.actions() != 2) throw InvalidArgument("mixed_ne_2x2 needs a 2-action game");
  const double a = game(0, 0), d = game(0, 1), c = game(1, 0), b = game(1, 1);
  if (!(a < c)) throw InvalidArgument("mixed_ne_2x2 requires a < c (payoff(0,0) < payoff(1,0))");
  if (!(b < d)) throw InvalidArgument("mixed_ne_2x2 requires b < d (payoff(1,1) < payoff(0,1))");
  const double wl = d - b, wr = c - a;
  return Belief{wl / (wl + wr), wr / (wl + wr)};
}

/// Orthonormal basis (columns) of the tangent space {v : sum(v) = 0}.
inline Eigen::MatrixXd simplex_tangent_basis(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m - 1);
  for (Eigen::Index k = 1; k < m; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k * (k + 1)));
    for (Eigen::Index i = 0; i < k; ++i) q(i, k - 1) = scale;
    q(k, k - 1) = -static_cast<double>(k) * scale;
  }
  return q;
}

/// True iff v·Av < 0 for every nonzero v with zero component sum.
inline bool is_strictly_concave_payoff(const Game& game) {
  const Eigen::MatrixXd& a = game.payoff();
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  const Eigen::MatrixXd q = simplex_tangent_basis(game.actions());
  const Eigen::MatrixXd projected = q.transpose() * sym * q;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(projected, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().maxCoeff() < kConcavityThreshold;
}

}  // namespace fpl
