#pragma once

// Agent-based fictitious play: N agents, one randomly matched pair per round.
//
// Each round two distinct agents are drawn uniformly, both best-respond to
// their own empirical beliefs, and each then updates her prior counts with
// the pure action the opponent actually played:
//
//   x <- (1 - mu*h) * x + h * e_{opponent action}
//
// Rounds are spaced delta = 2h/N apart in model time: each agent plays 1/h
// times per unit of time on average, and with mu = 0 the population mean of
// the prior sum grows at unit speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fpl/error.hpp"
#include "fpl/game.hpp"
#include "fpl/initial.hpp"
#include "fpl/observables.hpp"
#include "fpl/rng.hpp"

namespace fpl {

struct LearningParams {
  double h = 0.001;  // learning increment
  double mu = 0.0;   // memory rate; mu*h is the per-update decay

  void validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("learning increment h must be positive");
    if (!(mu >= 0.0) || !std::isfinite(mu)) throw InvalidArgument("memory rate mu must be nonnegative");
    if (mu * h > 1.0) throw InvalidArgument("memory factor mu*h must lie in [0, 1]");
  }
  double retention() const { return 1.0 - mu * h; }
};

/// In-place prior update.
inline void update_prior(std::span<double> x, std::size_t opponent_action, const LearningParams& params) {
  const double keep = params.retention();
  for (double& xi : x) xi *= keep;
  x[opponent_action] += params.h;
}

inline std::vector<double> updated_prior(std::span<const double> x, std::size_t opponent_action,
                                         const LearningParams& params) {
  if (opponent_action >= x.size()) throw InvalidArgument("opponent action out of range");
  params.validate();
  std::vector<double> out(x.begin(), x.end());
  update_prior(out, opponent_action, params);
  return out;
}

/// State of the agent-based process. Priors are stored as one flat array,
/// agent k occupying [k*n, (k+1)*n).
class Population {
 public:
  Population(std::size_t actions, std::vector<double> priors, std::uint64_t seed)
      : n_(actions),
        priors_(std::move(priors)),
        pairing_(sub_seed(seed, "pairing")),
        ties_(sub_seed(seed, "ties")) {
    if (n_ < 2) throw InvalidArgument("population needs at least 2 actions");
    if (priors_.size() % n_ != 0) throw InvalidArgument("prior array is not a multiple of the action count");
    if (agents() < 2) throw InvalidArgument("population needs at least 2 agents");
    for (std::size_t k = 0; k < agents(); ++k) {
      double sum = 0.0;
      for (double v : prior(k)) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("priors must be finite and nonnegative");
        sum += v;
      }
      if (!(sum > 0.0)) throw InvalidArgument("every agent needs a positive prior sum");
    }
  }

  std::size_t agents() const { return priors_.size() / n_; }
  std::size_t actions() const { return n_; }
  std::uint64_t play_count() const { return play_count_; }

  std::span<const double> prior(std::size_t k) const { return {priors_.data() + k * n_, n_}; }
  std::span<double> prior(std::size_t k) { return {priors_.data() + k * n_, n_}; }
  const std::vector<double>& flat() const { return priors_; }

  bool operator==(const Population&) const = default;

 private:
  friend void play_round(Population&, const Game&, const LearningParams&, TieRule);

  std::size_t n_;
  std::vector<double> priors_;
  std::uint64_t play_count_ = 0;
  Rng pairing_;
  Rng ties_;
};

inline Population init_population(std::size_t agents, std::size_t actions, const InitialDistribution& sampler,
                                  std::uint64_t seed) {
  validate(sampler);
  if (dimension(sampler) != actions) throw InvalidArgument("initial distribution dimension does not match the game");
  if (agents < 2) throw InvalidArgument("population needs at least 2 agents");
  std::vector<double> priors(agents * actions);
  if (const auto* lat = std::get_if<Lattice>(&sampler)) {
    if (lattice_size(*lat) != agents) throw InvalidArgument("lattice node count must equal the agent count");
    priors = lattice_points(*lat);
  } else {
    Rng rng(sub_seed(seed, "init"));
    for (std::size_t k = 0; k < agents; ++k) {
      sample_into(sampler, rng, std::span<double>(priors.data() + k * actions, actions));
    }
  }
  return Population(actions, std::move(priors), seed);
}

/// One matched play. Both best responses are taken before either update.
inline void play_round(Population& pop, const Game& game, const LearningParams& params, TieRule tie) {
  const std::size_t n_agents = pop.agents();
  if (game.actions() != pop.actions()) throw InvalidArgument("game and population disagree on the action count");
  const std::size_t i = pop.pairing_.below(n_agents);
  std::size_t j = pop.pairing_.below(n_agents - 1);
  if (j >= i) ++j;
  const std::size_t ai = best_response_to_prior(game, pop.prior(i), tie, &pop.ties_);
  const std::size_t aj = best_response_to_prior(game, pop.prior(j), tie, &pop.ties_);
  update_prior(pop.prior(i), aj, params);
  update_prior(pop.prior(j), ai, params);
  ++pop.play_count_;
}

/// Number of rounds that make up model time t (round length 2h/N).
inline std::uint64_t plays_for_time(double t, std::size_t agents, double h) {
  if (!(h > 0.0)) throw InvalidArgument("learning increment h must be positive");
  if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("time must be finite and nonnegative");
  return static_cast<std::uint64_t>(std::llround(t * static_cast<double>(agents) / (2.0 * h)));
}

/// Model time at which round r completes.
inline double time_of_round(std::uint64_t r, std::size_t agents, double h) {
  return static_cast<double>(r) * (2.0 * h) / static_cast<double>(agents);
}

namespace detail {

// Smallest integer step >= x, snapping values within 1e-6 of an integer.
inline std::uint64_t first_step_at_or_after(double x) {
  const double r = std::round(x);
  if (std::abs(x - r) <= 1e-6) return static_cast<std::uint64_t>(r);
  return static_cast<std::uint64_t>(std::ceil(x));
}

}  // namespace detail

/// Population observables at model time t.
inline ObservableRecord observe(const Population& pop, const Game& game, TieRule tie, double t) {
  const std::size_t n = pop.actions();
  const std::size_t m = pop.agents();
  ObservableRecord rec;
  rec.t = t;
  rec.lambda.assign(n, 0.0);
  rec.mean_br.assign(n, 0.0);
  rec.mean_prior.assign(n, 0.0);
  rec.bbox_lo.assign(n, std::numeric_limits<double>::infinity());
  rec.bbox_hi.assign(n, -std::numeric_limits<double>::infinity());
  detail::Scratch p(n);
  for (std::size_t k = 0; k < m; ++k) {
    const auto x = pop.prior(k);
    detail::normalize_into(x, p.data());
    accumulate_best_response(game, x, tie, 1.0, rec.mean_br);
    for (std::size_t i = 0; i < n; ++i) {
      rec.lambda[i] += p.data()[i];
      rec.mean_prior[i] += x[i];
      rec.bbox_lo[i] = std::min(rec.bbox_lo[i], x[i]);
      rec.bbox_hi[i] = std::max(rec.bbox_hi[i], x[i]);
    }
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t i = 0; i < n; ++i) {
    rec.lambda[i] *= inv;
    rec.mean_br[i] *= inv;
    rec.mean_prior[i] *= inv;
  }
  return rec;
}

/// Advances `pop` by plays_for_time(horizon_t) rounds, recording observables
/// at the first round boundary at or after each multiple of sample_every, and
/// at the final round.
inline ObservableSeries run_abm(Population& pop, const Game& game, const LearningParams& params, double horizon_t,
                                double sample_every, TieRule tie = {}) {
  params.validate();
  if (!(horizon_t > 0.0)) throw InvalidArgument("horizon must be positive");
  if (!(sample_every > 0.0)) throw InvalidArgument("sample interval must be positive");
  const std::size_t m = pop.agents();
  const double rounds_per_time = static_cast<double>(m) / (2.0 * params.h);
  const std::uint64_t total = plays_for_time(horizon_t, m, params.h);

  ObservableSeries series;
  series.n = pop.actions();
  std::uint64_t k = 0;
  std::uint64_t next = 0;
  auto record = [&](std::uint64_t r) { series.push(observe(pop, game, tie, time_of_round(r, m, params.h))); };
  for (std::uint64_t r = 0;; ++r) {
    if (r == next) {
      record(r);
      // Several sample times may map to the same round when sample_every < delta.
      while (next <= r) next = detail::first_step_at_or_after(static_cast<double>(++k) * sample_every * rounds_per_time);
    }
    if (r == total) {
      if (series.back().t < time_of_round(r, m, params.h)) record(r);
      break;
    }
    play_round(pop, game, params, tie);
  }
  return series;
}

}  // namespace fpl
