#pragma once

// Reduced deterministic models of fictitious-play learning:
//   - the translating box (uniform density on a square carried at velocity
//     BRbar, valid for mu = 0),
//   - best response dynamics for the mean belief,
//   - the mean-belief equation evaluated on a particle ensemble,
//   - the linear ODE for BRbar in 2x2 games driven by the overlap length l(t),
// plus the fixed-step integrators they share.

#include <cmath>
#include <cstdint>
#include <functional>
#include <algorithm>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fpl/error.hpp"
#include "fpl/game.hpp"
#include "fpl/meanfield.hpp"
#include "fpl/observables.hpp"

namespace fpl {

/// Axis-aligned cube [center - side/2, center + side/2]^n.
struct Box {
  std::vector<double> center;
  double side = 1.0;

  double lo(std::size_t i) const { return center[i] - 0.5 * side; }
  double hi(std::size_t i) const { return center[i] + 0.5 * side; }
};

enum class OdeMethod { Euler, RK4 };

inline const char* to_string(OdeMethod m) { return m == OdeMethod::Euler ? "euler" : "rk4"; }

struct OdeSolution {
  std::vector<double> times;
  std::vector<std::vector<double>> states;
  OdeMethod method = OdeMethod::Euler;
  double dt = 0.0;

  std::size_t dimension() const { return states.empty() ? 0 : states.front().size(); }
};

using VectorField = std::function<std::vector<double>(double, const std::vector<double>&)>;

/// Fixed-step integration over llround(horizon_t / dt) steps; times are t0 + k*dt.
inline OdeSolution integrate_generic(const VectorField& rhs, std::vector<double> y0, double dt, double horizon_t,
                                     OdeMethod method = OdeMethod::Euler, double t0 = 0.0) {
  if (!(dt > 0.0)) throw InvalidArgument("time step must be positive");
  if (!(horizon_t >= 0.0)) throw InvalidArgument("horizon must be nonnegative");
  const auto steps = static_cast<std::uint64_t>(std::llround(horizon_t / dt));
  const std::size_t n = y0.size();
  OdeSolution sol;
  sol.method = method;
  sol.dt = dt;
  sol.times.reserve(steps + 1);
  sol.states.reserve(steps + 1);
  sol.times.push_back(t0);
  sol.states.push_back(y0);

  std::vector<double> y = std::move(y0), tmp(n);
  auto axpy = [&](const std::vector<double>& base, double a, const std::vector<double>& d) {
    for (std::size_t i = 0; i < n; ++i) tmp[i] = base[i] + a * d[i];
    return tmp;
  };
  for (std::uint64_t k = 0; k < steps; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    if (method == OdeMethod::Euler) {
      const auto f = rhs(t, y);
      for (std::size_t i = 0; i < n; ++i) y[i] += dt * f[i];
    } else {
      const auto k1 = rhs(t, y);
      const auto k2 = rhs(t + 0.5 * dt, axpy(y, 0.5 * dt, k1));
      const auto k3 = rhs(t + 0.5 * dt, axpy(y, 0.5 * dt, k2));
      const auto k4 = rhs(t + dt, axpy(y, dt, k3));
      for (std::size_t i = 0; i < n; ++i) y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    for (double v : y) {
      if (!std::isfinite(v)) {
        throw NumericalError("non-finite state at step " + std::to_string(k + 1) + " (t = " +
                             std::to_string(t + dt) + ")");
      }
    }
    sol.times.push_back(t0 + static_cast<double>(k + 1) * dt);
    sol.states.push_back(y);
  }
  return sol;
}

inline void write_solution_csv(std::ostream& os, const OdeSolution& sol) {
  os << 't';
  for (std::size_t i = 1; i <= sol.dimension(); ++i) os << ",y_" << i;
  os << '\n';
  std::vector<double> row;
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    row.assign(1, sol.times[k]);
    row.insert(row.end(), sol.states[k].begin(), sol.states[k].end());
    write_csv_row(os, row);
  }
}

namespace detail {

struct Point2 {
  double x, y;
};

// Part of a convex polygon where a*x + b*y <= 0 (Sutherland-Hodgman, one edge).
inline std::vector<Point2> clip_half_plane(const std::vector<Point2>& poly, double a, double b) {
  std::vector<Point2> out;
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Point2 p = poly[i], q = poly[(i + 1) % m];
    const double fp = a * p.x + b * p.y, fq = a * q.x + b * q.y;
    if (fp <= 0.0) out.push_back(p);
    if ((fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0)) {
      const double s = fp / (fp - fq);
      out.push_back({p.x + s * (q.x - p.x), p.y + s * (q.y - p.y)});
    }
  }
  return out;
}

inline double polygon_area(const std::vector<Point2>& poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point2 p = poly[i], q = poly[(i + 1) % poly.size()];
    twice += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(twice);
}

inline void check_box_2d(const Box& box) {
  if (box.center.size() != 2) throw InvalidArgument("2x2 box model needs a 2-D box");
  if (!(box.side > 0.0)) throw InvalidArgument("box side must be positive");
  if (box.lo(0) < 0.0 || box.lo(1) < 0.0) throw InvalidArgument("box leaves the positive quadrant");
  if (box.lo(0) <= 0.0 && box.lo(1) <= 0.0) throw InvalidArgument("box touches the origin");
}

}  // namespace detail

/// Exact mean best response of the uniform density on a square, for a 2x2
/// game whose best response switches at the mixed equilibrium p*: action 1
/// is the best response where x1 / (x1 + x2) < p*_1. Area fractions come from
/// clipping the square by the ray through the origin.
inline MeanBR box_mean_br_2x2(const Box& box, const Game& game) {
  detail::check_box_2d(box);
  const double p = mixed_ne_2x2(game)[0];
  const std::vector<detail::Point2> square{
      {box.lo(0), box.lo(1)}, {box.hi(0), box.lo(1)}, {box.hi(0), box.hi(1)}, {box.lo(0), box.hi(1)}};
  // x1 / (x1 + x2) < p  <=>  (1 - p) x1 - p x2 < 0
  const auto part = detail::clip_half_plane(square, 1.0 - p, -p);
  double share = detail::polygon_area(part) / (box.side * box.side);
  share = std::clamp(share, 0.0, 1.0);
  return MeanBR{share, 1.0 - share};
}

/// Center of the translating box under dx_c/dt = box_mean_br_2x2(box(x_c)).
inline OdeSolution integrate_box_center(const Box& box0, const Game& game, double dt, double horizon_t,
                                        OdeMethod method = OdeMethod::Euler) {
  detail::check_box_2d(box0);
  const double side = box0.side;
  const VectorField rhs = [&game, side](double, const std::vector<double>& c) {
    return box_mean_br_2x2(Box{c, side}, game).values();
  };
  return integrate_generic(rhs, box0.center, dt, horizon_t, method);
}

/// Best response dynamics for the mean belief: (BR(lambda) - lambda) / sum_priors.
inline std::vector<double> brd_rhs(std::span<const double> lambda, double sum_priors, const Game& game,
                                   TieRule tie = {}) {
  if (!(sum_priors > 0.0)) throw InvalidArgument("sum of priors must be positive");
  if (lambda.size() != game.actions()) throw InvalidArgument("belief dimension does not match the game");
  // Under the Uniform tie rule a tied set contributes its average vertex.
  std::vector<double> out(lambda.size(), 0.0);
  accumulate_best_response(game, lambda, tie, 1.0, out);
  for (std::size_t i = 0; i < lambda.size(); ++i) out[i] = (out[i] - lambda[i]) / sum_priors;
  return out;
}

inline std::vector<double> brd_rhs(const Belief& lambda, double sum_priors, const Game& game, TieRule tie = {}) {
  return brd_rhs(lambda.values(), sum_priors, game, tie);
}

/// Point-mass model: state (lambda_1..n, S) with S the prior sum, which
/// obeys dS/dt = 1 - mu*S.
inline OdeSolution integrate_brd(const Belief& lambda0, double sum0, double mu, const Game& game, double dt,
                                 double horizon_t, OdeMethod method = OdeMethod::Euler, TieRule tie = {}) {
  const std::size_t n = lambda0.size();
  if (n != game.actions()) throw InvalidArgument("belief dimension does not match the game");
  std::vector<double> y0(lambda0.values().begin(), lambda0.values().end());
  y0.push_back(sum0);
  const VectorField rhs = [&game, n, mu, tie](double, const std::vector<double>& y) {
    auto out = brd_rhs(std::span<const double>(y.data(), n), y[n], game, tie);
    out.push_back(1.0 - mu * y[n]);
    return out;
  };
  return integrate_generic(rhs, std::move(y0), dt, horizon_t, method);
}

/// Ensemble average of (BRbar_i - x_i/|x|_1) / |x|_1.
inline std::vector<double> lambda_rhs_ensemble(const Ensemble& ens, const MeanBR& br) {
  const std::size_t n = ens.actions();
  if (br.size() != n) throw InvalidArgument("mean best response dimension mismatch");
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < ens.size(); ++k) {
    const auto x = ens.position(k);
    double sum = 0.0;
    for (double v : x) sum += v;
    if (!(sum > 0.0)) throw InvalidArgument("particle with zero prior sum");
    const double w = ens.weights()[k];
    for (std::size_t i = 0; i < n; ++i) out[i] += w * (br[i] - x[i] / sum) / sum;
  }
  return out;
}

/// Length of the part of the diagonal x1 = x2 inside a 2-D box.
inline double overlap_length(const Box& box) {
  if (box.center.size() != 2) throw InvalidArgument("overlap length needs a 2-D box");
  const double offset = std::abs(box.center[0] - box.center[1]);
  return offset < box.side ? std::numbers::sqrt2 * (box.side - offset) : 0.0;
}

/// l * [[-1, 1], [1, -1]] * br.
inline std::vector<double> meanbr_ode_rhs_2x2(std::span<const double> br, double l) {
  if (br.size() != 2) throw InvalidArgument("mean best response ODE is defined for 2 actions");
  if (!(l >= 0.0)) throw InvalidArgument("overlap length must be nonnegative");
  return {l * (-br[0] + br[1]), l * (br[0] - br[1])};
}

inline OdeSolution integrate_meanbr_2x2(const MeanBR& br0, const std::function<double(double)>& l_schedule, double dt,
                                        double horizon_t, OdeMethod method = OdeMethod::RK4) {
  if (br0.size() != 2) throw InvalidArgument("mean best response ODE is defined for 2 actions");
  const VectorField rhs = [&l_schedule](double t, const std::vector<double>& y) {
    return meanbr_ode_rhs_2x2(y, l_schedule(t));
  };
  return integrate_generic(rhs, br0.values(), dt, horizon_t, method);
}

}  // namespace fpl
