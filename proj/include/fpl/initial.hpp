#pragma once

// Initial distributions of prior vectors.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <type_traits>
#include <variant>
#include <vector>

#include "fpl/error.hpp"
#include "fpl/rng.hpp"

namespace fpl {

struct UniformBox {
  std::vector<double> lo, hi;
};

struct PointMass {
  std::vector<double> x;
};

/// Cell-centered grid on [lo, hi] with counts[i] points along axis i.
struct Lattice {
  std::vector<double> lo, hi;
  std::vector<std::size_t> counts;
};

using InitialDistribution = std::variant<UniformBox, PointMass, Lattice>;

namespace detail {

inline void check_box(const std::vector<double>& lo, const std::vector<double>& hi) {
  if (lo.size() < 2 || lo.size() != hi.size()) throw InvalidArgument("box bounds must have equal length >= 2");
  double sum = 0.0;
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i])) throw InvalidArgument("box bounds must be finite");
    if (!(lo[i] < hi[i])) throw InvalidArgument("box requires lo < hi in every coordinate");
    if (lo[i] < 0.0) throw InvalidArgument("box must lie in the nonnegative orthant");
    sum += lo[i];
  }
  if (!(sum > 0.0)) throw InvalidArgument("box support touches the set where the prior sum is zero");
}

}  // namespace detail

inline std::size_t dimension(const InitialDistribution& dist) {
  return std::visit(
      [](const auto& d) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(d)>, PointMass>) {
          return d.x.size();
        } else {
          return d.lo.size();
        }
      },
      dist);
}

inline void validate(const InitialDistribution& dist) {
  if (const auto* box = std::get_if<UniformBox>(&dist)) {
    detail::check_box(box->lo, box->hi);
  } else if (const auto* pm = std::get_if<PointMass>(&dist)) {
    if (pm->x.size() < 2) throw InvalidArgument("point mass needs at least 2 coordinates");
    double sum = 0.0;
    for (double v : pm->x) {
      if (!std::isfinite(v) || v < 0.0) throw InvalidArgument("point mass must lie in the nonnegative orthant");
      sum += v;
    }
    if (!(sum > 0.0)) throw InvalidArgument("point mass sits where the prior sum is zero");
  } else {
    const auto& lat = std::get<Lattice>(dist);
    detail::check_box(lat.lo, lat.hi);
    if (lat.counts.size() != lat.lo.size()) throw InvalidArgument("lattice counts must match the dimension");
    for (std::size_t c : lat.counts) {
      if (c == 0) throw InvalidArgument("lattice counts must be positive");
    }
  }
}

inline std::size_t lattice_size(const Lattice& lat) {
  return std::accumulate(lat.counts.begin(), lat.counts.end(), std::size_t{1}, std::multiplies<>());
}

/// Lattice points in row-major order (last axis fastest), flattened.
inline std::vector<double> lattice_points(const Lattice& lat) {
  const std::size_t n = lat.lo.size();
  const std::size_t total = lattice_size(lat);
  std::vector<double> out(total * n);
  std::vector<std::size_t> idx(n, 0);
  for (std::size_t k = 0; k < total; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      const double step = (lat.hi[i] - lat.lo[i]) / static_cast<double>(lat.counts[i]);
      out[k * n + i] = lat.lo[i] + (static_cast<double>(idx[i]) + 0.5) * step;
    }
    for (std::size_t i = n; i-- > 0;) {
      if (++idx[i] < lat.counts[i]) break;
      idx[i] = 0;
    }
  }
  return out;
}

/// One independent draw written into `out`. Lattices are sampled by picking a
/// node uniformly at random.
inline void sample_into(const InitialDistribution& dist, Rng& rng, std::span<double> out) {
  if (const auto* box = std::get_if<UniformBox>(&dist)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rng.uniform(box->lo[i], box->hi[i]);
  } else if (const auto* pm = std::get_if<PointMass>(&dist)) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = pm->x[i];
  } else {
    const auto& lat = std::get<Lattice>(dist);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double step = (lat.hi[i] - lat.lo[i]) / static_cast<double>(lat.counts[i]);
      out[i] = lat.lo[i] + (static_cast<double>(rng.below(lat.counts[i])) + 0.5) * step;
    }
  }
}

/// Mean of the distribution.
inline std::vector<double> mean_point(const InitialDistribution& dist) {
  if (const auto* pm = std::get_if<PointMass>(&dist)) return pm->x;
  const auto& lo = std::holds_alternative<UniformBox>(dist) ? std::get<UniformBox>(dist).lo : std::get<Lattice>(dist).lo;
  const auto& hi = std::holds_alternative<UniformBox>(dist) ? std::get<UniformBox>(dist).hi : std::get<Lattice>(dist).hi;
  std::vector<double> c(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
  return c;
}

}  // namespace fpl
