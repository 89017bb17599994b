#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fpl/meanfield.hpp"

using namespace fpl;

namespace {

const Game kMiscoord = Game::from_rows({{0, 1}, {1, 0}});
const Game kDominant = Game::from_rows({{1, 1}, {0, 0}});
const UniformBox kFig1Box{{0, 3}, {1, 4}};

double pair_distance(const Ensemble& e, std::size_t a, std::size_t b) {
  double s = 0;
  for (std::size_t i = 0; i < e.actions(); ++i) s += std::pow(e.position(a)[i] - e.position(b)[i], 2);
  return std::sqrt(s);
}

}  // namespace

TEST(Ensemble, Validation) {
  EXPECT_NO_THROW(Ensemble(2, {1, 2, 3, 4}, {0.25, 0.75}));
  EXPECT_THROW(Ensemble(2, {1, 2, 3, 4}, {0.5, 0.6}), InvalidArgument);
  EXPECT_THROW(Ensemble(2, {1, 2, 3, 4}, {1.0, 0.0}), InvalidArgument);
  EXPECT_THROW(Ensemble(2, {1, 2, 3}, {0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(Ensemble(2, {-1, 2, 3, 4}, {0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(Ensemble(1, {1, 2}, {0.5, 0.5}), InvalidArgument);
  EXPECT_THROW(Ensemble::equal_weight(2, {}), InvalidArgument);
}

TEST(InitEnsemble, LatticeMode) {
  const auto e = init_ensemble(kFig1Box, 10000, 0, InitMode::Lattice);
  EXPECT_EQ(e.size(), 10000u);
  for (double w : e.weights()) EXPECT_DOUBLE_EQ(w, 1e-4);
  const auto sm = support_metrics(e);
  EXPECT_NEAR(sm.bbox_hi[0] - sm.bbox_lo[0], 1.0 - 0.01, 1e-12);
  EXPECT_NEAR(sm.bbox_hi[1] - sm.bbox_lo[1], 1.0 - 0.01, 1e-12);
  EXPECT_THROW(init_ensemble(kFig1Box, 10001, 0, InitMode::Lattice), InvalidArgument);
  EXPECT_THROW(init_ensemble(PointMass{{1, 1}}, 4, 0, InitMode::Lattice), InvalidArgument);
  EXPECT_THROW(init_ensemble(Lattice{{0, 3}, {1, 4}, {3, 3}}, 10, 0), InvalidArgument);
  EXPECT_EQ(init_ensemble(Lattice{{0, 3}, {1, 4}, {3, 3}}, 9, 0).size(), 9u);
}

TEST(InitEnsemble, PointMassAndDeterminism) {
  const auto p = init_ensemble(PointMass{{1, 1}}, 17, 3);
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_EQ(p.position(k)[0], 1.0);
  EXPECT_TRUE(init_ensemble(kFig1Box, 500, 9) == init_ensemble(kFig1Box, 500, 9));
  EXPECT_FALSE(init_ensemble(kFig1Box, 500, 9) == init_ensemble(kFig1Box, 500, 10));
  EXPECT_THROW(init_ensemble(kFig1Box, 0, 0), InvalidArgument);
  EXPECT_THROW(init_ensemble(UniformBox{{0, 0}, {1, 1}}, 10, 0), InvalidArgument);
}

TEST(MeanBr, Examples) {
  EXPECT_EQ(mean_br(init_ensemble(kFig1Box, 1000, 1), kMiscoord).values(), (std::vector<double>{1, 0}));
  const auto sym = Ensemble::equal_weight(2, {1, 2, 2, 1, 0.5, 4, 4, 0.5});
  EXPECT_EQ(mean_br(sym, kMiscoord).values(), (std::vector<double>{0.5, 0.5}));
  // Box [3.1,4.1]x[3,4]: x1 < x2 iff v - u > 0.1 for independent uniforms u, v,
  // whose difference has the triangular law: P = (1 - 0.1)^2 / 2.
  const double oracle = 0.9 * 0.9 / 2;
  const auto e = init_ensemble(UniformBox{{3.1, 3}, {4.1, 4}}, 1000000, 0, InitMode::Lattice);
  const auto br = mean_br(e, kMiscoord);
  EXPECT_NEAR(br[0], oracle, 2e-3);
  EXPECT_NEAR(br[0], 0.405, 2e-3);
  EXPECT_THROW(mean_br(e, Game::from_rows({{0, 1, 0}, {1, 0, 0}, {0, 0, 1}})), InvalidArgument);
}

TEST(MeanBrType, Validation) {
  EXPECT_NO_THROW((MeanBR{0.25, 0.75}));
  EXPECT_THROW((MeanBR{0.3, 0.3}), InvalidArgument);
  EXPECT_THROW((MeanBR{-0.1, 1.1}), InvalidArgument);
  EXPECT_THROW((MeanBR{1.0}), InvalidArgument);
}

TEST(TransportStep, Examples) {
  auto a = Ensemble::equal_weight(2, {2, 3});
  transport_step(a, {1, 0}, 0.0, 0.5);
  EXPECT_EQ(a.position(0)[0], 2.5);
  EXPECT_EQ(a.position(0)[1], 3.0);
  EXPECT_DOUBLE_EQ(a.time(), 0.5);

  auto b = Ensemble::equal_weight(2, {1, 0});
  for (double dt : {0.01, 0.5, 3.0}) {
    transport_step(b, {1, 0}, 1.0, dt);
    EXPECT_NEAR(b.position(0)[0], 1.0, 1e-15);
    EXPECT_EQ(b.position(0)[1], 0.0);
  }

  auto c = Ensemble::equal_weight(2, {0, 0});
  transport_step(c, {1, 0}, 1.0, std::numbers::ln2);
  EXPECT_NEAR(c.position(0)[0], 0.5, 1e-15);
  EXPECT_EQ(c.position(0)[1], 0.0);

  EXPECT_THROW(transport_step(c, {1, 0}, 1.0, 0.0), InvalidArgument);
  EXPECT_THROW(transport_step(c, {1, 0}, -1.0, 0.1), InvalidArgument);
  EXPECT_THROW(transport_step(c, {0.5, 0.25, 0.25}, 1.0, 0.1), InvalidArgument);
}

TEST(TransportStep, MatchesClosedFormFlow) {
  Rng rng(12);
  for (int k = 0; k < 1000; ++k) {
    const double mu = rng.uniform(0.01, 3), dt = rng.uniform(1e-4, 2);
    const double b0 = rng.uniform(), x0 = rng.uniform(0, 5), x1 = rng.uniform(0, 5);
    auto e = Ensemble::equal_weight(2, {x0, x1});
    transport_step(e, {b0, 1 - b0}, mu, dt);
    // Oracle: x(t) = b/mu + (x0 - b/mu) e^{-mu t}.
    EXPECT_NEAR(e.position(0)[0], b0 / mu + (x0 - b0 / mu) * std::exp(-mu * dt), 1e-12);
    EXPECT_NEAR(e.position(0)[1], (1 - b0) / mu + (x1 - (1 - b0) / mu) * std::exp(-mu * dt), 1e-12);
  }
}

TEST(DiffusionMatrixTest, Examples) {
  const auto d1 = diffusion_matrix(std::vector<double>{2, 3}, {1, 0}, 0.0);
  EXPECT_EQ(d1.d, (Eigen::Matrix2d() << 1, 0, 0, 0).finished());
  const auto d2 = diffusion_matrix(std::vector<double>{2, 3}, {0.5, 0.5}, 0.0);
  EXPECT_EQ(d2.d, (Eigen::Matrix2d() << 0.5, 0, 0, 0.5).finished());
  EXPECT_TRUE(d1.is_psd());
  EXPECT_NEAR(d1.min_eigenvalue(), 0.0, 1e-15);
  EXPECT_THROW(diffusion_matrix(std::vector<double>{2, 3, 1}, {0.5, 0.5}, 0.0), InvalidArgument);
}

TEST(DiffusionMatrixTest, TraceIdentityAndPsdOnRandomInputs) {
  Rng rng(13);
  for (int k = 0; k < 2000; ++k) {
    const std::size_t n = 2 + rng.below(3);
    std::vector<double> x(n), b(n);
    double s = 0;
    for (auto& v : x) v = rng.uniform(0, 10);
    for (auto& v : b) s += (v = rng.uniform());
    for (auto& v : b) v /= s;
    b.back() = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) b.back() -= b[i];
    if (b.back() < 0) continue;
    const double mu = rng.uniform(0, 2);
    const auto d = diffusion_matrix(x, MeanBR(b), mu);
    double trace_oracle = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double norm2 = 0;
      for (std::size_t j = 0; j < n; ++j) norm2 += std::pow(mu * x[j] - (i == j ? 1.0 : 0.0), 2);
      trace_oracle += b[i] * norm2;
    }
    EXPECT_NEAR(d.d.trace(), trace_oracle, 1e-12 * std::max(1.0, trace_oracle));
    EXPECT_EQ(d.asymmetry(), 0.0);
    EXPECT_GE(d.min_eigenvalue(), -1e-10 * std::max(1.0, trace_oracle));
  }
}

TEST(SdeStep, ZeroNoiseIsForwardEuler) {
  auto e = init_ensemble(kFig1Box, 200, 4);
  const auto start = e;
  DiffusionNoise noise = DiffusionNoise::from_seed(1);
  const MeanBR br{0.3, 0.7};
  sde_step(e, br, 0.8, 0.0, 0.01, noise);
  for (std::size_t k = 0; k < e.size(); ++k) {
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_DOUBLE_EQ(e.position(k)[i], start.position(k)[i] + (br[i] - 0.8 * start.position(k)[i]) * 0.01);
    }
  }
  auto t = start;
  auto s = start;
  transport_step(t, br, 0.0, 0.01);
  sde_step(s, br, 0.0, 0.0, 0.01, noise);
  EXPECT_EQ(t.positions(), s.positions());
}

TEST(SdeStep, NoiseIsCounterBased) {
  const double h = 0.001, dt = 0.01;
  auto e = Ensemble::equal_weight(2, {5, 5, 6, 6, 7, 7});
  DiffusionNoise noise = DiffusionNoise::from_seed(42);
  const auto key = noise.key;
  sde_step(e, {1, 0}, 0.0, h, dt, noise);
  sde_step(e, {1, 0}, 0.0, h, dt, noise);
  EXPECT_EQ(noise.step, 2u);
  for (std::size_t k = 0; k < 3; ++k) {
    // Oracle: D = e1 e1^T, so only x1 moves, by dt + sqrt(2 h dt) * xi per step.
    double x1 = 5.0 + k;
    for (std::uint64_t s = 0; s < 2; ++s) x1 += dt + std::sqrt(2 * h * dt) * counter_normal(key, s, k, 0);
    EXPECT_NEAR(e.position(k)[0], x1, 1e-12);
    EXPECT_EQ(e.position(k)[1], 5.0 + k);
  }
}

TEST(SdeStep, BrownianVariance) {
  const double h = 0.001, dt = 0.01;
  const int steps = 100;
  const std::size_t m = 10000;
  auto e = init_ensemble(PointMass{{5, 5}}, m, 0);
  DiffusionNoise noise = DiffusionNoise::from_seed(7);
  for (int s = 0; s < steps; ++s) sde_step(e, {1, 0}, 0.0, h, dt, noise);
  double m1 = 0, m2 = 0;
  for (std::size_t k = 0; k < m; ++k) m1 += e.position(k)[0], m2 += e.position(k)[1];
  m1 /= m, m2 /= m;
  double v1 = 0, v2 = 0;
  for (std::size_t k = 0; k < m; ++k) {
    v1 += std::pow(e.position(k)[0] - m1, 2);
    v2 += std::pow(e.position(k)[1] - m2, 2);
  }
  v1 /= (m - 1), v2 /= (m - 1);
  const double expected = 2 * h * steps * dt;
  EXPECT_NEAR(v1, expected, 3 * expected * std::sqrt(2.0 / (m - 1)));
  EXPECT_LE(v2, 1e-12);
  EXPECT_NEAR(m1, 5 + steps * dt, 4 * std::sqrt(expected / m));
}

TEST(SdeStep, ClipsToOrthantAndCounts) {
  auto e = init_ensemble(PointMass{{0, 1}}, 1000, 0);
  DiffusionNoise noise = DiffusionNoise::from_seed(3);
  sde_step(e, {0.5, 0.5}, 0.0, 0.01, 0.01, noise);
  for (double v : e.positions()) EXPECT_GE(v, 0.0);
  // x1 after one step is 0.005 + 0.01 Z, negative with probability Phi(-0.5)
  const double p = 0.5 * std::erfc(0.5 / std::sqrt(2.0));
  const double sd = std::sqrt(1000 * p * (1 - p));
  EXPECT_NEAR(static_cast<double>(e.clip_events()), 1000 * p, 4 * sd);
}

TEST(SdeStep, PsdSqrtRejectsIndefinite) {
  const Eigen::Matrix2d bad = (Eigen::Matrix2d() << 1, 0, 0, -1).finished();
  EXPECT_THROW(detail::psd_sqrt<Eigen::Matrix2d>(bad), NumericalError);
  const Eigen::Matrix2d good = (Eigen::Matrix2d() << 2, 1, 1, 2).finished();
  const Eigen::Matrix2d r = detail::psd_sqrt<Eigen::Matrix2d>(good);
  EXPECT_LE((r * r - good).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SupportMetricsTest, Examples) {
  const auto one = support_metrics(Ensemble::equal_weight(2, {1, 3}));
  EXPECT_EQ(one.diameter, 0.0);
  EXPECT_EQ(one.bbox_lo, one.bbox_hi);
  EXPECT_EQ(one.lambda, (std::vector<double>{0.25, 0.75}));
  const auto two = support_metrics(Ensemble::equal_weight(2, {0, 1, 1, 0}));
  EXPECT_DOUBLE_EQ(two.diameter, std::numbers::sqrt2);
  EXPECT_EQ(two.lambda, (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(two.diameter_method, "exact-pairwise");
}

TEST(SupportMetricsTest, HullDiameterMatchesBruteForce) {
  const auto e = init_ensemble(UniformBox{{0, 0.5}, {2, 1.5}}, 3000, 5);
  const auto sm = support_metrics(e);
  EXPECT_EQ(sm.diameter_method, "convex-hull");
  double brute = 0;
  for (std::size_t a = 0; a < e.size(); ++a) {
    for (std::size_t b = a + 1; b < e.size(); ++b) brute = std::max(brute, pair_distance(e, a, b));
  }
  EXPECT_DOUBLE_EQ(sm.diameter, brute);
  const auto e3 = init_ensemble(UniformBox{{0, 0, 1}, {1, 1, 2}}, 3000, 5);
  const auto s3 = support_metrics(e3);
  EXPECT_EQ(s3.diameter_method, "subsample");
  EXPECT_LE(s3.diameter, std::sqrt(3.0));
  EXPECT_GT(s3.diameter, 1.5);
}

TEST(RunMeanfield, Fig1CenterMatchesBoxPrediction) {
  auto e = init_ensemble(kFig1Box, 10000, 0, InitMode::Lattice);
  MeanFieldOptions opt;
  opt.dt = 1e-3;
  opt.horizon_t = 20;
  opt.sample_every = 1;
  const auto s = run_meanfield(e, kMiscoord, opt);
  EXPECT_NEAR(s.back().mean_prior[0], 12.001, 0.05);
  EXPECT_NEAR(s.back().mean_prior[1], 12.001, 0.05);
  EXPECT_EQ(s.size(), 21u);
  EXPECT_NEAR(s.back().t, 20.0, 1e-9);
  EXPECT_NEAR(e.total_weight(), 1.0, 1e-12);
}

TEST(RunMeanfield, ShapeIsPreservedWithoutMemory) {
  // Dyadic lattice, weights and step: every translation is exact.
  auto e = init_ensemble(Lattice{{0, 3}, {1, 4}, {8, 8}}, 64, 0);
  const auto start = e;
  MeanFieldOptions opt;
  opt.dt = 0x1.0p-10;
  opt.horizon_t = 4;
  opt.sample_every = 1;
  run_meanfield(e, kMiscoord, opt);
  const double d0 = e.position(0)[0] - start.position(0)[0];
  const double d1 = e.position(0)[1] - start.position(0)[1];
  EXPECT_GT(d0 + d1, 3.99);
  for (std::size_t k = 0; k < e.size(); ++k) {
    EXPECT_EQ(e.position(k)[0] - start.position(k)[0], d0);
    EXPECT_EQ(e.position(k)[1] - start.position(k)[1], d1);
    for (std::size_t j = 0; j < k; ++j) EXPECT_EQ(pair_distance(e, k, j), pair_distance(start, k, j));
  }
}

TEST(RunMeanfield, MemoryContractsPairwiseDistances) {
  auto e = init_ensemble(kFig1Box, 300, 2);
  const auto start = e;
  MeanFieldOptions opt;
  opt.mu = 0.7;
  opt.dt = 0.01;
  opt.horizon_t = 3;
  run_meanfield(e, kMiscoord, opt);
  const double factor = std::exp(-0.7 * 3);
  for (std::size_t k = 1; k < e.size(); k += 7) {
    EXPECT_NEAR(pair_distance(e, k, 0), factor * pair_distance(start, k, 0), 1e-12);
  }
  const auto a = support_metrics(start), b = support_metrics(e);
  EXPECT_NEAR(b.diameter / a.diameter, factor, 1e-9);
}

TEST(RunMeanfield, DominantGameConvergesToFixedPoint) {
  auto e = init_ensemble(kFig1Box, 2000, 3);
  const double d0 = support_metrics(e).diameter;
  MeanFieldOptions opt;
  opt.mu = 1;
  opt.dt = 0.01;
  opt.horizon_t = 4;
  run_meanfield(e, kDominant, opt);
  EXPECT_NEAR(support_metrics(e).diameter / d0, std::exp(-4.0), 0.1 * std::exp(-4.0));
  opt.horizon_t = 10;
  run_meanfield(e, kDominant, opt);
  for (std::size_t k = 0; k < e.size(); ++k) {
    EXPECT_NEAR(e.position(k)[0], 1.0, 0.01);
    EXPECT_NEAR(e.position(k)[1], 0.0, 0.01);
  }
}

TEST(RunMeanfield, InvariantsOnRandomGames) {
  Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a(3, 3);
    for (Eigen::Index i = 0; i < 9; ++i) a.data()[i] = rng.uniform(-1, 1);
    auto e = init_ensemble(UniformBox{{0.1, 0.1, 0.1}, {1, 2, 3}}, 300, trial);
    MeanFieldOptions opt;
    opt.mu = trial % 2 ? 0.0 : 1.5;
    opt.dt = 0.02;
    opt.horizon_t = 3;
    opt.sample_every = 0.5;
    const auto s = run_meanfield(e, Game(a), opt);
    for (double v : e.positions()) EXPECT_GE(v, 0.0);
    EXPECT_EQ(e.clip_events(), 0u);
    EXPECT_NEAR(e.total_weight(), 1.0, 1e-12);
    for (const auto& r : s.records) {
      double sl = 0, sb = 0, nb = 0;
      for (std::size_t i = 0; i < 3; ++i) sl += r.lambda[i], sb += r.mean_br[i], nb += r.mean_br[i] * r.mean_br[i];
      EXPECT_NEAR(sl, 1.0, 1e-12);
      EXPECT_NEAR(sb, 1.0, 1e-12);
      EXPECT_GE(std::sqrt(nb), 1.0 / 3);
    }
  }
}

TEST(RunMeanfield, DiffusionRunsAreReproducible) {
  MeanFieldOptions opt;
  opt.diffusion = true;
  opt.h = 0.01;
  opt.dt = 0.01;
  opt.horizon_t = 1;
  opt.noise_seed = 5;
  auto a = init_ensemble(kFig1Box, 500, 1), b = a;
  const auto sa = run_meanfield(a, kMiscoord, opt);
  const auto sb = run_meanfield(b, kMiscoord, opt);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(sa.back().lambda, sb.back().lambda);
  opt.noise_seed = 6;
  auto c = init_ensemble(kFig1Box, 500, 1);
  run_meanfield(c, kMiscoord, opt);
  EXPECT_FALSE(a == c);
}

TEST(RunMeanfield, Errors) {
  auto e = init_ensemble(kFig1Box, 10, 1);
  MeanFieldOptions opt;
  opt.dt = 0;
  EXPECT_THROW(run_meanfield(e, kMiscoord, opt), InvalidArgument);
  opt.dt = 0.1;
  opt.horizon_t = 0;
  EXPECT_THROW(run_meanfield(e, kMiscoord, opt), InvalidArgument);
  opt.horizon_t = 1;
  opt.diffusion = true;
  EXPECT_THROW(run_meanfield(e, kMiscoord, opt), InvalidArgument);
}
