#include <gtest/gtest.h>

#include <vector>

#include "fpl/initial.hpp"

using namespace fpl;

TEST(Initial, Dimension) {
  EXPECT_EQ(dimension(UniformBox{{0, 3}, {1, 4}}), 2u);
  EXPECT_EQ(dimension(PointMass{{1, 1, 1}}), 3u);
  EXPECT_EQ(dimension(Lattice{{0, 3}, {1, 4}, {2, 2}}), 2u);
}

TEST(Initial, ValidationErrors) {
  EXPECT_NO_THROW(validate(UniformBox{{0, 3}, {1, 4}}));
  EXPECT_THROW(validate(UniformBox{{1, 3}, {1, 4}}), InvalidArgument);
  EXPECT_THROW(validate(UniformBox{{-1, 3}, {1, 4}}), InvalidArgument);
  EXPECT_THROW(validate(UniformBox{{0, 0}, {1, 1}}), InvalidArgument);  // touches x = 0
  EXPECT_THROW(validate(UniformBox{{0}, {1}}), InvalidArgument);
  EXPECT_THROW(validate(UniformBox{{0, 1}, {1}}), InvalidArgument);
  EXPECT_THROW(validate(PointMass{{0, 0}}), InvalidArgument);
  EXPECT_THROW(validate(PointMass{{-1, 2}}), InvalidArgument);
  EXPECT_NO_THROW(validate(PointMass{{0, 2}}));
  EXPECT_THROW(validate(Lattice{{0, 3}, {1, 4}, {2}}), InvalidArgument);
  EXPECT_THROW(validate(Lattice{{0, 3}, {1, 4}, {0, 2}}), InvalidArgument);
}

TEST(Initial, LatticePointsAreCellCentered) {
  const Lattice lat{{0, 3}, {1, 4}, {2, 4}};
  EXPECT_EQ(lattice_size(lat), 8u);
  const auto pts = lattice_points(lat);
  ASSERT_EQ(pts.size(), 16u);
  EXPECT_DOUBLE_EQ(pts[0], 0.25);
  EXPECT_DOUBLE_EQ(pts[1], 3.125);
  EXPECT_DOUBLE_EQ(pts[2], 0.25);  // last axis fastest
  EXPECT_DOUBLE_EQ(pts[3], 3.375);
  EXPECT_DOUBLE_EQ(pts[14], 0.75);
  EXPECT_DOUBLE_EQ(pts[15], 3.875);
}

TEST(Initial, SamplesStayInSupport) {
  Rng rng(1);
  const UniformBox box{{0, 3}, {1, 4}};
  double m0 = 0, m1 = 0;
  std::vector<double> x(2);
  for (int k = 0; k < 20000; ++k) {
    sample_into(box, rng, x);
    ASSERT_GE(x[0], 0.0);
    ASSERT_LT(x[0], 1.0);
    ASSERT_GE(x[1], 3.0);
    ASSERT_LT(x[1], 4.0);
    m0 += x[0], m1 += x[1];
  }
  EXPECT_NEAR(m0 / 20000, 0.5, 0.01);
  EXPECT_NEAR(m1 / 20000, 3.5, 0.01);
  sample_into(PointMass{{1, 2}}, rng, x);
  EXPECT_EQ(x, (std::vector<double>{1, 2}));
  const Lattice lat{{0, 3}, {1, 4}, {2, 2}};
  for (int k = 0; k < 100; ++k) {
    sample_into(lat, rng, x);
    EXPECT_TRUE(x[0] == 0.25 || x[0] == 0.75);
    EXPECT_TRUE(x[1] == 3.25 || x[1] == 3.75);
  }
}

TEST(Initial, MeanPoint) {
  EXPECT_EQ(mean_point(UniformBox{{0, 3}, {1, 4}}), (std::vector<double>{0.5, 3.5}));
  EXPECT_EQ(mean_point(PointMass{{1, 2}}), (std::vector<double>{1, 2}));
  EXPECT_EQ(mean_point(Lattice{{0, 0.5}, {2, 1.5}, {3, 3}}), (std::vector<double>{1, 1}));
}
