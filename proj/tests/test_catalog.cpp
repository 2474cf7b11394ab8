#include <gtest/gtest.h>

#include "ymlab/catalog.hpp"

using namespace ymlab;

TEST(Catalog, FlatHasNoCurvature) {
  EXPECT_EQ(curvature(catalog::flat(Grid(3, 9, 2.0), 3)).max_abs(), 0.0);
}

TEST(Catalog, AbelianLinearHasConstantCurvature) {
  const Grid g(3, 13, 3.0);
  const std::vector<double> b = {0, 1, 0.5, -1, 0, -2, -0.5, 2, 0};
  const auto f = curvature(catalog::abelian_linear(g, 3, b, 0, 2));
  for (std::size_t p = 0; p < g.points(); ++p)
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) {
        const double* blk = f.at(p, pair_index(3, i, j));
        EXPECT_NEAR(blk[0 * 3 + 2], b[i * 3 + j], 1e-12);
        EXPECT_NEAR(blk[2 * 3 + 0], -b[i * 3 + j], 1e-12);
        EXPECT_EQ(blk[1], 0.0);
      }
  const std::vector<double> bad = {0, 1, 0.5, 1, 0, -2, -0.5, 2, 0};
  EXPECT_THROW(catalog::abelian_linear(g, 3, bad), std::invalid_argument);
}

TEST(Catalog, PureGaugeIsNearlyFlat) {
  const Grid g(2, 33, 3.0);
  const auto a = catalog::pure_gauge(g, 3, 2, 0.5, 1.0);
  EXPECT_GT(a.max_abs(), 1e-2);
  EXPECT_LE(sup_norm(curvature(a), Region{2, -1.0}), 1e-3);
}

TEST(Catalog, RandomSmoothIsDeterministicAndAbelianOption) {
  const Grid g(3, 9, 2.0);
  catalog::SmoothSpec sp;
  sp.seed = 42;
  EXPECT_EQ(catalog::random_smooth(g, 3, sp).storage(), catalog::random_smooth(g, 3, sp).storage());
  sp.abelian = true;
  const auto a = catalog::random_smooth(g, 3, sp);
  for (std::size_t p = 0; p < g.points(); ++p)
    for (int j = 0; j < 3; ++j) {
      EXPECT_EQ(a.at(p, j)[2], 0.0);
      EXPECT_EQ(a.at(p, j)[5], 0.0);
    }
}

TEST(Catalog, DescendedExtensionIsConstantAlongAxis) {
  const Grid gi(2, 9, 2.0);
  catalog::SmoothSpec sp;
  const auto inner = catalog::random_smooth(gi, 2, sp);
  const auto a = catalog::descended(inner, 1);
  const Grid& g = a.grid();
  EXPECT_EQ(g.n(), 3);
  for (std::size_t p = 0; p < g.points(); ++p) {
    EXPECT_EQ(a.at(p, 1)[1], 0.0);
    const std::size_t q = static_cast<std::size_t>(g.index(p, 0)) * 9 + static_cast<std::size_t>(g.index(p, 2));
    EXPECT_EQ(a.at(p, 0)[1], inner.at(q, 0)[1]);
    EXPECT_EQ(a.at(p, 2)[1], inner.at(q, 1)[1]);
  }
  std::vector<double> e(3, 0.0);
  e[1] = 1.0;
  EXPECT_LE(interior_vector(curvature(a), e).max_abs(), 1e-14);
}
