#include <gtest/gtest.h>

#include <random>

#include "support.hpp"
#include "ymlab/fields.hpp"

using namespace ymlab;
using ymlab::testing::BumpConnection;
using ymlab::testing::convergence_slope;
using ymlab::testing::max_block_error;

namespace {

ConnectionField abelian_linear_2d(const Grid& g) {
  // A_1 = -x2/2 E_12, A_2 = x1/2 E_12, so F_12 = E_12.
  return sample_form<FormKind::connection>(g, 2, [](std::span<const double> x, int c, double* out) {
    const double v = c == 0 ? -0.5 * x[1] : 0.5 * x[0];
    out[1] = v;
    out[2] = -v;
  });
}

OneForm random_one_form(const Grid& g, int r, std::uint64_t seed) {
  const BumpConnection b(g.n(), r, seed);
  return as_one_form(b.sample(g));
}

}  // namespace

TEST(Grid, Validation) {
  EXPECT_THROW(Grid(1, 9, 1.0), DimensionError);
  EXPECT_THROW(Grid(7, 9, 1.0), DimensionError);
  EXPECT_THROW(Grid(2, 8, 1.0), DimensionError);
  EXPECT_THROW(Grid(2, 7, 1.0), DimensionError);
  EXPECT_THROW(Grid(2, 9, -1.0), DomainError);
  const Grid g(3, 9, 2.0);
  EXPECT_EQ(g.points(), 729u);
  EXPECT_DOUBLE_EQ(g.h(), 0.5);
  EXPECT_EQ(g.coord(g.center_point(), 0), 0.0);
  EXPECT_EQ(g.stride(0), 81u);
  EXPECT_EQ(g.stride(2), 1u);
}

TEST(Grid, PairIndexRoundTrip) {
  for (int n = 2; n <= 6; ++n) {
    int c = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j, ++c) {
        EXPECT_EQ(pair_index(n, i, j), c);
        EXPECT_EQ(pair_of(n, c), std::make_pair(i, j));
      }
    EXPECT_EQ(c, pair_count(n));
  }
}

TEST(Curvature, FlatConnectionHasZeroCurvature) {
  const Grid g(3, 9, 2.0);
  const auto f = curvature(ConnectionField(g, 3));
  EXPECT_EQ(f.max_abs(), 0.0);
}

TEST(Curvature, AbelianLinearFieldIsConstant) {
  const Grid g(2, 17, 3.0);
  const auto f = curvature(abelian_linear_2d(g));
  const auto e = AlgebraElement::basis(2, 0, 1);
  const double err = max_block_error(f, 0, [&](std::span<const double>, int) {
    return std::vector<double>(e.entries().begin(), e.entries().end());
  });
  EXPECT_LE(err, 1e-10);
}

TEST(Curvature, FourthOrderAgainstAnalyticCurvature) {
  const BumpConnection b(3, 3, 21, 0.6, 3.0);
  std::vector<double> hs, errs;
  for (int m : {25, 33, 41}) {
    const Grid g(3, m, 4.0);
    const auto f = curvature(b.sample(g));
    hs.push_back(g.h());
    errs.push_back(max_block_error(f, 2, [&](std::span<const double> x, int c) {
      const auto [i, j] = pair_of(3, c);
      return b.F(i, j, x);
    }));
  }
  EXPECT_LT(errs.back(), 1e-3);
  EXPECT_GE(convergence_slope(hs, errs), 3.5);
}

TEST(Curvature, OutputIsAntisymmetric) {
  const BumpConnection b(3, 4, 22, 1.5);
  const auto f = curvature(b.sample(Grid(3, 11, 2.0)));
  EXPECT_EQ(f.max_antisymmetry_defect(), 0.0);
  EXPECT_TRUE(f.all_finite());
}

TEST(CovariantDerivative, FlatConnectionGivesPartialDerivative) {
  const Grid g(2, 13, 2.0);
  const auto theta = random_one_form(g, 3, 5);
  const ConnectionField zero(g, 3);
  // independent one-dimensional oracle along axis 0
  const auto d = covariant_derivative(zero, theta, 0);
  const int m = g.m();
  const double h = g.h();
  double worst = 0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    const int i = g.index(p, 0);
    const std::size_t s = g.stride(0);
    for (int c = 0; c < 2; ++c)
      for (int q = 0; q < 9; ++q) {
        auto v = [&](int off) { return theta.at(p + off * static_cast<std::ptrdiff_t>(s), c)[q]; };
        double ref;
        if (i >= 2 && i <= m - 3)
          ref = (-v(2) + 8 * v(1) - 8 * v(-1) + v(-2)) / (12 * h);
        else if (i < 2)
          ref = (-3 * v(0) + 4 * v(1) - v(2)) / (2 * h);
        else
          ref = (3 * v(0) - 4 * v(-1) + v(-2)) / (2 * h);
        worst = std::max(worst, std::abs(ref - d.at(p, c)[q]));
      }
  }
  EXPECT_LE(worst, 1e-13);
}

TEST(CovariantDerivative, ConstantFormUnderFlatConnectionVanishes) {
  const Grid g(3, 9, 1.0);
  const auto t = AlgebraElement::basis(3, 0, 2);
  const auto theta = sample_form<FormKind::one_form>(g, 3, [&](std::span<const double>, int c, double* out) {
    for (int q = 0; q < 9; ++q) out[q] = (c + 1) * t.entries()[q];
  });
  for (int axis = 0; axis < 3; ++axis) EXPECT_LE(covariant_derivative(ConnectionField(g, 3), theta, axis).max_abs(), 1e-13);
}

TEST(CovariantDerivative, MatchesStencilPlusBracketOracle) {
  const Grid g(3, 11, 2.0);
  const BumpConnection b(3, 3, 31);
  const auto a = b.sample(g);
  const auto theta = random_one_form(g, 3, 32);
  for (int axis = 0; axis < 3; ++axis) {
    const auto full = covariant_derivative(a, theta, axis);
    const auto plain = covariant_derivative(ConnectionField(g, 3), theta, axis);
    double worst = 0;
    for (std::size_t p = 0; p < g.points(); ++p)
      for (int j = 0; j < 3; ++j) {
        const auto bc = bracket(a.element(p, axis), theta.element(p, j));
        for (int q = 0; q < 9; ++q)
          worst = std::max(worst, std::abs(full.at(p, j)[q] - plain.at(p, j)[q] - bc.entries()[q]));
      }
    EXPECT_LE(worst, 1e-13);
  }
}

TEST(CovariantDerivative, GridMismatchThrows) {
  const ConnectionField a(Grid(2, 9, 1.0), 2);
  const OneForm theta(Grid(2, 11, 1.0), 2);
  EXPECT_THROW(covariant_derivative(a, theta, 0), DimensionError);
  EXPECT_THROW(d_nabla_one(a, theta), DimensionError);
}

TEST(DNabla, AbelianConnectionRecoversCurvature) {
  const Grid g(2, 17, 3.0);
  const auto a = abelian_linear_2d(g);
  const auto d = d_nabla_one(a, as_one_form(a));
  // d^nabla A = dA + 2[A, A] bracket terms vanish for abelian A.
  const auto f = curvature(a);
  for (std::size_t k = 0; k < f.data().size(); ++k) EXPECT_NEAR(d.data()[k], f.data()[k], 1e-12);
}

TEST(DNabla, ZeroFormGivesZero) {
  const Grid g(3, 9, 1.0);
  const BumpConnection b(3, 2, 41);
  EXPECT_EQ(d_nabla_one(b.sample(g), OneForm(g, 2)).max_abs(), 0.0);
}

TEST(DNabla, ExactFormIsClosedUnderFlatConnection) {
  const Grid g(3, 13, 2.0);
  const auto t = AlgebraElement::basis(3, 1, 2);
  // first lattice derivative of a scalar f, times a fixed generator
  OneForm df(g, 3);
  {
    const auto scalar = sample_form<FormKind::one_form>(g, 3, [&](std::span<const double> x, int, double* out) {
      const double f = std::sin(x[0]) * std::cos(0.7 * x[1]) + x[2] * x[2] * x[0];
      for (int q = 0; q < 9; ++q) out[q] = f * t.entries()[q];
    });
    for (int axis = 0; axis < 3; ++axis) {
      const auto d = covariant_derivative(ConnectionField(g, 3), scalar, axis);
      for (std::size_t p = 0; p < g.points(); ++p) std::copy(d.at(p, 0), d.at(p, 0) + 9, df.at(p, axis));
    }
  }
  EXPECT_LE(d_nabla_one(ConnectionField(g, 3), df).max_abs(), 1e-12);
}

TEST(Codifferential, ZeroAndConstantAbelian) {
  const Grid g(2, 13, 2.0);
  const auto a = abelian_linear_2d(g);
  EXPECT_EQ(codifferential(a, TwoForm(g, 2)).max_abs(), 0.0);
  EXPECT_LE(codifferential(a, curvature(a)).max_abs(), 1e-12);
}

TEST(Codifferential, FourthOrderAgainstAnalyticJ) {
  const BumpConnection b(3, 3, 51, 0.6, 3.0);
  std::vector<double> hs, errs;
  for (int m : {25, 33, 41}) {
    const Grid g(3, m, 4.0);
    const auto a = b.sample(g);
    const auto j = codifferential(a, curvature(a));
    hs.push_back(g.h());
    errs.push_back(max_block_error(j, 4, [&](std::span<const double> x, int c) { return b.J(c, x); }));
  }
  EXPECT_LT(errs.back(), 1e-3);
  EXPECT_GE(convergence_slope(hs, errs), 3.5);
}

TEST(Codifferential, WeightedFormEqualsJMinusInteriorTerm) {
  const BumpConnection b(3, 3, 52, 0.6, 3.0);
  const Center c({0.2, -0.1, 0.0}, 0.7);
  std::vector<double> hs, errs;
  for (int m : {25, 33, 41}) {
    const Grid g(3, m, 4.0);
    const auto a = b.sample(g);
    const auto f = curvature(a);
    const auto sw = weighted_divergence(a, f, c);
    const auto x = interior_product(f, c);
    hs.push_back(g.h());
    errs.push_back(max_block_error(sw, 4, [&](std::span<const double> y, int comp) {
      auto v = b.J(comp, y);
      for (int p = 0; p < 3; ++p) {
        if (p == comp) continue;
        const auto fp = p < comp ? b.F(p, comp, y) : b.F(comp, p, y);
        const double sign = p < comp ? 1.0 : -1.0;
        for (int q = 0; q < 9; ++q) v[q] -= sign * (y[p] - c.x0[p]) * fp[q] / (2 * c.t0);
      }
      return v;
    }));
  }
  EXPECT_GE(convergence_slope(hs, errs), 3.5);
}

TEST(InteriorProduct, VanishesAtCenterPoint) {
  const Grid g(3, 9, 2.0);
  const BumpConnection b(3, 2, 61);
  const auto f = curvature(b.sample(g));
  const std::size_t p = 3 * 81 + 5 * 9 + 2;
  const Center c({g.coord(p, 0), g.coord(p, 1), g.coord(p, 2)}, 1.0);
  const auto x = interior_product(f, c);
  for (int j = 0; j < 3; ++j)
    for (int q = 0; q < 4; ++q) EXPECT_EQ(x.at(p, j)[q], 0.0);
}

TEST(InteriorProduct, ConstantAbelianContraction) {
  const Grid g(2, 9, 2.0);
  const auto f = curvature(abelian_linear_2d(g));
  const auto x = interior_product(f, Center::origin(2));
  std::vector<double> y(2);
  for (std::size_t p = 0; p < g.points(); ++p) {
    g.coords(p, y);
    // X_1 = x^2 F_21 = -x^2 E_12, X_2 = x^1 F_12 = x^1 E_12
    EXPECT_NEAR(x.at(p, 0)[1], -y[1], 1e-12);
    EXPECT_NEAR(x.at(p, 1)[1], y[0], 1e-12);
  }
}

TEST(InteriorProduct, LinearInFormAndCenterOffset) {
  const Grid g(3, 9, 2.0);
  const auto f1 = curvature(BumpConnection(3, 2, 62).sample(g));
  const auto f2 = curvature(BumpConnection(3, 2, 63).sample(g));
  const Center c = Center::origin(3);
  const auto lhs = interior_product(2.0 * f1 + f2, c);
  const auto rhs = 2.0 * interior_product(f1, c) + interior_product(f2, c);
  for (std::size_t k = 0; k < lhs.data().size(); ++k) EXPECT_NEAR(lhs.data()[k], rhs.data()[k], 1e-13);
  // shifting x0 by v subtracts i_v F
  const std::vector<double> v = {0.25, -0.5, 0.75};
  const auto shifted = interior_product(f1, Center(v, 1.0));
  const auto expect = interior_product(f1, c) - interior_vector(f1, v);
  for (std::size_t k = 0; k < shifted.data().size(); ++k) EXPECT_NEAR(shifted.data()[k], expect.data()[k], 1e-13);
}

TEST(InteriorVector, VanishesAlongTranslationInvariantDirection) {
  // A depends only on x1, x2 and A_3 = 0, so F_j3 = 0 for all j.
  const Grid g(3, 9, 2.0);
  const BumpConnection b(2, 2, 64);
  const auto a = sample_form<FormKind::connection>(g, 2, [&](std::span<const double> x, int c, double* out) {
    if (c == 2) return;
    const auto v = b.A(c, x.first(2));
    std::copy(v.begin(), v.end(), out);
  });
  const std::vector<double> e3 = {0, 0, 1};
  EXPECT_LE(interior_vector(curvature(a), e3).max_abs(), 1e-13);
}

TEST(Bianchi, FlatAndAbelianLinear) {
  EXPECT_EQ(bianchi_residual(ConnectionField(Grid(3, 11, 2.0), 2)), 0.0);
  const Grid g(3, 13, 3.0);
  const auto a = sample_form<FormKind::connection>(g, 2, [](std::span<const double> x, int c, double* out) {
    // A_j = -1/2 B_jk x^k E_12 with B_12 = 1, B_13 = 0.5, B_23 = -0.3
    const double B[3][3] = {{0, 1, 0.5}, {-1, 0, -0.3}, {-0.5, 0.3, 0}};
    double v = 0;
    for (int k = 0; k < 3; ++k) v -= 0.5 * B[c][k] * x[k];
    out[1] = v;
    out[2] = -v;
  });
  EXPECT_LE(bianchi_residual(a), 1e-10);
}

TEST(Bianchi, FourthOrderDecayOnSmoothField) {
  const BumpConnection b(3, 3, 71, 0.6, 3.0);
  std::vector<double> hs, errs;
  for (int m : {25, 33, 41}) {
    const Grid g(3, m, 4.0);
    hs.push_back(g.h());
    errs.push_back(bianchi_residual(b.sample(g)));
  }
  EXPECT_GE(convergence_slope(hs, errs), 3.5);
}

TEST(RApply, MatchesElementwiseBrackets) {
  const Grid g(3, 9, 2.0);
  const auto f = curvature(BumpConnection(3, 3, 81).sample(g));
  const auto theta = random_one_form(g, 3, 82);
  const auto rt = R_apply(f, theta);
  for (std::size_t p = 0; p < g.points(); p += 7)
    for (int j = 0; j < 3; ++j) {
      auto ref = AlgebraElement::zero(3);
      for (int i = 0; i < 3; ++i) {
        if (i == j) continue;
        const auto fij = i < j ? f.element(p, pair_index(3, i, j)) : -1.0 * f.element(p, pair_index(3, j, i));
        ref += bracket(fij, theta.element(p, i));
      }
      for (int q = 0; q < 9; ++q) EXPECT_NEAR(rt.at(p, j)[q], ref.entries()[q], 1e-13);
    }
}
