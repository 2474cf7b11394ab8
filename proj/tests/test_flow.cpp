#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"
#include "ymlab/archive.hpp"
#include "ymlab/flow.hpp"

using namespace ymlab;
using ymlab::testing::BumpConnection;

namespace {

ConnectionField constant_curvature(const Grid& g) {
  return sample_form<FormKind::connection>(g, 2, [](std::span<const double> x, int c, double* out) {
    const double v = c == 0 ? -0.5 * x[1] : (c == 1 ? 0.5 * x[0] : 0.0);
    out[1] = v;
    out[2] = -v;
  });
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ymlab_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Archive, RoundTripAndDigest) {
  const Grid g(3, 9, 2.0);
  const auto a = BumpConnection(3, 3, 1).sample(g);
  const auto dir = scratch("archive");
  const auto manifest = save_field(a, dir / "field", {{"label", "bump"}});
  const auto b = load_field<FormKind::connection>(manifest);
  EXPECT_TRUE(b.grid() == g);
  EXPECT_EQ(b.storage(), a.storage());
  EXPECT_EQ(read_manifest(manifest)["meta"]["label"], "bump");
  EXPECT_THROW(load_field<FormKind::two_form>(manifest), ArchiveError);
  {
    std::fstream f(dir / "field.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    f.put('\x7f');
  }
  EXPECT_THROW(load_field<FormKind::connection>(manifest), ArchiveError);
  std::filesystem::remove_all(dir);
}

TEST(Archive, KnownDigest) {
  const char* abc = "abc";
  EXPECT_EQ(sha256_hex(abc, 3), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(FlowStep, FlatIsAFixedPoint) {
  const Grid g(3, 13, 3.0);
  const ConnectionField a(g, 2);
  EXPECT_EQ(flow_step(a, max_stable_dt(g)).max_abs(), 0.0);
}

TEST(FlowStep, YangMillsConnectionIsUnchanged) {
  const Grid g(2, 17, 3.0);
  const auto a = constant_curvature(g);
  auto b = flow_step(a, max_stable_dt(g));
  b -= a;
  EXPECT_LE(b.max_abs(), 1e-13);
}

TEST(FlowStep, RejectsSteps) {
  const Grid g(2, 17, 3.0);
  const ConnectionField a(g, 2);
  EXPECT_THROW(flow_step(a, 1.01 * max_stable_dt(g)), DomainError);
  EXPECT_THROW(flow_step(a, 1e-6, 0.6), DomainError);
  EXPECT_THROW(flow_step(a, -1.0), DomainError);
}

TEST(FlowStep, BlowupCarriesLastFiniteSnapshot) {
  const Grid g(2, 17, 3.0);
  auto a = BumpConnection(2, 3, 3).sample(g);
  // [A_1, A_2] overflows at the center
  const std::size_t c = g.center_point();
  a.at(c, 0)[1] = 1e160, a.at(c, 0)[3] = -1e160;
  a.at(c, 1)[2] = 1e160, a.at(c, 1)[6] = -1e160;
  ASSERT_TRUE(a.all_finite());
  try {
    flow_step(a, max_stable_dt(g));
    FAIL() << "expected blowup";
  } catch (const BlowupDetected& e) {
    EXPECT_TRUE(e.last_finite.all_finite());
    EXPECT_EQ(e.last_finite.storage(), a.storage());
  }
}

TEST(FlowStep, EnergyDecreasesOnRandomData) {
  const Grid g(3, 17, 4.0);
  auto a = BumpConnection(3, 3, 4, 0.8, 1.5).sample(g);
  double e = ym_energy(a);
  for (int s = 0; s < 10; ++s) {
    a = flow_step(a, max_stable_dt(g));
    const double e1 = ym_energy(a);
    EXPECT_LE(e1, e);
    e = e1;
  }
}

TEST(FlowStep, SemiDiscreteEnergyRateIsExact) {
  // dE/dt = -sum trap |J|^2 over the unfrozen points
  const Grid g(2, 25, 4.0);
  const auto a = BumpConnection(2, 3, 5, 0.8, 1.5).sample(g);
  const double dt = 1e-4 * max_stable_dt(g);
  const double rate = (ym_energy(flow_step(a, dt)) - ym_energy(flow_step(a, dt / 2))) / (dt / 2);
  const OneForm j = codifferential(a, curvature(a));
  double expect = 0.0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    if (g.boundary_distance(p) < 4) continue;
    for (int c = 0; c < 2; ++c) expect -= trapezoid_factor(g, p) * mat::frob(3, j.at(p, c), j.at(p, c));
  }
  EXPECT_NEAR(rate, expect, 1e-4 * std::abs(expect));
}

TEST(FlowStep, ConstantGaugeEquivariance) {
  const Grid g(3, 13, 3.0);
  const auto a = BumpConnection(3, 3, 6, 0.8, 1.5).sample(g);
  const auto h = GaugeTransform::exponential(g, 3, [](std::span<const double>, double* out) {
    out[1] = 0.4, out[5] = -0.9, out[2] = 0.2;
  });
  const double dt = max_stable_dt(g);
  auto lhs = flow_step(flow_step(gauge_apply(h, a), dt), dt);
  const auto rhs = gauge_apply(h, flow_step(flow_step(a, dt), dt));
  lhs -= rhs;
  EXPECT_LE(lhs.max_abs(), 1e-6);
}

TEST(Integrate, FlatTraceAndReportedDiagnostics) {
  const Grid g(2, 13, 3.0);
  FlowConfig cfg;
  cfg.centers = {Center::origin(2, 1.0)};
  const auto tr = integrate(ConnectionField(g, 2), 0.05, cfg);
  ASSERT_GE(tr.snapshots.size(), 2u);
  EXPECT_EQ(tr.snapshots.size(), tr.diagnostics.size());
  for (const auto& d : tr.diagnostics) {
    EXPECT_EQ(d.sup_f, 0.0);
    EXPECT_EQ(d.phi[0], 0.0);
  }
  EXPECT_NEAR(tr.times.back(), 0.05, 1e-14);
  for (std::size_t i = 1; i < tr.times.size(); ++i) EXPECT_GT(tr.times[i], tr.times[i - 1]);
  EXPECT_THROW(integrate(ConnectionField(g, 2), 2.0, cfg), DomainError);
}

TEST(Integrate, EnergyPhiAndEntropyMonotone) {
  const Grid g(2, 25, 5.0);
  const auto a = BumpConnection(2, 3, 7, 0.8, 1.0).sample(g);
  FlowConfig cfg;
  cfg.centers = {Center::origin(2, 1.0), Center({0.5, -0.3}, 0.8), Center({-0.4, 0.2}, 1.5)};
  cfg.snapshot_stride = 4;
  cfg.entropy_stride = 2;
  const auto tr = integrate(a, 0.1, cfg);
  EXPECT_TRUE(tr.violations.empty());
  double prev_e = std::numeric_limits<double>::infinity(), prev_h = prev_e;
  for (const auto& d : tr.diagnostics) {
    EXPECT_LE(d.energy, prev_e);
    prev_e = d.energy;
    if (!std::isnan(d.entropy)) {
      EXPECT_LE(d.entropy, prev_h + 1e-4);
      prev_h = d.entropy;
    }
  }
}

TEST(Monotonicity, FormulaMatchesCenteredDifference) {
  const Grid g(2, 33, 5.0);
  const auto a = BumpConnection(2, 3, 8, 0.8, 1.0).sample(g);
  FlowConfig cfg;
  cfg.snapshot_stride = 2;
  const auto tr = integrate(a, 0.1, cfg);
  const auto rep = monotonicity_check(tr, Center({0.2, 0.1}, 1.0));
  EXPECT_TRUE(rep.monotone);
  EXPECT_TRUE(rep.agrees) << rep.relative_discrepancy;
  EXPECT_GT(rep.lhs.size(), 2u);
  const auto flat = monotonicity_check(integrate(ConnectionField(g, 2), 0.01, cfg), Center::origin(2));
  EXPECT_EQ(flat.max_abs_discrepancy, 0.0);
}

TEST(RescaleBlowup, IdentityAndCurvatureScaling) {
  // cubic polynomial data: the stencils are exact, so the lattice curvature
  // scales exactly
  const Grid g(2, 33, 4.0);
  const auto a = sample_form<FormKind::connection>(g, 3, [](std::span<const double> x, int c, double* out) {
    const double u = x[0], v = x[1];
    if (c == 0) out[1] = 0.3 * v + 0.1 * u * v * v, out[5] = 0.2 * u * u - 0.05 * v * v * v;
    else out[2] = -0.4 * u + 0.07 * u * u * u, out[5] = 0.3 * u * v;
    out[3] = -out[1], out[6] = -out[2], out[7] = -out[5];
  });
  const auto same = rescale_blowup(a, 0.3, 1.0, 0.5);
  EXPECT_EQ(same.field.storage(), a.storage());
  EXPECT_DOUBLE_EQ(same.s, -0.2);
  // lambda = 2 on the grid: y grid points map to grid points 2y
  const auto r = rescale_blowup(a, 0.3, 2.0, 0.5);
  EXPECT_DOUBLE_EQ(r.s, -0.05);
  const auto f0 = pointwise_norm2(curvature(a)), f1 = pointwise_norm2(curvature(r.field));
  const std::size_t c = g.center_point();
  EXPECT_NEAR(std::sqrt(f1[c]), 4.0 * std::sqrt(f0[c]), 1e-8 * std::sqrt(f0[c]) + 1e-12);
}

TEST(TypeOne, SyntheticSeries) {
  std::vector<double> t, s1, s32;
  for (int i = 0; i < 100; ++i) {
    const double ti = 0.99 * i / 99.0;
    t.push_back(ti);
    s1.push_back(2.0 / (1.0 - ti));
    s32.push_back(std::pow(1.0 - ti, -1.5));
  }
  const auto a = type_one_detector(t, s1);
  EXPECT_TRUE(a.conclusive);
  EXPECT_TRUE(a.type_one);
  EXPECT_NEAR(a.blowup_time, 1.0, 1e-10);
  EXPECT_NEAR(a.slope, 1.0, 1e-8);
  EXPECT_NEAR(a.C_fit, 2.0, 1e-8);
  const auto b = type_one_detector(t, s32);
  EXPECT_TRUE(b.conclusive);
  EXPECT_FALSE(b.type_one);
  EXPECT_FALSE(type_one_detector({0, 1, 2}, {1, 2, 3}).conclusive);
}

TEST(TypeOne, FlatFlowIsInconclusive) {
  const Grid g(2, 13, 3.0);
  const auto tr = integrate(ConnectionField(g, 2), 0.05);
  EXPECT_FALSE(type_one_detector(tr).conclusive);
}

TEST(SelfSimilarity, FlatIsZeroGenericIsNot) {
  const Grid g(2, 17, 4.0);
  EXPECT_EQ(self_similarity_check(ConnectionField(g, 2), Center::origin(2, 1.0)).deviation, 0.0);
  const auto a = radial_gauge(BumpConnection(2, 3, 10, 0.8, 1.5).sample(g), std::vector<double>{0.0, 0.0}).a;
  EXPECT_GT(self_similarity_check(a, Center::origin(2, 1.0), {1.1}).deviation, 1e-2);
}

TEST(TracePersistence, RoundTrip) {
  const Grid g(2, 13, 3.0);
  FlowConfig cfg;
  cfg.centers = {Center::origin(2, 1.0)};
  cfg.entropy_stride = 3;
  const auto tr = integrate(BumpConnection(2, 2, 11).sample(g), 0.02, cfg);
  const auto dir = scratch("trace");
  save_trace(tr, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "diagnostics.csv"));
  const auto back = load_trace(dir);
  ASSERT_EQ(back.snapshots.size(), tr.snapshots.size());
  for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
    EXPECT_EQ(back.snapshots[i].storage(), tr.snapshots[i].storage());
    EXPECT_EQ(back.diagnostics[i].energy, tr.diagnostics[i].energy);
    EXPECT_EQ(back.diagnostics[i].phi, tr.diagnostics[i].phi);
    EXPECT_EQ(std::isnan(back.diagnostics[i].entropy), std::isnan(tr.diagnostics[i].entropy));
  }
  std::filesystem::remove_all(dir);
}
