#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "support.hpp"
#include "ymlab/gauge.hpp"
#include "ymlab/spectral.hpp"

using namespace ymlab;
using ymlab::testing::BumpConnection;

namespace {

SpectralConfig ungated(int k, bool deflate = false) {
  SpectralConfig cfg;
  cfg.k = k;
  cfg.deflate = deflate;
  cfg.require_gate = false;
  cfg.tolerance = 1e-6;
  return cfg;
}

/// Lowest eigenvalues of b(theta, eta) = <-L theta, eta>_G against <., .>_G,
/// assembled column by column on the basis dx^j E_ab at every point.
std::vector<double> dense_oracle(const ConnectionField& a, const Center& c, int count) {
  const Grid& g = a.grid();
  const int r = a.rank(), n = g.n();
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) pairs.push_back({i, j});
  const int np = static_cast<int>(pairs.size());
  const Eigen::Index N = static_cast<Eigen::Index>(g.points()) * n * np;
  const WeightedQuadrature q(g, c);
  Eigen::MatrixXd b(N, N);
  Eigen::VectorXd mdiag(N);
  for (Eigen::Index col = 0; col < N; ++col) {
    const std::size_t p = static_cast<std::size_t>(col / (n * np));
    const int j = static_cast<int>((col / np) % n), k = static_cast<int>(col % np);
    OneForm e(g, r);
    e.at(p, j)[pairs[k].first * r + pairs[k].second] = 1.0;
    e.at(p, j)[pairs[k].second * r + pairs[k].first] = -1.0;
    const OneForm le = L_apply(a, c, e);
    for (Eigen::Index row = 0; row < N; ++row) {
      const std::size_t pr = static_cast<std::size_t>(row / (n * np));
      const int jr = static_cast<int>((row / np) % n), kr = static_cast<int>(row % np);
      b(row, col) = -2.0 * q.weights[pr] * le.at(pr, jr)[pairs[kr].first * r + pairs[kr].second];
    }
    mdiag[col] = 2.0 * q.weights[p];
  }
  b = 0.5 * (b + b.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(b, Eigen::MatrixXd(mdiag.asDiagonal()));
  std::vector<double> out(es.eigenvalues().data(), es.eigenvalues().data() + count);
  return out;
}

OneForm bump_form(const Grid& g, int r, std::uint64_t seed) {
  return as_one_form(BumpConnection(g.n(), r, seed, 0.5, 1.0, 0.8).sample(g));
}

/// Removes the G-projection of v onto the fields in basis (orthonormal).
OneForm orthogonalize(OneForm v, const std::vector<OneForm>& basis, const WeightedQuadrature& q) {
  for (const auto& b : basis) v.axpy(-weighted_inner(v, b, q), b);
  v *= 1.0 / weighted_norm(v, q);
  return v;
}

}  // namespace

TEST(LowestSpectrum, MatchesDenseGeneralizedEigenproblem) {
  const Grid g(2, 9, 3.0);
  const auto a = BumpConnection(2, 3, 1, 0.8, 1.5).sample(g);
  const Center c({0.2, -0.1}, 1.0);
  const auto oracle = dense_oracle(a, c, 6);
  const auto res = lowest_spectrum(a, c, ungated(6));
  ASSERT_TRUE(res.converged);
  ASSERT_EQ(res.eigenvalues.size(), 6u);
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(res.eigenvalues[i], oracle[i], 1e-6 * std::max(1.0, std::abs(oracle[i])));
}

TEST(LowestSpectrum, SmallProblemsUseDenseRayleighRitz) {
  const Grid g(2, 9, 3.0);
  const auto a = BumpConnection(2, 2, 2, 0.8, 1.5).sample(g);
  const Center c = Center::origin(2);
  const auto oracle = dense_oracle(a, c, 40);
  const auto res = lowest_spectrum(a, c, ungated(40));
  ASSERT_TRUE(res.converged);
  for (int i = 0; i < 40; ++i) EXPECT_NEAR(res.eigenvalues[i], oracle[i], 1e-8 * std::max(1.0, std::abs(oracle[i])));
}

TEST(LowestSpectrum, FlatConnectionHasNonnegativeSpectrum) {
  const Grid g(2, 13, 3.0);
  const auto res = lowest_spectrum(ConnectionField(g, 2), Center::origin(2), ungated(8));
  ASSERT_TRUE(res.converged);
  for (double l : res.eigenvalues) EXPECT_GE(l, -1e-8);
  EXPECT_TRUE(res.deflated.empty());
}

TEST(LowestSpectrum, OrthonormalRayleighCoherentAndConverged) {
  const Grid g(2, 13, 3.0);
  const auto a = BumpConnection(2, 3, 3, 0.8, 1.5).sample(g);
  const Center c({0.1, 0.1}, 0.8);
  const auto cfg = ungated(8);
  const auto res = lowest_spectrum(a, c, cfg);
  ASSERT_TRUE(res.converged);
  const StabilityOperator L(a, c);
  for (std::size_t i = 0; i < res.eigenfields.size(); ++i) {
    for (std::size_t j = 0; j <= i; ++j)
      EXPECT_NEAR(L.inner(res.eigenfields[i], res.eigenfields[j]), i == j ? 1.0 : 0.0, 1e-8);
    const double rq = L.form(res.eigenfields[i], res.eigenfields[i]);
    EXPECT_NEAR(res.eigenvalues[i], rq, 1e-6);
    OneForm r = L.apply(res.eigenfields[i]);
    r.axpy(res.eigenvalues[i], res.eigenfields[i]);
    EXPECT_LE(weighted_norm(r, L.quadrature()), 2 * cfg.tolerance * std::max(1.0, std::abs(res.eigenvalues[i])));
    EXPECT_LE(res.residuals[i], cfg.tolerance * std::max(1.0, std::abs(res.eigenvalues[i])));
  }
  for (std::size_t i = 1; i < res.eigenvalues.size(); ++i) EXPECT_LE(res.eigenvalues[i - 1], res.eigenvalues[i]);
}

TEST(LowestSpectrum, DeflationIsOrthogonalAndInterlaces) {
  const Grid g(2, 13, 3.0);
  const auto a = BumpConnection(2, 3, 4, 0.8, 1.5).sample(g);
  const Center c({0.1, -0.2}, 0.8);
  const auto full = lowest_spectrum(a, c, ungated(12));
  const auto defl = lowest_spectrum(a, c, ungated(8, true));
  ASSERT_TRUE(full.converged);
  ASSERT_TRUE(defl.converged);
  ASSERT_EQ(defl.deflated.size(), 3u);
  const WeightedQuadrature q(g, c);
  for (const auto& f : defl.eigenfields)
    for (const auto& d : defl.deflated)
      EXPECT_LE(std::abs(weighted_inner(f, d.field, q)), 1e-8 * weighted_norm(d.field, q)) << d.label;
  // Cauchy interlacing for a compression by d = 3 directions
  for (int i = 0; i < 8; ++i) {
    EXPECT_GE(defl.eigenvalues[i], full.eigenvalues[i] - 1e-6);
    EXPECT_LE(defl.eigenvalues[i], full.eigenvalues[i + 3] + 1e-6);
  }
  const auto j = nlohmann::json(spectrum_json(defl));
  EXPECT_EQ(j["deflation_labels"].size(), 3u);
  EXPECT_EQ(j["eigenvalues"].size(), 8u);
  EXPECT_TRUE(j["verdict"].is_null());
}

TEST(LowestSpectrum, InvariantUnderConstantGauge) {
  const Grid g(2, 13, 3.0);
  const auto a = BumpConnection(2, 3, 5, 0.8, 1.5).sample(g);
  const Center c({0.0, 0.1}, 0.9);
  const auto h = GaugeTransform::exponential(g, 3, [](std::span<const double>, double* out) {
    out[1] = 0.7, out[2] = -0.3, out[5] = 1.1;
  });
  const auto s1 = lowest_spectrum(a, c, ungated(6));
  const auto s2 = lowest_spectrum(gauge_apply(h, a), c, ungated(6));
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(s1.eigenvalues[i], s2.eigenvalues[i], 1e-5);
}

TEST(LowestSpectrum, RejectsBadCountsAndNonSolitons) {
  const Grid g(2, 9, 3.0);
  const auto a = BumpConnection(2, 2, 6, 0.8, 1.5).sample(g);
  SpectralConfig cfg;
  EXPECT_THROW(lowest_spectrum(a, Center::origin(2), cfg), NotNearSoliton);
  cfg.k = 41;
  cfg.require_gate = false;
  EXPECT_THROW(lowest_spectrum(a, Center::origin(2), cfg), std::invalid_argument);
  SpectralConfig small;
  small.k = 3;
  EXPECT_NO_THROW(lowest_spectrum(ConnectionField(g, 2), Center::origin(2), small));
}

TEST(ClusterEigenvalues, MergesSmallGaps) {
  const auto cl = cluster_eigenvalues({-1.0, -0.501, -0.5, -0.499, 0.2, 0.3}, 0.01);
  ASSERT_EQ(cl.size(), 4u);
  EXPECT_EQ(cl[1].size(), 3u);
}

TEST(StabilityVerdict, DirectDefinitionCases) {
  const Grid g(2, 9, 3.0);
  const WeightedQuadrature q(g, Center::origin(2));
  SpectralResult s;
  s.converged = true;
  s.eigenvalues = {0.0, 0.1, 0.4, 1.0};
  s.eigenfields.assign(4, OneForm(g, 2));
  VerdictOptions opt;
  auto v = classify_spectrum(s, OneForm(g, 2), {}, q, opt);
  EXPECT_TRUE(v.f_stable);
  EXPECT_NEAR(v.tolerance_used, 5e-3, 1e-15);

  s.eigenvalues = {-0.3, 0.1, 0.4, 1.0};
  v = classify_spectrum(s, OneForm(g, 2), {}, q, opt);
  EXPECT_FALSE(v.f_stable);
  EXPECT_FALSE(v.indeterminate);
  ASSERT_EQ(v.negative_spectrum.size(), 1u);
  EXPECT_EQ(v.negative_spectrum[0], -0.3);

  s.eigenvalues = {-0.9, -0.8, -0.7, -0.6};
  v = classify_spectrum(s, OneForm(g, 2), {}, q, opt);
  EXPECT_TRUE(v.indeterminate);
  EXPECT_FALSE(v.f_stable);
}

TEST(StabilityVerdict, ForcedEigenfieldsAlignmentAndExcess) {
  const Grid g(2, 9, 3.0);
  const WeightedQuadrature q(g, Center::origin(2));
  std::vector<OneForm> basis;
  for (int s = 0; s < 5; ++s) basis.push_back(orthogonalize(bump_form(g, 3, 70 + s), basis, q));
  const OneForm& j = basis[0];
  const std::vector<OneForm> ivf = {basis[1], basis[2]};
  SpectralResult s;
  s.converged = true;
  s.eigenvalues = {-1.0, -0.5, -0.5, 0.3, 0.7};
  s.eigenfields = basis;
  auto v = classify_spectrum(s, j, ivf, q);
  EXPECT_TRUE(v.f_stable) << v.note;
  EXPECT_NEAR(v.j_alignment, 1.0, 1e-12);
  EXPECT_NEAR(v.ivf_angle, 0.0, 1e-6);

  // a third field in the -1/2 cluster
  s.eigenvalues = {-1.0, -0.5, -0.5, -0.5, 0.7};
  v = classify_spectrum(s, j, ivf, q);
  EXPECT_FALSE(v.f_stable);
  EXPECT_EQ(v.e_minus_half_dim_excess, 1);

  // J misaligned with the eigenfield at -1
  s.eigenvalues = {-1.0, -0.5, -0.5, 0.3, 0.7};
  std::swap(s.eigenfields[0], s.eigenfields[3]);
  v = classify_spectrum(s, j, ivf, q);
  EXPECT_TRUE(v.indeterminate);
  EXPECT_LT(v.j_alignment, 0.99);
  EXPECT_FALSE(verdict_json(v)["note"].get<std::string>().empty());
}

TEST(OptimalQV, ProjectionExamples) {
  const Grid g(2, 13, 3.0);
  const auto a = BumpConnection(2, 3, 8, 0.8, 1.5).sample(g);
  const Center c({0.1, 0.0}, 1.0);
  const auto forced = forced_eigenfields(a);
  auto qv = optimal_qV(a, c, forced[0].field);
  EXPECT_NEAR(qv.q, -1.0, 1e-10);
  EXPECT_NEAR(qv.V[0], 0.0, 1e-10);
  EXPECT_NEAR(qv.V[1], 0.0, 1e-10);
  qv = optimal_qV(a, c, forced[1].field);
  EXPECT_NEAR(qv.q, 0.0, 1e-10);
  EXPECT_NEAR(qv.V[0], -1.0, 1e-10);
  EXPECT_NEAR(qv.V[1], 0.0, 1e-10);

  const WeightedQuadrature q(g, c);
  std::vector<OneForm> ortho;
  for (const auto& f : forced) ortho.push_back(orthogonalize(f.field, ortho, q));
  const OneForm theta = orthogonalize(bump_form(g, 3, 9), ortho, q);
  qv = optimal_qV(a, c, theta);
  EXPECT_NEAR(qv.q, 0.0, 1e-9);
  EXPECT_NEAR(qv.V[0], 0.0, 1e-9);
  EXPECT_NEAR(qv.V[1], 0.0, 1e-9);

  EXPECT_THROW(optimal_qV(ConnectionField(g, 3), c, theta), DomainError);
}

TEST(StabilityVerdict, FlatConnectionIsStable) {
  const Grid g(2, 11, 3.0);
  SpectralConfig cfg;
  cfg.k = 6;
  const auto v = f_stability_verdict(ConnectionField(g, 2), Center::origin(2), {}, cfg);
  EXPECT_TRUE(v.f_stable) << v.note;
  EXPECT_TRUE(v.negative_spectrum.empty());
}
