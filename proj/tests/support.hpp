#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ymlab/algebra.hpp"
#include "ymlab/fields.hpp"

namespace ymlab::testing {

/// Uniform double in [-1, 1) from raw 64-bit draws, independent of the
/// standard library's distribution implementations.
inline double uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

inline AlgebraElement random_element(int r, std::mt19937_64& rng, double scale = 1.0) {
  std::vector<double> e(static_cast<std::size_t>(r) * r, 0.0);
  for (int i = 0; i < r; ++i)
    for (int j = i + 1; j < r; ++j) {
      const double v = scale * uniform(rng);
      e[i * r + j] = v;
      e[j * r + i] = -v;
    }
  return AlgebraElement::from_entries(r, std::move(e));
}

/// Naive triple-loop product used as an oracle for the kernels.
inline std::vector<double> naive_product(int r, const double* b, const double* c) {
  std::vector<double> out(static_cast<std::size_t>(r) * r, 0.0);
  for (int i = 0; i < r; ++i)
    for (int k = 0; k < r; ++k)
      for (int j = 0; j < r; ++j) out[i * r + j] += b[i * r + k] * c[k * r + j];
  return out;
}

/// Least-squares slope of log(err) against log(h).
inline double convergence_slope(const std::vector<double>& hs, const std::vector<double>& errs) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(hs.size());
  for (std::size_t k = 0; k < hs.size(); ++k) {
    const double x = std::log(hs[k]), y = std::log(errs[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}


/// Smooth connection A_i(x) = sum_a c_ia exp(-|x - b_ia|^2 / s) T_a with
/// closed-form derivatives, used as an analytic oracle for the stencils.
struct BumpConnection {
  int n = 0, r = 0;
  double s = 1.0;
  std::vector<AlgebraElement> gens;               // T_a
  std::vector<std::vector<double>> coef;          // [i][a]
  std::vector<std::vector<std::vector<double>>> ctr;  // [i][a][k]

  BumpConnection(int n_, int r_, std::uint64_t seed, double amplitude = 0.6, double width = 1.5, double spread = 0.8)
      : n(n_), r(r_), s(width) {
    std::mt19937_64 rng(seed);
    gens = algebra_basis(r);
    coef.assign(n, std::vector<double>(gens.size()));
    ctr.assign(n, std::vector<std::vector<double>>(gens.size(), std::vector<double>(n)));
    for (int i = 0; i < n; ++i)
      for (std::size_t a = 0; a < gens.size(); ++a) {
        coef[i][a] = amplitude * uniform(rng);
        for (int k = 0; k < n; ++k) ctr[i][a][k] = spread * uniform(rng);
      }
  }

  double bump(int i, std::size_t a, std::span<const double> x) const {
    double d2 = 0;
    for (int k = 0; k < n; ++k) d2 += (x[k] - ctr[i][a][k]) * (x[k] - ctr[i][a][k]);
    return coef[i][a] * std::exp(-d2 / s);
  }
  // d_k of bump, d_k d_l of bump
  double dbump(int i, std::size_t a, int k, std::span<const double> x) const {
    return -2.0 * (x[k] - ctr[i][a][k]) / s * bump(i, a, x);
  }
  double ddbump(int i, std::size_t a, int k, int l, std::span<const double> x) const {
    const double yk = x[k] - ctr[i][a][k], yl = x[l] - ctr[i][a][l];
    return (4.0 * yk * yl / (s * s) - (k == l ? 2.0 / s : 0.0)) * bump(i, a, x);
  }

  std::vector<double> combine(const std::vector<double>& w) const {
    std::vector<double> out(r * r, 0.0);
    for (std::size_t a = 0; a < gens.size(); ++a)
      for (int q = 0; q < r * r; ++q) out[q] += w[a] * gens[a].entries()[q];
    return out;
  }
  std::vector<double> A(int i, std::span<const double> x) const {
    std::vector<double> w(gens.size());
    for (std::size_t a = 0; a < gens.size(); ++a) w[a] = bump(i, a, x);
    return combine(w);
  }
  std::vector<double> dA(int i, int k, std::span<const double> x) const {
    std::vector<double> w(gens.size());
    for (std::size_t a = 0; a < gens.size(); ++a) w[a] = dbump(i, a, k, x);
    return combine(w);
  }
  std::vector<double> ddA(int i, int k, int l, std::span<const double> x) const {
    std::vector<double> w(gens.size());
    for (std::size_t a = 0; a < gens.size(); ++a) w[a] = ddbump(i, a, k, l, x);
    return combine(w);
  }
  static std::vector<double> br(int r, const std::vector<double>& b, const std::vector<double>& c) {
    std::vector<double> out(r * r, 0.0);
    mat::bracket_acc(r, b.data(), c.data(), out.data());
    return out;
  }
  std::vector<double> F(int i, int j, std::span<const double> x) const {
    auto out = br(r, A(i, x), A(j, x));
    const auto a = dA(j, i, x), b = dA(i, j, x);
    for (int q = 0; q < r * r; ++q) out[q] += a[q] - b[q];
    return out;
  }
  /// d_p F_ij
  std::vector<double> dF(int p, int i, int j, std::span<const double> x) const {
    auto out = br(r, dA(i, p, x), A(j, x));
    const auto t = br(r, A(i, x), dA(j, p, x));
    const auto a = ddA(j, i, p, x), b = ddA(i, j, p, x);
    for (int q = 0; q < r * r; ++q) out[q] += t[q] + a[q] - b[q];
    return out;
  }
  /// J_j = sum_p d_p F_pj + [A_p, F_pj]
  std::vector<double> J(int j, std::span<const double> x) const {
    std::vector<double> out(r * r, 0.0);
    for (int p = 0; p < n; ++p) {
      const auto d = dF(p, p, j, x);
      const auto b = br(r, A(p, x), F(p, j, x));
      for (int q = 0; q < r * r; ++q) out[q] += d[q] + b[q];
    }
    return out;
  }

  ConnectionField sample(const Grid& g) const {
    return sample_form<FormKind::connection>(g, r, [&](std::span<const double> x, int c, double* out) {
      const auto v = A(c, x);
      std::copy(v.begin(), v.end(), out);
    });
  }
};

/// Max over points at index distance >= margin from the boundary of the
/// Frobenius norm of (lattice block - analytic block).
template <FormKind K, class Fn>
double max_block_error(const LatticeForm<K>& f, int margin, Fn&& analytic) {
  const Grid& g = f.grid();
  std::vector<double> x(g.n());
  double worst = 0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    if (g.boundary_distance(p) < margin) continue;
    g.coords(p, x);
    for (int c = 0; c < f.components(); ++c) {
      const std::vector<double> ref = analytic(std::span<const double>(x), c);
      double e = 0;
      for (int q = 0; q < f.block(); ++q) e += (f.at(p, c)[q] - ref[q]) * (f.at(p, c)[q] - ref[q]);
      worst = std::max(worst, std::sqrt(e));
    }
  }
  return worst;
}

}  // namespace ymlab::testing
