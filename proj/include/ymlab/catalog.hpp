#pragma once

/// Catalog of connections used as inputs and solver seeds.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "ymlab/fields.hpp"
#include "ymlab/gauge.hpp"

namespace ymlab::catalog {

inline ConnectionField flat(const Grid& g, int r) { return ConnectionField(g, r); }

/// A_j = 1/2 x^i B_ij E_ab, so F_ij = B_ij E_ab for antisymmetric B (n x n,
/// row-major) and generator E_ab.
inline ConnectionField abelian_linear(const Grid& g, int r, std::span<const double> b, int ga = 0, int gb = 1) {
  const int n = g.n();
  if (static_cast<int>(b.size()) != n * n) throw DimensionError("B must be n x n");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (b[i * n + j] != -b[j * n + i]) throw std::invalid_argument("B must be antisymmetric");
  if (ga < 0 || gb < 0 || ga >= r || gb >= r || ga == gb) throw DimensionError("invalid generator index");
  return sample_form<FormKind::connection>(g, r, [&](std::span<const double> x, int j, double* out) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) v += 0.5 * x[i] * b[i * n + j];
    out[ga * r + gb] = v;
    out[gb * r + ga] = -v;
  });
}

struct SmoothSpec {
  std::uint64_t seed = 1;
  double amplitude = 0.5;
  double envelope = 1.0;  ///< Gaussian width squared s in exp(-|x - b|^2 / s)
  double spread = 0.5;    ///< bump centers drawn uniformly in [-spread, spread]^n
  int bumps = 1;          ///< bumps per component and generator
  bool abelian = false;   ///< only the generator E_12
};

/// A_i = sum c exp(-|x - b|^2 / s) T over random coefficients c, centers b and
/// generators T, drawn from the seed.
inline ConnectionField random_smooth(const Grid& g, int r, const SmoothSpec& spec = {}) {
  const int n = g.n();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  struct Bump {
    int comp, a, b;
    double c;
    std::vector<double> center;
  };
  std::vector<Bump> bumps;
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b) {
        if (spec.abelian && !(a == 0 && b == 1)) continue;
        for (int k = 0; k < spec.bumps; ++k) {
          Bump bp{i, a, b, spec.amplitude * u(rng), std::vector<double>(n)};
          for (double& v : bp.center) v = spec.spread * u(rng);
          bumps.push_back(std::move(bp));
        }
      }
  return sample_form<FormKind::connection>(g, r, [&](std::span<const double> x, int comp, double* out) {
    for (const auto& bp : bumps) {
      if (bp.comp != comp) continue;
      double d2 = 0.0;
      for (int k = 0; k < n; ++k) d2 += (x[k] - bp.center[k]) * (x[k] - bp.center[k]);
      const double v = bp.c * std::exp(-d2 / spec.envelope);
      out[bp.a * r + bp.b] += v;
      out[bp.b * r + bp.a] -= v;
    }
  });
}

/// h^{-1} dh for h = exp(xi) with xi a smooth random so(r)-valued bump.
inline ConnectionField pure_gauge(const Grid& g, int r, std::uint64_t seed = 1, double amplitude = 0.5,
                                  double envelope = 1.0) {
  const int n = g.n();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> coef(static_cast<std::size_t>(r) * r, 0.0);
  for (int a = 0; a < r; ++a)
    for (int b = a + 1; b < r; ++b) {
      coef[a * r + b] = amplitude * u(rng);
      coef[b * r + a] = -coef[a * r + b];
    }
  std::vector<double> center(n);
  for (double& v : center) v = 0.3 * u(rng);
  const auto h = GaugeTransform::exponential(g, r, [&](std::span<const double> x, double* out) {
    double d2 = 0.0;
    for (int k = 0; k < n; ++k) d2 += (x[k] - center[k]) * (x[k] - center[k]);
    const double e = std::exp(-d2 / envelope);
    for (std::size_t k = 0; k < coef.size(); ++k) out[k] = coef[k] * e;
  });
  return gauge_apply(h, ConnectionField(g, r));
}

/// Extension of an (n-1)-dimensional connection to n dimensions, constant
/// along the inserted axis with zero component there. Same m and R.
inline ConnectionField descended(const ConnectionField& inner, int axis) {
  const Grid& gi = inner.grid();
  const int n = gi.n() + 1, m = gi.m();
  if (axis < 0 || axis >= n) throw DimensionError("descent axis out of range");
  const Grid g(n, m, gi.R());
  const int r = inner.rank();
  ConnectionField out(g, r);
  for (std::size_t p = 0; p < g.points(); ++p) {
    std::size_t q = 0;
    for (int k = 0; k < n; ++k)
      if (k != axis) q = q * m + static_cast<std::size_t>(g.index(p, k));
    for (int j = 0, ji = 0; j < n; ++j) {
      if (j == axis) continue;
      std::copy(inner.at(q, ji), inner.at(q, ji) + out.block(), out.at(p, j));
      ++ji;
    }
  }
  return out;
}

}  // namespace ymlab::catalog
