#pragma once

/// Gauge transformations h: grid -> SO(r), their action on connections and
/// forms, multilinear field interpolation and the radial (exponential) gauge.

#include <cmath>
#include <vector>

#include "ymlab/fields.hpp"

namespace ymlab {

class GaugeTransform {
 public:
  GaugeTransform() = default;

  static GaugeTransform identity(const Grid& g, int r) {
    GaugeTransform t(g, r);
    for (std::size_t p = 0; p < g.points(); ++p)
      for (int i = 0; i < r; ++i) t.at(p)[i * r + i] = 1.0;
    return t;
  }

  /// h(x) = exp(xi(x)) for an so(r)-valued function xi(x, out_block).
  template <class Fn>
  static GaugeTransform exponential(const Grid& g, int r, Fn&& xi) {
    GaugeTransform t(g, r);
    std::vector<double> x(g.n()), gen(static_cast<std::size_t>(r) * r);
    for (std::size_t p = 0; p < g.points(); ++p) {
      g.coords(p, x);
      std::fill(gen.begin(), gen.end(), 0.0);
      xi(std::span<const double>(x), gen.data());
      mat::antisymmetrize(r, gen.data());
      const auto e = mat::expm(r, gen);
      std::copy(e.begin(), e.end(), t.at(p));
    }
    return t;
  }

  /// Wraps raw per-point matrices; throws unless each is special orthogonal.
  static GaugeTransform from_matrices(const Grid& g, int r, std::vector<double> data) {
    GaugeTransform t(g, r);
    if (data.size() != t.data_.size()) throw DimensionError("gauge data size mismatch");
    t.data_ = std::move(data);
    t.validate();
    return t;
  }

  const Grid& grid() const { return grid_; }
  int rank() const { return r_; }
  double* at(std::size_t p) { return data_.data() + p * r_ * r_; }
  const double* at(std::size_t p) const { return data_.data() + p * r_ * r_; }
  std::span<const double> data() const { return data_; }

  /// max_x |h^T h - I|_max
  double orthogonality_defect() const {
    std::vector<double> hth(r_ * r_);
    double d = 0.0;
    for (std::size_t p = 0; p < grid_.points(); ++p) {
      mat::mul_tn(r_, at(p), at(p), hth.data());
      for (int i = 0; i < r_; ++i)
        for (int j = 0; j < r_; ++j) d = std::max(d, std::abs(hth[i * r_ + j] - (i == j ? 1.0 : 0.0)));
    }
    return d;
  }

  void validate() const {
    if (orthogonality_defect() > 1e-10) throw DomainError("gauge transform is not orthogonal");
    for (std::size_t p = 0; p < grid_.points(); ++p)
      if (mat::det(r_, std::span<const double>(at(p), r_ * r_)) < 0.0)
        throw DomainError("gauge transform has determinant -1");
  }

 private:
  GaugeTransform(const Grid& g, int r) : grid_(g), r_(r), data_(g.points() * r * r, 0.0) {
    if (r < 1) throw DimensionError("rank must be positive");
  }

  Grid grid_;
  int r_ = 0;
  std::vector<double> data_;
};

/// (h^*A)_i = h^{-1} d_i h + h^{-1} A_i h, with h^{-1} = h^T.
inline ConnectionField gauge_apply(const GaugeTransform& h, const ConnectionField& a) {
  if (!(h.grid() == a.grid()) || h.rank() != a.rank()) throw DimensionError("gauge grid or rank mismatch");
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank(), rr = r * r;
  // Store h as a one-component form so the derivative kernel applies to it.
  OneForm hf(g, r);
  for (std::size_t p = 0; p < g.points(); ++p) std::copy(h.at(p), h.at(p) + rr, hf.at(p, 0));
  ConnectionField out(g, r);
  for (int i = 0; i < n; ++i) {
    OneForm dh(g, r);
    detail::partial_acc(hf, 0, dh, 0, detail::AxisStencils(g, i), 1.0);
    parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
      std::vector<double> t1(rr), t2(rr);
      for (std::size_t p = b; p < e; ++p) {
        double* o = out.at(p, i);
        mat::mul_tn(r, h.at(p), dh.at(p, 0), o);
        mat::mul_tn(r, h.at(p), a.at(p, i), t1.data());
        mat::mul(r, t1.data(), h.at(p), t2.data());
        for (int q = 0; q < rr; ++q) o[q] += t2[q];
      }
    });
  }
  out.antisymmetrize();
  return out;
}

/// Pointwise conjugation w -> h^{-1} w h of any g-valued form.
template <FormKind K>
LatticeForm<K> conjugate(const GaugeTransform& h, const LatticeForm<K>& w) {
  if (!(h.grid() == w.grid()) || h.rank() != w.rank()) throw DimensionError("gauge grid or rank mismatch");
  const int r = w.rank(), rr = r * r;
  LatticeForm<K> out(w.grid(), r);
  std::vector<double> t(rr);
  for (std::size_t p = 0; p < w.grid().points(); ++p)
    for (int c = 0; c < w.components(); ++c) {
      mat::mul_tn(r, h.at(p), w.at(p, c), t.data());
      mat::mul(r, t.data(), h.at(p), out.at(p, c));
    }
  out.antisymmetrize();
  return out;
}

/// Multilinear interpolation of component c at x (clamped to the box),
/// written to out (r*r entries).
template <FormKind K>
void interpolate(const LatticeForm<K>& f, int c, std::span<const double> x, double* out) {
  const Grid& g = f.grid();
  const int n = g.n(), m = g.m(), blk = f.block();
  const double h = g.h(), R = g.R();
  std::array<int, 6> cell{};
  std::array<double, 6> frac{};
  for (int k = 0; k < n; ++k) {
    const double u = (std::clamp(x[k], -R, R) + R) / h;
    int i = static_cast<int>(std::floor(u));
    i = std::clamp(i, 0, m - 2);
    cell[k] = i;
    frac[k] = std::clamp(u - i, 0.0, 1.0);
  }
  std::fill(out, out + blk, 0.0);
  for (int corner = 0; corner < (1 << n); ++corner) {
    double w = 1.0;
    std::size_t p = 0;
    for (int k = 0; k < n; ++k) {
      const int bit = (corner >> k) & 1;
      w *= bit ? frac[k] : 1.0 - frac[k];
      p = p * m + cell[k] + bit;
    }
    if (w == 0.0) continue;
    const double* v = f.at(p, c);
    for (int q = 0; q < blk; ++q) out[q] += w * v[q];
  }
}

/// Tensor-product cubic Lagrange interpolation (4 nodes per axis) of
/// component c at x, clamped to the box. Exact on polynomials of degree
/// <= 3 in each variable.
template <FormKind K>
void interpolate_cubic(const LatticeForm<K>& f, int c, std::span<const double> x, double* out) {
  const Grid& g = f.grid();
  const int n = g.n(), m = g.m(), blk = f.block();
  const double h = g.h(), R = g.R();
  std::array<int, 6> base{};
  std::array<std::array<double, 4>, 6> w{};
  for (int k = 0; k < n; ++k) {
    const double u = (std::clamp(x[k], -R, R) + R) / h;
    const int i = std::clamp(static_cast<int>(std::floor(u)), 1, m - 3);
    base[k] = i - 1;
    const double t = u - i;  // nodes at -1, 0, 1, 2
    w[k] = {-t * (t - 1) * (t - 2) / 6.0, (t + 1) * (t - 1) * (t - 2) / 2.0, -(t + 1) * t * (t - 2) / 2.0,
            (t + 1) * t * (t - 1) / 6.0};
  }
  std::fill(out, out + blk, 0.0);
  std::array<int, 6> digit{};
  const int total = 1 << (2 * n);
  for (int corner = 0; corner < total; ++corner) {
    double wt = 1.0;
    std::size_t p = 0;
    for (int k = 0; k < n; ++k) {
      digit[k] = (corner >> (2 * k)) & 3;
      wt *= w[k][digit[k]];
      p = p * m + base[k] + digit[k];
    }
    if (wt == 0.0) continue;
    const double* v = f.at(p, c);
    for (int q = 0; q < blk; ++q) out[q] += wt * v[q];
  }
}

/// B(x) = scale * A(map(x)) at every point of the target grid, with A
/// evaluated by cubic interpolation. map writes the source point for a
/// target point.
template <class Map>
ConnectionField resample(const ConnectionField& a, const Grid& target, double scale, Map&& map) {
  const int n = target.n();
  if (n != a.grid().n()) throw DimensionError("resampling target has a different dimension");
  ConnectionField out(target, a.rank());
  parallel_for(target.points(), [&](std::size_t b, std::size_t e) {
    std::vector<double> x(n), y(n);
    for (std::size_t p = b; p < e; ++p) {
      target.coords(p, x);
      map(std::span<const double>(x), std::span<double>(y));
      for (int i = 0; i < n; ++i) {
        double* o = out.at(p, i);
        interpolate_cubic(a, i, y, o);
        for (int q = 0; q < out.block(); ++q) o[q] *= scale;
      }
    }
  });
  out.antisymmetrize();
  return out;
}

/// Translated connection A~_i(x) = A_i(x + x1) on the same grid. Shifts by
/// whole grid steps are exact away from the boundary.
inline ConnectionField translate(const ConnectionField& a, std::span<const double> x1) {
  if (static_cast<int>(x1.size()) != a.grid().n()) throw DimensionError("shift dimension does not match grid");
  return resample(a, a.grid(), 1.0, [&](std::span<const double> x, std::span<double> y) {
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] + x1[k];
  });
}

/// Rescaled connection A^c_i(x) = c^{-1} A_i(x / c) sampled on the target
/// grid. On the scaled grid (same m, half-width c R) every sample lands on a
/// source node, so the result is exact.
inline ConnectionField rescale(const ConnectionField& a, double c, const Grid& target) {
  if (!(c > 0.0)) throw DomainError("rescaling factor must be positive");
  return resample(a, target, 1.0 / c, [&](std::span<const double> x, std::span<double> y) {
    for (std::size_t k = 0; k < x.size(); ++k) y[k] = x[k] / c;
  });
}

inline ConnectionField rescale(const ConnectionField& a, double c) {
  const Grid& g = a.grid();
  return rescale(a, c, Grid(g.n(), g.m(), c * g.R()));
}

namespace detail {
/// Modified Gram-Schmidt on the columns of a near-orthogonal matrix.
inline void orthonormalize_columns(int r, double* a) {
  for (int j = 0; j < r; ++j) {
    for (int k = 0; k < j; ++k) {
      double d = 0;
      for (int i = 0; i < r; ++i) d += a[i * r + k] * a[i * r + j];
      for (int i = 0; i < r; ++i) a[i * r + j] -= d * a[i * r + k];
    }
    double nrm = 0;
    for (int i = 0; i < r; ++i) nrm += a[i * r + j] * a[i * r + j];
    nrm = std::sqrt(nrm);
    for (int i = 0; i < r; ++i) a[i * r + j] /= nrm;
  }
}
}  // namespace detail

/// Parallel transport from x0 along straight rays: for each grid point x,
/// solves dh/dtau = -(x - x0)^p A_p(x0 + tau (x - x0)) h on [0, 1] with
/// h(0) = I by classical RK4 with a common step count, sampling A by
/// multilinear interpolation.
inline GaugeTransform radial_transport(const ConnectionField& a, std::span<const double> x0) {
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank(), rr = r * r;
  if (static_cast<int>(x0.size()) != n) throw DimensionError("center dimension does not match grid");
  if (!g.contains(x0)) throw DomainError("radial gauge center lies outside the grid box");
  GaugeTransform out = GaugeTransform::identity(g, r);
  // One step count for every ray: the tau samples then only depend on the
  // direction, so the transport inherits every symmetry of A exactly.
  double far = 0.0;
  for (int k = 0; k < n; ++k) far += std::pow(g.R() + std::abs(x0[k]), 2);
  const int steps = std::max(8, static_cast<int>(std::ceil(2.0 * std::sqrt(far) / g.h())));
  const double dt = 1.0 / steps;
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    std::vector<double> x(n), y(n), v(n), av(rr), blk(rr), hk(rr), k1(rr), k2(rr), k3(rr), k4(rr), tmp(rr);
    auto rhs = [&](double tau, const double* hcur, double* dst) {
      for (int k = 0; k < n; ++k) y[k] = x0[k] + tau * v[k];
      std::fill(av.begin(), av.end(), 0.0);
      for (int p = 0; p < n; ++p) {
        if (v[p] == 0.0) continue;
        interpolate(a, p, y, blk.data());
        for (int q = 0; q < rr; ++q) av[q] += v[p] * blk[q];
      }
      mat::mul(r, av.data(), hcur, dst);
      for (int q = 0; q < rr; ++q) dst[q] = -dst[q];
    };
    for (std::size_t p = b; p < e; ++p) {
      g.coords(p, x);
      double len = 0.0;
      for (int k = 0; k < n; ++k) {
        v[k] = x[k] - x0[k];
        len += v[k] * v[k];
      }
      len = std::sqrt(len);
      double* h = out.at(p);
      if (len == 0.0) continue;
      for (int s = 0; s < steps; ++s) {
        const double t = s * dt;
        std::copy(h, h + rr, hk.begin());
        rhs(t, hk.data(), k1.data());
        for (int q = 0; q < rr; ++q) tmp[q] = hk[q] + 0.5 * dt * k1[q];
        rhs(t + 0.5 * dt, tmp.data(), k2.data());
        for (int q = 0; q < rr; ++q) tmp[q] = hk[q] + 0.5 * dt * k2[q];
        rhs(t + 0.5 * dt, tmp.data(), k3.data());
        for (int q = 0; q < rr; ++q) tmp[q] = hk[q] + dt * k3[q];
        rhs(t + dt, tmp.data(), k4.data());
        for (int q = 0; q < rr; ++q) h[q] = hk[q] + dt / 6.0 * (k1[q] + 2 * k2[q] + 2 * k3[q] + k4[q]);
      }
      detail::orthonormalize_columns(r, h);
    }
  });
  return out;
}

struct RadialGaugeResult {
  GaugeTransform h;
  ConnectionField a;
  /// max |(x - x0)^p (h^*A)_p| / (1 + |x - x0|) over points where the
  /// fourth-order stencil applies (index distance >= 2 from the boundary)
  double residual = 0.0;
  /// the same maximum over all points, including the one-sided layers
  double residual_all = 0.0;
};

/// max over points of |(x - x0)^p A_p(x)| / (1 + |x - x0|), optionally
/// restricted to points at index distance >= margin from the boundary.
inline double radial_residual(const ConnectionField& a, std::span<const double> x0, int margin = 0) {
  const Grid& g = a.grid();
  const int n = g.n(), rr = a.block();
  std::vector<double> x(n), s(rr);
  double worst = 0.0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    if (g.boundary_distance(p) < margin) continue;
    g.coords(p, x);
    std::fill(s.begin(), s.end(), 0.0);
    double len = 0.0;
    for (int k = 0; k < n; ++k) {
      const double d = x[k] - x0[k];
      len += d * d;
      for (int q = 0; q < rr; ++q) s[q] += d * a.at(p, k)[q];
    }
    double nrm = 0.0;
    for (double v : s) nrm += v * v;
    worst = std::max(worst, std::sqrt(nrm) / (1.0 + std::sqrt(len)));
  }
  return worst;
}

/// Radial (exponential) gauge centered at x0: (x - x0)^p (h^*A)_p = 0.
inline RadialGaugeResult radial_gauge(const ConnectionField& a, std::span<const double> x0) {
  GaugeTransform h = radial_transport(a, x0);
  ConnectionField ga = gauge_apply(h, a);
  const double res = radial_residual(ga, x0, 2);
  const double res_all = radial_residual(ga, x0, 0);
  return {std::move(h), std::move(ga), res, res_all};
}

}  // namespace ymlab
