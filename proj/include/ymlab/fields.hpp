#pragma once

/// Lattice discretization of connections and g-valued forms on the box
/// [-R, R]^n, together with the covariant differential operators acting on them.
///
/// Storage is point-major (lexicographic grid index, last axis fastest), then
/// form component, then matrix row-major. Two-form components are the pairs
/// (i, j), i < j, in lexicographic order; F_ji = -F_ij is implied.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ymlab/algebra.hpp"
#include "ymlab/parallel.hpp"

namespace ymlab {

class Grid {
 public:
  Grid() = default;
  Grid(int n, int m, double R) : n_(n), m_(m), R_(R) {
    if (n < 2 || n > 6) throw DimensionError("grid dimension must lie in [2, 6]");
    if (m < 9 || m % 2 == 0) throw DimensionError("points per axis must be odd and at least 9");
    if (!(R > 0.0) || !std::isfinite(R)) throw DomainError("grid half-width must be positive");
    points_ = 1;
    for (int k = 0; k < n; ++k) points_ *= static_cast<std::size_t>(m);
  }

  int n() const { return n_; }
  int m() const { return m_; }
  double R() const { return R_; }
  double h() const { return 2.0 * R_ / (m_ - 1); }
  std::size_t points() const { return points_; }

  std::size_t stride(int axis) const {
    std::size_t s = 1;
    for (int k = axis + 1; k < n_; ++k) s *= static_cast<std::size_t>(m_);
    return s;
  }
  int index(std::size_t p, int axis) const { return static_cast<int>((p / stride(axis)) % m_); }
  double coordinate(int i) const { return -R_ + i * h(); }
  double coord(std::size_t p, int axis) const { return coordinate(index(p, axis)); }
  void coords(std::size_t p, std::span<double> x) const {
    for (int k = n_ - 1; k >= 0; --k) {
      x[k] = coordinate(static_cast<int>(p % m_));
      p /= m_;
    }
  }
  std::size_t center_point() const {
    std::size_t p = 0;
    for (int k = 0; k < n_; ++k) p = p * m_ + (m_ - 1) / 2;
    return p;
  }
  /// Smallest distance, in index units, from the point to the box boundary.
  int boundary_distance(std::size_t p) const {
    int d = m_;
    for (int k = n_ - 1; k >= 0; --k) {
      const int i = static_cast<int>(p % m_);
      d = std::min({d, i, m_ - 1 - i});
      p /= m_;
    }
    return d;
  }
  bool contains(std::span<const double> x) const {
    for (int k = 0; k < n_; ++k)
      if (!(std::abs(x[k]) <= R_)) return false;
    return true;
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.n_ == b.n_ && a.m_ == b.m_ && a.R_ == b.R_;
  }

 private:
  int n_ = 0;
  int m_ = 0;
  double R_ = 0.0;
  std::size_t points_ = 0;
};

/// Anchor (x0, t0) of Gaussian weights and solitons.
struct Center {
  std::vector<double> x0;
  double t0 = 1.0;

  Center() = default;
  Center(std::vector<double> x, double t) : x0(std::move(x)), t0(t) {
    if (!(t0 > 0.0) || !std::isfinite(t0)) throw DomainError("center t0 must be positive");
  }
  static Center origin(int n, double t0 = 1.0) { return Center(std::vector<double>(n, 0.0), t0); }
};

enum class FormKind { connection, one_form, two_form };

inline const char* kind_name(FormKind k) {
  switch (k) {
    case FormKind::connection: return "connection";
    case FormKind::one_form: return "oneform";
    case FormKind::two_form: return "twoform";
  }
  return "?";
}

inline int pair_count(int n) { return n * (n - 1) / 2; }

/// Index of the stored component (i, j), i < j.
inline int pair_index(int n, int i, int j) { return i * n - i * (i + 1) / 2 + (j - i - 1); }

/// Inverse of pair_index.
inline std::pair<int, int> pair_of(int n, int c) {
  for (int i = 0; i < n; ++i) {
    const int row = n - 1 - i;
    if (c < row) return {i, i + 1 + c};
    c -= row;
  }
  throw DimensionError("two-form component out of range");
}

/// A g-valued form sampled on the grid.
template <FormKind K>
class LatticeForm {
 public:
  static constexpr FormKind kind = K;

  LatticeForm() = default;
  LatticeForm(Grid grid, int r) : grid_(grid), r_(r) {
    if (r < 1) throw DimensionError("rank must be positive");
    comps_ = (K == FormKind::two_form) ? pair_count(grid.n()) : grid.n();
    data_.assign(grid.points() * comps_ * r * r, 0.0);
  }

  const Grid& grid() const { return grid_; }
  int rank() const { return r_; }
  int components() const { return comps_; }
  int block() const { return r_ * r_; }
  std::size_t point_stride() const { return static_cast<std::size_t>(comps_) * r_ * r_; }

  double* at(std::size_t p, int c) { return data_.data() + p * point_stride() + static_cast<std::size_t>(c) * r_ * r_; }
  const double* at(std::size_t p, int c) const {
    return data_.data() + p * point_stride() + static_cast<std::size_t>(c) * r_ * r_;
  }

  /// Component (i, j) of a two-form with its sign, valid for any i != j.
  const double* pair(std::size_t p, int i, int j, double& sign) const
    requires(K == FormKind::two_form)
  {
    if (i < j) {
      sign = 1.0;
      return at(p, pair_index(grid_.n(), i, j));
    }
    sign = -1.0;
    return at(p, pair_index(grid_.n(), j, i));
  }

  AlgebraElement element(std::size_t p, int c) const {
    const double* b = at(p, c);
    return AlgebraElement::from_computed(r_, std::vector<double>(b, b + block()));
  }
  void set(std::size_t p, int c, const AlgebraElement& e) {
    if (e.rank() != r_) throw DimensionError("rank mismatch");
    std::copy(e.entries().begin(), e.entries().end(), at(p, c));
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool compatible(const Grid& g, int r) const { return grid_ == g && r_ == r; }
  template <FormKind K2>
  bool compatible(const LatticeForm<K2>& o) const {
    return grid_ == o.grid() && r_ == o.rank() && comps_ == o.components();
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double max_antisymmetry_defect() const {
    double d = 0.0;
    for (std::size_t k = 0; k < data_.size(); k += block()) d = std::max(d, mat::antisymmetry_defect(r_, data_.data() + k));
    return d;
  }
  void antisymmetrize() {
    for (std::size_t k = 0; k < data_.size(); k += block()) mat::antisymmetrize(r_, data_.data() + k);
  }

  LatticeForm& operator+=(const LatticeForm& o) {
    check(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  LatticeForm& operator-=(const LatticeForm& o) {
    check(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  LatticeForm& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  /// this += alpha * x
  LatticeForm& axpy(double alpha, const LatticeForm& x) {
    check(x);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += alpha * x.data_[k];
    return *this;
  }
  friend LatticeForm operator+(LatticeForm a, const LatticeForm& b) { return a += b; }
  friend LatticeForm operator-(LatticeForm a, const LatticeForm& b) { return a -= b; }
  friend LatticeForm operator*(double s, LatticeForm a) { return a *= s; }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  void check(const LatticeForm& o) const {
    if (!(grid_ == o.grid_) || r_ != o.r_) throw DimensionError("field grid or rank mismatch");
  }

 private:
  Grid grid_;
  int r_ = 0;
  int comps_ = 0;
  std::vector<double> data_;
};

using ConnectionField = LatticeForm<FormKind::connection>;
using OneForm = LatticeForm<FormKind::one_form>;
using TwoForm = LatticeForm<FormKind::two_form>;

/// Reinterprets between the two n-component kinds (connection and one-form).
template <FormKind To, FormKind From>
LatticeForm<To> form_cast(const LatticeForm<From>& f)
  requires(To != FormKind::two_form && From != FormKind::two_form)
{
  LatticeForm<To> out(f.grid(), f.rank());
  std::copy(f.data().begin(), f.data().end(), out.data().begin());
  return out;
}

inline OneForm as_one_form(const ConnectionField& a) { return form_cast<FormKind::one_form>(a); }
inline ConnectionField as_connection(const OneForm& a) { return form_cast<FormKind::connection>(a); }

/// Fills a form by evaluating fn(x, component, out_block) at every grid point.
/// The sampled blocks are antisymmetrized.
template <FormKind K, class Fn>
LatticeForm<K> sample_form(const Grid& g, int r, Fn&& fn) {
  LatticeForm<K> f(g, r);
  std::vector<double> x(g.n());
  for (std::size_t p = 0; p < g.points(); ++p) {
    g.coords(p, x);
    for (int c = 0; c < f.components(); ++c) fn(std::span<const double>(x), c, f.at(p, c));
  }
  f.antisymmetrize();
  return f;
}

// ---------------------------------------------------------------------------
// Finite-difference kernels.

namespace detail {

struct Stencil {
  std::array<int, 8> offset{};
  std::array<double, 8> coef{};
  int len = 0;
};

/// First-derivative stencil at axis index i: 4th-order central in the
/// interior, 2nd-order one-sided within two layers of the boundary.
inline Stencil stencil_at(int i, int m, double h) {
  Stencil s;
  if (i >= 2 && i <= m - 3) {
    s.len = 4;
    s.offset = {-2, -1, 1, 2, 0};
    const double c = 1.0 / (12.0 * h);
    s.coef = {c, -8.0 * c, 8.0 * c, -c, 0.0};
  } else if (i < 2) {
    s.len = 3;
    s.offset = {0, 1, 2, 0, 0};
    const double c = 1.0 / (2.0 * h);
    s.coef = {-3.0 * c, 4.0 * c, -c, 0.0, 0.0};
  } else {
    s.len = 3;
    s.offset = {0, -1, -2, 0, 0};
    const double c = 1.0 / (2.0 * h);
    s.coef = {3.0 * c, -4.0 * c, c, 0.0, 0.0};
  }
  return s;
}

/// Per-axis stencil table.
struct AxisStencils {
  std::vector<Stencil> table;
  std::size_t stride = 0;

  AxisStencils(const Grid& g, int axis) : stride(g.stride(axis)) {
    const int m = g.m();
    table.resize(m);
    for (int i = 0; i < m; ++i) table[i] = stencil_at(i, m, g.h());
  }

  /// Table of the adjoint D^T_W = W^{-1} D^T W of the axis derivative in the
  /// pairing weighted by the quadrature weight W = trapezoid * G of the
  /// center, or by the trapezoid factor alone when c is null. Where the
  /// stencil is central this equals -G^{-1} d (G .).
  static AxisStencils weighted_adjoint(const Grid& g, int axis, const Center* c) {
    AxisStencils fwd(g, axis);
    const int m = g.m();
    AxisStencils adj = fwd;
    for (auto& s : adj.table) s.len = 0;
    for (int i = 0; i < m; ++i) {
      const Stencil& s = fwd.table[i];
      for (int k = 0; k < s.len; ++k) {
        const int j = i + s.offset[k];  // row i reads j, so the adjoint row j reads i
        Stencil& t = adj.table[j];
        // merge with an existing entry for the same offset
        int slot = 0;
        while (slot < t.len && t.offset[slot] != i - j) ++slot;
        if (slot == t.len) {
          t.offset[t.len] = i - j;
          t.coef[t.len] = 0.0;
          ++t.len;
        }
        // ratio w_i / w_j computed from the exponents to stay finite for large |y|
        double ratio = 1.0;
        if (c) {
          const double yi = g.coordinate(i) - c->x0[axis], yj = g.coordinate(j) - c->x0[axis];
          ratio = std::exp((yj * yj - yi * yi) / (4.0 * c->t0));
        }
        ratio *=
                             ((i == 0 || i == m - 1) ? 0.5 : 1.0) / ((j == 0 || j == m - 1) ? 0.5 : 1.0);
        t.coef[slot] += s.coef[k] * ratio;
      }
    }
    return adj;
  }
};

/// dst[p, dst_comp] += scale * d_axis src[p, src_comp] for every grid point.
template <FormKind KS, FormKind KD>
void partial_acc(const LatticeForm<KS>& src, int src_comp, LatticeForm<KD>& dst, int dst_comp, const AxisStencils& st,
                 double scale) {
  const Grid& g = src.grid();
  const int m = g.m();
  const int blk = src.block();
  const std::size_t ss = src.point_stride(), ds = dst.point_stride();
  const double* s0 = src.data().data() + static_cast<std::size_t>(src_comp) * blk;
  double* d0 = dst.data().data() + static_cast<std::size_t>(dst_comp) * blk;
  const std::size_t stride = st.stride;
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      const Stencil& s = st.table[(p / stride) % m];
      double* out = d0 + p * ds;
      for (int k = 0; k < s.len; ++k) {
        const double c = scale * s.coef[k];
        const double* in = s0 + (p + static_cast<std::ptrdiff_t>(s.offset[k]) * static_cast<std::ptrdiff_t>(stride)) * ss;
        for (int q = 0; q < blk; ++q) out[q] += c * in[q];
      }
    }
  });
}

}  // namespace detail

inline void check_center(const Grid& g, const Center& c) {
  if (static_cast<int>(c.x0.size()) != g.n()) throw DimensionError("center dimension does not match grid");
  if (!g.contains(c.x0)) throw DomainError("center x0 lies outside the grid box");
  if (!(c.t0 > 0.0)) throw DomainError("center t0 must be positive");
}

/// F_ij = d_i A_j - d_j A_i + [A_i, A_j]
inline TwoForm curvature(const ConnectionField& a) {
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank();
  TwoForm f(g, r);
  for (int i = 0; i < n; ++i) {
    detail::AxisStencils st(g, i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (i < j)
        detail::partial_acc(a, j, f, pair_index(n, i, j), st, 1.0);
      else
        detail::partial_acc(a, j, f, pair_index(n, j, i), st, -1.0);
    }
  }
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) mat::bracket_acc(r, a.at(p, i), a.at(p, j), f.at(p, pair_index(n, i, j)));
  });
  f.antisymmetrize();
  return f;
}

/// (nabla_i theta)_j = d_i theta_j + [A_i, theta_j]
inline OneForm covariant_derivative(const ConnectionField& a, const OneForm& theta, int axis) {
  if (!theta.compatible(a.grid(), a.rank())) throw DimensionError("field grid or rank mismatch");
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank();
  if (axis < 0 || axis >= n) throw DimensionError("axis out of range");
  OneForm out(g, r);
  detail::AxisStencils st(g, axis);
  for (int j = 0; j < n; ++j) detail::partial_acc(theta, j, out, j, st, 1.0);
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p)
      for (int j = 0; j < n; ++j) mat::bracket_acc(r, a.at(p, axis), theta.at(p, j), out.at(p, j));
  });
  out.antisymmetrize();
  return out;
}

/// (d^nabla theta)_ij = nabla_i theta_j - nabla_j theta_i
inline TwoForm d_nabla_one(const ConnectionField& a, const OneForm& theta) {
  if (!theta.compatible(a.grid(), a.rank())) throw DimensionError("field grid or rank mismatch");
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank();
  TwoForm out(g, r);
  for (int i = 0; i < n; ++i) {
    detail::AxisStencils st(g, i);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (i < j)
        detail::partial_acc(theta, j, out, pair_index(n, i, j), st, 1.0);
      else
        detail::partial_acc(theta, j, out, pair_index(n, j, i), st, -1.0);
    }
  }
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
          double* o = out.at(p, pair_index(n, i, j));
          mat::bracket_acc(r, a.at(p, i), theta.at(p, j), o);
          mat::bracket_acc(r, a.at(p, j), theta.at(p, i), o, -1.0);
        }
  });
  out.antisymmetrize();
  return out;
}

namespace detail {
/// Plain stencil divergence, or minus the weighted adjoint of d_nabla_one
/// (Gaussian-trapezoid weight when weight is set, trapezoid alone otherwise).
inline OneForm divergence_impl(const ConnectionField& a, const TwoForm& f, bool adjoint, const Center* weight) {
  if (!(f.grid() == a.grid()) || f.rank() != a.rank()) throw DimensionError("field grid or rank mismatch");
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank();
  OneForm out(g, r);
  for (int p = 0; p < n; ++p) {
    const AxisStencils st = adjoint ? AxisStencils::weighted_adjoint(g, p, weight) : AxisStencils(g, p);
    const double sign = adjoint ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j) {
      if (j == p) continue;
      if (p < j)
        partial_acc(f, pair_index(n, p, j), out, j, st, sign);
      else
        partial_acc(f, pair_index(n, j, p), out, j, st, -sign);
    }
  }
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t pt = b; pt < e; ++pt)
      for (int p = 0; p < n; ++p)
        for (int j = 0; j < n; ++j) {
          if (j == p) continue;
          double sign;
          const double* fp = f.pair(pt, p, j, sign);
          mat::bracket_acc(r, a.at(pt, p), fp, out.at(pt, j), sign);
        }
  });
  out.antisymmetrize();
  return out;
}
}  // namespace detail

/// J_j = sum_p nabla_p F_pj. The codifferential is (d^nabla)^* F = -J.
inline OneForm codifferential(const ConnectionField& a, const TwoForm& f) {
  return detail::divergence_impl(a, f, false, nullptr);
}

/// sum_p G^{-1} nabla_p (G w_pj) for the Gaussian weight G of the center, in
/// the continuum equal to nabla^p w_pj - (x - x0)^p w_pj / (2 t0). The lattice
/// operator is minus the exact adjoint of d_nabla_one in the quadrature
/// pairing sum_x W <.,.>, so summation by parts holds to round-off. At points
/// with central stencils it coincides with the product form above.
inline OneForm weighted_divergence(const ConnectionField& a, const TwoForm& w, const Center& c) {
  check_center(a.grid(), c);
  return detail::divergence_impl(a, w, true, &c);
}

/// X_j = (x - x0)^p F_pj
inline OneForm interior_product(const TwoForm& f, const Center& c) {
  const Grid& g = f.grid();
  if (static_cast<int>(c.x0.size()) != g.n()) throw DimensionError("center dimension does not match grid");
  const int n = g.n(), blk = f.block();
  OneForm out(g, f.rank());
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    std::vector<double> x(n);
    for (std::size_t pt = b; pt < e; ++pt) {
      g.coords(pt, x);
      for (int p = 0; p < n; ++p) {
        const double d = x[p] - c.x0[p];
        if (d == 0.0) continue;
        for (int j = 0; j < n; ++j) {
          if (j == p) continue;
          double sign;
          const double* fp = f.pair(pt, p, j, sign);
          double* o = out.at(pt, j);
          for (int q = 0; q < blk; ++q) o[q] += sign * d * fp[q];
        }
      }
    }
  });
  return out;
}

/// (i_V F)_j = V^p F_pj for a constant vector V.
inline OneForm interior_vector(const TwoForm& f, std::span<const double> v) {
  const Grid& g = f.grid();
  const int n = g.n(), blk = f.block();
  if (static_cast<int>(v.size()) != n) throw DimensionError("vector dimension does not match grid");
  OneForm out(g, f.rank());
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t pt = b; pt < e; ++pt)
      for (int p = 0; p < n; ++p) {
        if (v[p] == 0.0) continue;
        for (int j = 0; j < n; ++j) {
          if (j == p) continue;
          double sign;
          const double* fp = f.pair(pt, p, j, sign);
          double* o = out.at(pt, j);
          for (int q = 0; q < blk; ++q) o[q] += sign * v[p] * fp[q];
        }
      }
  });
  return out;
}

/// (R theta)_j = sum_i [F_ij, theta_i]
inline OneForm R_apply(const TwoForm& f, const OneForm& theta) {
  if (!theta.compatible(f.grid(), f.rank())) throw DimensionError("field grid or rank mismatch");
  const Grid& g = f.grid();
  const int n = g.n(), r = f.rank();
  OneForm out(g, r);
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t pt = b; pt < e; ++pt)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
          if (i == j) continue;
          double sign;
          const double* fij = f.pair(pt, i, j, sign);
          mat::bracket_acc(r, fij, theta.at(pt, i), out.at(pt, j), sign);
        }
  });
  out.antisymmetrize();
  return out;
}

/// Pointwise |F|^2 = 1/2 sum_{i,j} <F_ij, F_ij> = sum_{i<j} <F_ij, F_ij>.
inline std::vector<double> pointwise_norm2(const TwoForm& f) {
  const std::size_t np = f.grid().points();
  std::vector<double> out(np);
  const int c = f.components(), r = f.rank();
  for (std::size_t p = 0; p < np; ++p) {
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += mat::frob(r, f.at(p, k), f.at(p, k));
    out[p] = s;
  }
  return out;
}

/// Pointwise |theta|^2 = sum_j <theta_j, theta_j>.
template <FormKind K>
std::vector<double> pointwise_norm2(const LatticeForm<K>& f)
  requires(K != FormKind::two_form)
{
  const std::size_t np = f.grid().points();
  std::vector<double> out(np);
  const int c = f.components(), r = f.rank();
  for (std::size_t p = 0; p < np; ++p) {
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += mat::frob(r, f.at(p, k), f.at(p, k));
    out[p] = s;
  }
  return out;
}

/// Optional sub-box restriction |x_k| <= half_width for interior diagnostics.
struct Region {
  int margin = 4;              ///< minimum index distance to the boundary
  double half_width = -1.0;    ///< ignored when negative
  bool contains(const Grid& g, std::size_t p) const {
    if (g.boundary_distance(p) < margin) return false;
    if (half_width >= 0.0)
      for (int k = 0; k < g.n(); ++k)
        if (std::abs(g.coord(p, k)) > half_width + 1e-12) return false;
    return true;
  }
};

/// max over interior points and index triples of
/// |nabla_i F_jk + nabla_j F_ki + nabla_k F_ij| (Frobenius norm of the sum).
inline double bianchi_residual(const ConnectionField& a, Region region = {}) {
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank(), blk = r * r;
  if (n < 3) return 0.0;  // no index triples
  const TwoForm f = curvature(a);
  // nabla_i F for each axis i, stored as two-forms.
  std::vector<TwoForm> df;
  df.reserve(n);
  for (int i = 0; i < n; ++i) {
    TwoForm d(g, r);
    detail::AxisStencils st(g, i);
    for (int c = 0; c < f.components(); ++c) detail::partial_acc(f, c, d, c, st, 1.0);
    for (std::size_t p = 0; p < g.points(); ++p)
      for (int c = 0; c < f.components(); ++c) mat::bracket_acc(r, a.at(p, i), f.at(p, c), d.at(p, c));
    df.push_back(std::move(d));
  }
  double worst = 0.0;
  std::vector<double> s(blk);
  for (std::size_t p = 0; p < g.points(); ++p) {
    if (!region.contains(g, p)) continue;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        for (int k = j + 1; k < n; ++k) {
          // cyclic sum nabla_i F_jk + nabla_j F_ki + nabla_k F_ij with F_ki = -F_ik
          const double* a1 = df[i].at(p, pair_index(n, j, k));
          const double* a2 = df[j].at(p, pair_index(n, i, k));
          const double* a3 = df[k].at(p, pair_index(n, i, j));
          double nrm = 0.0;
          for (int q = 0; q < blk; ++q) {
            const double v = a1[q] - a2[q] + a3[q];
            nrm += v * v;
          }
          worst = std::max(worst, std::sqrt(nrm));
        }
  }
  return worst;
}

/// sup over the region of the pointwise |F|.
inline double sup_norm(const TwoForm& f, Region region = {0, -1.0}) {
  const auto n2 = pointwise_norm2(f);
  double m = 0.0;
  for (std::size_t p = 0; p < n2.size(); ++p)
    if (region.contains(f.grid(), p)) m = std::max(m, n2[p]);
  return std::sqrt(m);
}

}  // namespace ymlab
