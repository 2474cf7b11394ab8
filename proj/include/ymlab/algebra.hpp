#pragma once

/// Kernels for the Lie algebra so(r): antisymmetric r x r matrices stored
/// row-major, the commutator bracket and the Frobenius (component-sum) pairing.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ymlab {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

namespace mat {

// Raw kernels on row-major r x r blocks. Callers guarantee the extents.

inline double frob(int r, const double* b, const double* c) {
  double s = 0.0;
  const int rr = r * r;
  for (int k = 0; k < rr; ++k) s += b[k] * c[k];
  return s;
}

/// out += scale * (B C - C B)
inline void bracket_acc(int r, const double* b, const double* c, double* out, double scale = 1.0) {
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      double s = 0.0;
      for (int k = 0; k < r; ++k) s += b[i * r + k] * c[k * r + j] - c[i * r + k] * b[k * r + j];
      out[i * r + j] += scale * s;
    }
  }
}

/// out = B C
inline void mul(int r, const double* b, const double* c, double* out) {
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      double s = 0.0;
      for (int k = 0; k < r; ++k) s += b[i * r + k] * c[k * r + j];
      out[i * r + j] = s;
    }
  }
}

/// out = B^T C
inline void mul_tn(int r, const double* b, const double* c, double* out) {
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < r; ++j) {
      double s = 0.0;
      for (int k = 0; k < r; ++k) s += b[k * r + i] * c[k * r + j];
      out[i * r + j] = s;
    }
  }
}

inline void antisymmetrize(int r, double* b) {
  for (int i = 0; i < r; ++i) {
    b[i * r + i] = 0.0;
    for (int j = i + 1; j < r; ++j) {
      const double a = 0.5 * (b[i * r + j] - b[j * r + i]);
      b[i * r + j] = a;
      b[j * r + i] = -a;
    }
  }
}

inline double antisymmetry_defect(int r, const double* b) {
  double d = 0.0;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) d = std::max(d, std::abs(b[i * r + j] + b[j * r + i]));
  return d;
}

/// Matrix exponential by scaling and squaring with a Taylor core. Used for
/// building gauge transformations exp(xi) with xi in so(r).
inline std::vector<double> expm(int r, std::span<const double> x) {
  const int rr = r * r;
  double norm = 0.0;
  for (double v : x) norm += v * v;
  norm = std::sqrt(norm);
  int squarings = 0;
  double scale = 1.0;
  while (norm * scale > 0.25) {
    scale *= 0.5;
    ++squarings;
  }
  std::vector<double> a(rr), term(rr, 0.0), result(rr, 0.0), tmp(rr);
  for (int k = 0; k < rr; ++k) a[k] = x[k] * scale;
  for (int i = 0; i < r; ++i) term[i * r + i] = result[i * r + i] = 1.0;
  for (int k = 1; k <= 18; ++k) {
    mul(r, term.data(), a.data(), tmp.data());
    for (int q = 0; q < rr; ++q) {
      term[q] = tmp[q] / k;
      result[q] += term[q];
    }
  }
  for (int s = 0; s < squarings; ++s) {
    mul(r, result.data(), result.data(), tmp.data());
    result.swap(tmp);
  }
  return result;
}

inline double det(int r, std::span<const double> m) {
  std::vector<double> a(m.begin(), m.end());
  double d = 1.0;
  for (int c = 0; c < r; ++c) {
    int piv = c;
    for (int i = c + 1; i < r; ++i)
      if (std::abs(a[i * r + c]) > std::abs(a[piv * r + c])) piv = i;
    if (a[piv * r + c] == 0.0) return 0.0;
    if (piv != c) {
      for (int j = 0; j < r; ++j) std::swap(a[c * r + j], a[piv * r + j]);
      d = -d;
    }
    d *= a[c * r + c];
    for (int i = c + 1; i < r; ++i) {
      const double f = a[i * r + c] / a[c * r + c];
      for (int j = c; j < r; ++j) a[i * r + j] -= f * a[c * r + j];
    }
  }
  return d;
}

}  // namespace mat

/// An element of so(r). Antisymmetry is checked exactly at construction.
class AlgebraElement {
 public:
  AlgebraElement() = default;

  static AlgebraElement zero(int r) {
    if (r < 1) throw DimensionError("rank must be positive");
    AlgebraElement e;
    e.r_ = r;
    e.entries_.assign(static_cast<std::size_t>(r) * r, 0.0);
    return e;
  }

  /// Basis element E_ab: +1 at (a,b), -1 at (b,a). Indices are zero-based.
  static AlgebraElement basis(int r, int a, int b) {
    if (a < 0 || b < 0 || a >= r || b >= r || a == b) throw DimensionError("invalid basis index");
    auto e = zero(r);
    e.entries_[a * r + b] = 1.0;
    e.entries_[b * r + a] = -1.0;
    return e;
  }

  static AlgebraElement from_entries(int r, std::vector<double> entries) {
    if (r < 1 || entries.size() != static_cast<std::size_t>(r) * r)
      throw DimensionError("entries do not match rank");
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j)
        if (entries[i * r + j] != -entries[j * r + i])
          throw std::invalid_argument("so(r) element must be antisymmetric");
    AlgebraElement e;
    e.r_ = r;
    e.entries_ = std::move(entries);
    return e;
  }

  /// Wraps the result of arithmetic; antisymmetry is required to 1e-14.
  static AlgebraElement from_computed(int r, std::vector<double> entries) {
    if (r < 1 || entries.size() != static_cast<std::size_t>(r) * r)
      throw DimensionError("entries do not match rank");
    if (mat::antisymmetry_defect(r, entries.data()) > 1e-14 * (1.0 + max_abs(entries)))
      throw std::invalid_argument("so(r) element must be antisymmetric");
    AlgebraElement e;
    e.r_ = r;
    e.entries_ = std::move(entries);
    return e;
  }

  int rank() const { return r_; }
  std::span<const double> entries() const { return entries_; }
  double operator()(int i, int j) const { return entries_[i * r_ + j]; }

  AlgebraElement& operator+=(const AlgebraElement& o) {
    check_rank(o);
    for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] += o.entries_[k];
    return *this;
  }
  AlgebraElement& operator-=(const AlgebraElement& o) {
    check_rank(o);
    for (std::size_t k = 0; k < entries_.size(); ++k) entries_[k] -= o.entries_[k];
    return *this;
  }
  AlgebraElement& operator*=(double s) {
    for (double& v : entries_) v *= s;
    return *this;
  }
  friend AlgebraElement operator+(AlgebraElement a, const AlgebraElement& b) { return a += b; }
  friend AlgebraElement operator-(AlgebraElement a, const AlgebraElement& b) { return a -= b; }
  friend AlgebraElement operator*(double s, AlgebraElement a) { return a *= s; }

  void check_rank(const AlgebraElement& o) const {
    if (o.r_ != r_) throw DimensionError("rank mismatch: " + std::to_string(r_) + " vs " + std::to_string(o.r_));
  }

 private:
  static double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }

  int r_ = 0;
  std::vector<double> entries_;
};

/// [B, C] = BC - CB
inline AlgebraElement bracket(const AlgebraElement& b, const AlgebraElement& c) {
  b.check_rank(c);
  const int r = b.rank();
  std::vector<double> out(static_cast<std::size_t>(r) * r, 0.0);
  mat::bracket_acc(r, b.entries().data(), c.entries().data(), out.data());
  mat::antisymmetrize(r, out.data());
  return AlgebraElement::from_entries(r, std::move(out));
}

/// trace(B^T C) = sum of componentwise products.
inline double frob_inner(const AlgebraElement& b, const AlgebraElement& c) {
  b.check_rank(c);
  return mat::frob(b.rank(), b.entries().data(), c.entries().data());
}

inline double frob_norm(const AlgebraElement& b) { return std::sqrt(frob_inner(b, b)); }

/// The r(r-1)/2 elements E_ab, a < b, in lexicographic order.
inline std::vector<AlgebraElement> algebra_basis(int r) {
  std::vector<AlgebraElement> out;
  for (int a = 0; a < r; ++a)
    for (int b = a + 1; b < r; ++b) out.push_back(AlgebraElement::basis(r, a, b));
  return out;
}

inline int algebra_dim(int r) { return r * (r - 1) / 2; }

}  // namespace ymlab
