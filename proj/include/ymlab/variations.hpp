#pragma once

/// First and second variations of the F-functional, the curvature action R,
/// the stability operator L and the soliton residual.
///
/// Conventions: the pairing of one-forms is sum_j <theta_j, eta_j>, that of
/// two-forms sum_{i<j} <w_ij, z_ij>; weighted pairings use the quadrature
/// weights W = trapezoid * G of the center.

#include <cmath>
#include <string>
#include <vector>

#include "ymlab/fields.hpp"
#include "ymlab/functionals.hpp"

namespace ymlab {

/// Tangent (q, V, theta) of a path (t_s, x_s, A_s) at s = 0.
struct VariationDirection {
  double q = 0.0;
  std::vector<double> V;
  OneForm theta;
};

struct NotNearSoliton : DomainError {
  using DomainError::DomainError;
};

/// sum_p W_p <a(p), b(p)>
template <FormKind K>
double weighted_inner(const LatticeForm<K>& a, const LatticeForm<K>& b, const WeightedQuadrature& q) {
  if (!(a.grid() == b.grid()) || a.rank() != b.rank() || !(q.grid == a.grid()))
    throw DimensionError("field grid or rank mismatch");
  const std::size_t np = a.grid().points();
  const int c = a.components(), r = a.rank();
  std::vector<double> v(np);
  parallel_for(np, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t p = lo; p < hi; ++p) {
      double s = 0.0;
      for (int k = 0; k < c; ++k) s += mat::frob(r, a.at(p, k), b.at(p, k));
      v[p] = s;
    }
  });
  return q.integrate(v);
}

template <FormKind K>
double weighted_inner(const LatticeForm<K>& a, const LatticeForm<K>& b, const Center& c) {
  return weighted_inner(a, b, WeightedQuadrature(a.grid(), c));
}

template <FormKind K>
double weighted_norm(const LatticeForm<K>& a, const WeightedQuadrature& q) {
  return std::sqrt(std::max(0.0, weighted_inner(a, a, q)));
}

/// S = sum_p G^{-1} nabla_p (G F_pj) = J - X / (2 t0). A solves the soliton
/// equation at the center iff S = 0.
inline OneForm soliton_residual(const ConnectionField& a, const Center& c) {
  return weighted_divergence(a, curvature(a), c);
}

/// ([theta, theta])_ij = [theta_i, theta_j], the quadratic part of F(A + theta).
inline TwoForm bracket_square(const OneForm& theta) {
  const Grid& g = theta.grid();
  const int n = g.n(), r = theta.rank();
  TwoForm out(g, r);
  parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p)
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) mat::bracket_acc(r, theta.at(p, i), theta.at(p, j), out.at(p, pair_index(n, i, j)));
  });
  out.antisymmetrize();
  return out;
}

/// Stability operator L theta = -t0 [ (d^nabla)^*_G d^nabla theta + R(theta) ],
/// where (d^nabla)^*_G w = (d^nabla)^* w + i_{(x-x0)/(2 t0)} w is the
/// codifferential of the G-weighted pairing. Eigenfields follow
/// L theta = -lambda theta.
class StabilityOperator {
 public:
  StabilityOperator(ConnectionField a, Center c) : a_(std::move(a)), c_(std::move(c)), f_(curvature(a_)), q_(a_.grid(), c_) {}

  const ConnectionField& connection() const { return a_; }
  const Center& center() const { return c_; }
  const TwoForm& curvature_form() const { return f_; }
  const WeightedQuadrature& quadrature() const { return q_; }

  OneForm apply(const OneForm& theta) const {
    check(theta);
    OneForm out = weighted_divergence(a_, d_nabla_one(a_, theta), c_);
    out -= R_apply(f_, theta);
    out *= c_.t0;
    return out;
  }

  /// Symmetric form b(theta, eta) = <-L theta, eta>_G
  ///   = t0 ( <d^nabla theta, d^nabla eta>_G + <R theta, eta>_G ).
  double form(const OneForm& theta, const OneForm& eta) const {
    check(theta);
    check(eta);
    const TwoForm dt = d_nabla_one(a_, theta), de = d_nabla_one(a_, eta);
    return c_.t0 * (weighted_inner(dt, de, q_) + weighted_inner(R_apply(f_, theta), eta, q_));
  }

  double inner(const OneForm& theta, const OneForm& eta) const { return weighted_inner(theta, eta, q_); }

 private:
  void check(const OneForm& theta) const {
    if (!theta.compatible(a_.grid(), a_.rank())) throw DimensionError("variation field grid or rank mismatch");
  }

  ConnectionField a_;
  Center c_;
  TwoForm f_;
  WeightedQuadrature q_;
};

inline OneForm L_apply(const ConnectionField& a, const Center& c, const OneForm& theta) {
  return StabilityOperator(a, c).apply(theta);
}

namespace detail {
inline void check_direction(const ConnectionField& a, const VariationDirection& dir) {
  if (!dir.V.empty() && static_cast<int>(dir.V.size()) != a.grid().n())
    throw DimensionError("variation vector V dimension does not match grid");
  if (!dir.theta.data().empty() && !dir.theta.compatible(a.grid(), a.rank()))
    throw DimensionError("variation field grid or rank mismatch");
}
inline double v_component(const VariationDirection& dir, int k) { return dir.V.empty() ? 0.0 : dir.V[k]; }
}  // namespace detail

/// d/ds F_{x0+sV, t0+sq}(A + s theta) at s = 0:
///   q sum W ((4-n)/2 t0 + |x-x0|^2/4) |F|^2 + sum W t0 <V, x-x0> |F|^2 / 2
///   - 2 t0^2 <theta, J - X/(2 t0)>_G.
inline double first_variation(const ConnectionField& a, const Center& c, const VariationDirection& dir) {
  detail::check_direction(a, dir);
  check_center(a.grid(), c);
  const TwoForm f = curvature(a);
  CenterGradient cg;
  detail::functional_with_gradient(a.grid(), pointwise_norm2(f), c, &cg);
  double value = dir.q * cg.dt0;
  for (int k = 0; k < a.grid().n(); ++k) value += detail::v_component(dir, k) * cg.dx0[k];
  if (!dir.theta.data().empty()) {
    const OneForm s = weighted_divergence(a, f, c);
    value -= 2.0 * c.t0 * c.t0 * weighted_inner(dir.theta, s, c);
  }
  return value;
}

/// Exact second derivative of the lattice functional along the linear path
/// (x0 + sV, t0 + sq, A + s theta) at s = 0. Valid at any A.
inline double path_second_variation(const ConnectionField& a, const Center& c, const VariationDirection& dir) {
  detail::check_direction(a, dir);
  check_center(a.grid(), c);
  const Grid& g = a.grid();
  const int n = g.n(), r = a.rank();
  const TwoForm f = curvature(a);
  const bool has_theta = !dir.theta.data().empty();
  TwoForm d, b;
  if (has_theta) {
    d = d_nabla_one(a, dir.theta);
    b = bracket_square(dir.theta);
  }
  const double t0 = c.t0, q = dir.q;
  double v2 = 0.0;
  for (int k = 0; k < n; ++k) v2 += detail::v_component(dir, k) * detail::v_component(dir, k);
  const double norm = std::pow(4.0 * std::numbers::pi * t0, -0.5 * n);
  std::vector<double> terms(g.points(), 0.0);
  const int comps = f.components();
  parallel_for(g.points(), [&](std::size_t lo, std::size_t hi) {
    std::vector<double> x(n);
    for (std::size_t p = lo; p < hi; ++p) {
      g.coords(p, x);
      double y2 = 0.0, vy = 0.0;
      for (int k = 0; k < n; ++k) {
        const double y = x[k] - c.x0[k];
        y2 += y * y;
        vy += detail::v_component(dir, k) * y;
      }
      const double phi = t0 * t0 * norm * std::exp(-y2 / (4.0 * t0)) * trapezoid_factor(g, p);
      // log-derivatives of Phi_s = t_s^2 G_s
      const double l1 = (4.0 - n) * q / (2.0 * t0) + vy / (2.0 * t0) + q * y2 / (4.0 * t0 * t0);
      const double l2 = -(4.0 - n) * q * q / (2.0 * t0 * t0) - v2 / (2.0 * t0) - vy * q / (t0 * t0) -
                        q * q * y2 / (2.0 * t0 * t0 * t0);
      double Q = 0.0, Q1 = 0.0, Q2 = 0.0;
      for (int k = 0; k < comps; ++k) {
        Q += mat::frob(r, f.at(p, k), f.at(p, k));
        if (has_theta) {
          Q1 += 2.0 * mat::frob(r, f.at(p, k), d.at(p, k));
          Q2 += 2.0 * mat::frob(r, d.at(p, k), d.at(p, k)) + 4.0 * mat::frob(r, f.at(p, k), b.at(p, k));
        }
      }
      terms[p] = phi * ((l2 + l1 * l1) * Q + 2.0 * l1 * Q1 + Q2);
    }
  });
  return pairwise_sum(terms);
}

struct SolitonGate {
  double relative_bound = 1e-3;  ///< ||S||_G <= bound * ||F||_G
};

struct GateReport {
  bool passed = false;
  double residual_norm = 0.0;   ///< ||S||_G
  double curvature_norm = 0.0;  ///< ||F||_G
  double ratio = 0.0;
};

inline GateReport soliton_gate(const ConnectionField& a, const Center& c, const SolitonGate& gate = {}) {
  const WeightedQuadrature q(a.grid(), c);
  const TwoForm f = curvature(a);
  GateReport rep;
  rep.curvature_norm = weighted_norm(f, q);
  rep.residual_norm = weighted_norm(weighted_divergence(a, f, c), q);
  // A flat connection is a degenerate soliton.
  rep.ratio = rep.curvature_norm > 0.0 ? rep.residual_norm / rep.curvature_norm : 0.0;
  rep.passed = rep.curvature_norm == 0.0 || rep.residual_norm <= gate.relative_bound * rep.curvature_norm;
  return rep;
}

struct SecondVariationOptions {
  SolitonGate gate;
  bool path_value_off_soliton = false;  ///< return the path value instead of throwing
};

struct SecondVariationResult {
  double value = 0.0;
  bool soliton_formula = false;  ///< false when the path value was returned
  GateReport gate;
};

/// F''(q, V, theta) = 2 t0 [ <-L theta - 2 q J - i_V F, theta>_G
///                          - q^2 ||J||_G^2 - 1/2 ||i_V F||_G^2 ],
/// valid at solitons. Off the gate this throws NotNearSoliton unless the
/// options ask for the path value.
inline SecondVariationResult second_variation_report(const ConnectionField& a, const Center& c,
                                                     const VariationDirection& dir,
                                                     const SecondVariationOptions& opt = {}) {
  detail::check_direction(a, dir);
  SecondVariationResult res;
  res.gate = soliton_gate(a, c, opt.gate);
  if (!res.gate.passed) {
    if (!opt.path_value_off_soliton)
      throw NotNearSoliton("second variation formula requires a near-soliton: ||S||_G / ||F||_G = " +
                           std::to_string(res.gate.ratio) + " exceeds " + std::to_string(opt.gate.relative_bound));
    res.value = path_second_variation(a, c, dir);
    return res;
  }
  const StabilityOperator L(a, c);
  const WeightedQuadrature& qd = L.quadrature();
  const TwoForm& f = L.curvature_form();
  const OneForm j = codifferential(a, f);
  std::vector<double> v(a.grid().n(), 0.0);
  for (int k = 0; k < a.grid().n(); ++k) v[k] = detail::v_component(dir, k);
  const OneForm ivf = interior_vector(f, v);
  double inner = 0.0;
  if (!dir.theta.data().empty()) {
    inner = L.form(dir.theta, dir.theta);
    inner -= 2.0 * dir.q * weighted_inner(j, dir.theta, qd);
    inner -= weighted_inner(ivf, dir.theta, qd);
  }
  inner -= dir.q * dir.q * weighted_inner(j, j, qd) + 0.5 * weighted_inner(ivf, ivf, qd);
  res.value = 2.0 * c.t0 * inner;
  res.soliton_formula = true;
  return res;
}

inline double second_variation(const ConnectionField& a, const Center& c, const VariationDirection& dir,
                               const SecondVariationOptions& opt = {}) {
  return second_variation_report(a, c, dir, opt).value;
}

/// Lattice check of L J = J and L(i_{e_k} F) = i_{e_k} F / 2, which hold at
/// solitons of the given center. Defects are relative G-norms.
struct EigenRelationReport {
  double soliton_residual = 0.0;             ///< ||S||_G / ||F||_G
  double j_defect = 0.0;                     ///< ||L J - J||_G / ||J||_G
  std::vector<double> ivf_defects;           ///< ||L i_k F - i_k F / 2||_G / ||i_k F||_G
  double constant = 0.0;                     ///< max defect / soliton residual
};

inline EigenRelationReport eigen_relations(const ConnectionField& a, const Center& c) {
  const StabilityOperator L(a, c);
  const WeightedQuadrature& q = L.quadrature();
  const TwoForm& f = L.curvature_form();
  EigenRelationReport rep;
  const double fn = weighted_norm(f, q);
  rep.soliton_residual = fn > 0 ? weighted_norm(weighted_divergence(a, f, c), q) / fn : 0.0;
  auto rel = [&](const OneForm& v, double eig) {
    const double nv = weighted_norm(v, q);
    if (nv == 0.0) return 0.0;
    OneForm d = L.apply(v);
    d.axpy(-eig, v);
    return weighted_norm(d, q) / nv;
  };
  rep.j_defect = rel(codifferential(a, f), 1.0);
  double worst = rep.j_defect;
  for (int k = 0; k < a.grid().n(); ++k) {
    std::vector<double> e(a.grid().n(), 0.0);
    e[k] = 1.0;
    rep.ivf_defects.push_back(rel(interior_vector(f, e), 0.5));
    worst = std::max(worst, rep.ivf_defects.back());
  }
  rep.constant = rep.soliton_residual > 0 ? worst / rep.soliton_residual : 0.0;
  return rep;
}

}  // namespace ymlab
