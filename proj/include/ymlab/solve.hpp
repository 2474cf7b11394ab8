#pragma once

/// Soliton finder: Gauss-Newton on the weighted residual energy
/// E(A) = ||J - X/(2 t0)||_G^2 with matrix-free directional-difference
/// Jacobians, CGLS inner solves in the G-pairing and Armijo backtracking.

#include <cmath>
#include <json.hpp>
#include <limits>
#include <string>
#include <vector>

#include "ymlab/variations.hpp"

namespace ymlab {

enum class JacobianMode { central, richardson, analytic };

struct SolverConfig {
  Center center = Center::origin(1);
  int max_outer = 50;
  int max_cg = 60;
  double cg_tol = 1e-3;             ///< relative reduction of the normal-equation residual
  double fd_probe = 1e-5;
  double target_residual = 1e-8;    ///< stop once ||S||_G falls below this
  JacobianMode jacobian = JacobianMode::central;
  int stagnation_window = 5;
  double stagnation_decrease = 1e-10;
  double armijo = 1e-4;
  int max_backtracks = 30;

  void validate(int n) const {
    if (!(target_residual > 0.0)) throw DomainError("target_residual must be positive");
    if (!(fd_probe >= 1e-7 && fd_probe <= 1e-3)) throw DomainError("fd_probe must lie in [1e-7, 1e-3]");
    if (max_outer < 0 || max_cg < 1) throw DomainError("iteration limits must be positive");
    if (static_cast<int>(center.x0.size()) != n) throw DimensionError("solver center dimension does not match grid");
  }
};

struct SolveReport {
  bool converged = false;
  bool stagnated = false;
  int iterations = 0;
  int cg_iterations = 0;
  double initial_energy = 0.0;
  double residual_energy = 0.0;
  double residual_norm = 0.0;     ///< ||S||_G
  double curvature_mass = 0.0;    ///< sum W |F|^2
  std::vector<double> history;    ///< residual energy after each accepted step
  std::string message;
};

inline double residual_energy(const ConnectionField& a, const Center& c) {
  const OneForm s = soliton_residual(a, c);
  return weighted_inner(s, s, c);
}

inline double curvature_mass(const ConnectionField& a, const Center& c) {
  const TwoForm f = curvature(a);
  return weighted_inner(f, f, c);
}

/// Matrix-free derivative of A -> S(A) at a fixed connection.
class ResidualJacobian {
 public:
  ResidualJacobian(const ConnectionField& a, const Center& c, const SolverConfig& cfg)
      : a_(a), c_(c), cfg_(cfg), q_(a.grid(), c), anorm_(weighted_norm(a, q_)) {}

  OneForm apply(const OneForm& theta) const {
    if (cfg_.jacobian == JacobianMode::analytic) {
      OneForm out = weighted_divergence(a_, d_nabla_one(a_, theta), c_);
      out -= R_apply(curvature(a_), theta);
      return out;
    }
    const double tn = weighted_norm(theta, q_);
    if (tn == 0.0) return OneForm(a_.grid(), a_.rank());
    const double eps = cfg_.fd_probe * (anorm_ > 0.0 ? anorm_ : 1.0) / tn;
    auto diff = [&](double e) {
      ConnectionField p = a_, m = a_;
      p.axpy(e, as_connection(theta));
      m.axpy(-e, as_connection(theta));
      OneForm d = soliton_residual(p, c_);
      d -= soliton_residual(m, c_);
      d *= 1.0 / (2.0 * e);
      return d;
    };
    OneForm d1 = diff(eps);
    if (cfg_.jacobian == JacobianMode::central) return d1;
    OneForm d2 = diff(2.0 * eps);
    d1 *= 4.0 / 3.0;
    d1.axpy(-1.0 / 3.0, d2);
    return d1;
  }

  const WeightedQuadrature& quadrature() const { return q_; }

 private:
  const ConnectionField& a_;
  Center c_;
  SolverConfig cfg_;
  WeightedQuadrature q_;
  double anorm_;
};

namespace detail {

/// CGLS for min ||J x + s||_G. The derivative of S is L / t0, which is
/// self-adjoint in the G-pairing, so J^T = J.
inline OneForm cgls(const ResidualJacobian& jac, const OneForm& s, int max_it, double tol, int& iterations) {
  const auto& q = jac.quadrature();
  OneForm x(s.grid(), s.rank());
  OneForm r = s;
  r *= -1.0;
  OneForm z = jac.apply(r);
  OneForm p = z;
  double gamma = weighted_inner(z, z, q);
  const double gamma0 = gamma;
  for (int it = 0; it < max_it && gamma > 0.0; ++it) {
    ++iterations;
    const OneForm w = jac.apply(p);
    const double ww = weighted_inner(w, w, q);
    if (!(ww > 0.0)) break;
    const double alpha = gamma / ww;
    x.axpy(alpha, p);
    r.axpy(-alpha, w);
    z = jac.apply(r);
    const double gnew = weighted_inner(z, z, q);
    if (std::sqrt(gnew) <= tol * std::sqrt(gamma0)) break;
    p *= gnew / gamma;
    p += z;
    gamma = gnew;
  }
  return x;
}

}  // namespace detail

struct SolveResult {
  ConnectionField field;
  SolveReport report;
};

inline SolveResult find_soliton(const ConnectionField& seed, const SolverConfig& cfg) {
  cfg.validate(seed.grid().n());
  check_center(seed.grid(), cfg.center);
  const Center& c = cfg.center;
  SolveResult out{seed, {}};
  SolveReport& rep = out.report;
  ConnectionField& a = out.field;
  OneForm s = soliton_residual(a, c);
  double e = weighted_inner(s, s, c);
  rep.initial_energy = e;
  rep.history.push_back(e);
  for (int outer = 0;; ++outer) {
    if (std::sqrt(e) <= cfg.target_residual) {
      rep.converged = true;
      rep.message = "target residual reached";
      break;
    }
    if (outer >= cfg.max_outer) {
      rep.message = "maximum outer iterations reached";
      break;
    }
    const ResidualJacobian jac(a, c, cfg);
    const OneForm step = detail::cgls(jac, s, cfg.max_cg, cfg.cg_tol, rep.cg_iterations);
    // E(A + alpha d) ~ E + 2 alpha <S, J d>
    const double slope = 2.0 * weighted_inner(s, jac.apply(step), c);
    if (!(slope < 0.0)) {
      rep.stagnated = true;
      rep.message = "Gauss-Newton step is not a descent direction";
      break;
    }
    double alpha = 1.0;
    bool accepted = false;
    ConnectionField trial;
    OneForm ts;
    double te = 0.0;
    for (int bt = 0; bt <= cfg.max_backtracks; ++bt, alpha *= 0.5) {
      trial = a;
      trial.axpy(alpha, as_connection(step));
      ts = soliton_residual(trial, c);
      te = weighted_inner(ts, ts, c);
      if (te <= e + cfg.armijo * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      rep.stagnated = true;
      rep.message = "line search failed";
      break;
    }
    a = std::move(trial);
    s = std::move(ts);
    e = te;
    rep.history.push_back(e);
    rep.iterations = outer + 1;
    const std::size_t w = static_cast<std::size_t>(cfg.stagnation_window);
    if (rep.history.size() > w) {
      const double old = rep.history[rep.history.size() - 1 - w];
      if (old - e < cfg.stagnation_decrease * old) {
        rep.stagnated = true;
        rep.message = "residual energy stagnated";
        break;
      }
    }
  }
  rep.residual_energy = e;
  rep.residual_norm = std::sqrt(e);
  rep.curvature_mass = curvature_mass(a, c);
  return out;
}

inline nlohmann::json solve_report_json(const SolveReport& r) {
  return {{"converged", r.converged},
          {"stagnated", r.stagnated},
          {"iterations", r.iterations},
          {"cg_iterations", r.cg_iterations},
          {"initial_energy", r.initial_energy},
          {"residual_energy", r.residual_energy},
          {"residual_norm", r.residual_norm},
          {"curvature_mass", r.curvature_mass},
          {"history", r.history},
          {"message", r.message}};
}

}  // namespace ymlab
