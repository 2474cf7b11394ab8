#pragma once

/// Gaussian-weighted quadrature: the heat-kernel weight, the F-functional and
/// its center gradient, the entropy, the monotonicity quantity Phi and the
/// Yang-Mills energy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "ymlab/fields.hpp"
#include "ymlab/gauge.hpp"

namespace ymlab {

/// G(x) = (4 pi t0)^{-n/2} exp(-|x - x0|^2 / (4 t0))
inline double gaussian_weight(std::span<const double> x, const Center& c) {
  if (x.size() != c.x0.size()) throw DimensionError("point dimension does not match center");
  double d2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) d2 += (x[k] - c.x0[k]) * (x[k] - c.x0[k]);
  return std::pow(4.0 * std::numbers::pi * c.t0, -0.5 * static_cast<double>(x.size())) * std::exp(-d2 / (4.0 * c.t0));
}

/// Tensor trapezoid factor h^n * prod_k (1/2 on end points).
inline double trapezoid_factor(const Grid& g, std::size_t p) {
  double w = std::pow(g.h(), g.n());
  const int m = g.m();
  for (int k = g.n() - 1; k >= 0; --k) {
    const int i = static_cast<int>(p % m);
    if (i == 0 || i == m - 1) w *= 0.5;
    p /= m;
  }
  return w;
}

/// Deterministic weighted sum sum_p w_p v_p.
inline double weighted_sum(std::span<const double> w, std::span<const double> v) {
  std::vector<double> prod(w.size());
  for (std::size_t p = 0; p < w.size(); ++p) prod[p] = w[p] * v[p];
  return pairwise_sum(prod);
}

/// Per-point quadrature weights W_p = trapezoid(p) * G(x_p).
struct WeightedQuadrature {
  Grid grid;
  Center center;
  std::vector<double> weights;
  double lost_mass = 0.0;          ///< analytic Gaussian mass outside the box
  bool truncation_warning = false;  ///< R < 5 sqrt(t0) or center too close to the boundary

  WeightedQuadrature() = default;
  WeightedQuadrature(const Grid& g, const Center& c) : grid(g), center(c) {
    check_center(g, c);
    const int n = g.n();
    weights.resize(g.points());
    const double norm = std::pow(4.0 * std::numbers::pi * c.t0, -0.5 * n);
    // separable: exp(-|y|^2/4t0) = prod_k exp(-y_k^2/4t0)
    std::vector<std::vector<double>> axis(n, std::vector<double>(g.m()));
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < g.m(); ++i) {
        const double y = g.coordinate(i) - c.x0[k];
        axis[k][i] = std::exp(-y * y / (4.0 * c.t0));
      }
    parallel_for(g.points(), [&](std::size_t b, std::size_t e) {
      for (std::size_t p = b; p < e; ++p) {
        double w = norm * trapezoid_factor(g, p);
        std::size_t q = p;
        for (int k = n - 1; k >= 0; --k) {
          w *= axis[k][q % g.m()];
          q /= g.m();
        }
        weights[p] = w;
      }
    });
    double inside = 1.0;
    const double s = 2.0 * std::sqrt(c.t0);
    for (int k = 0; k < n; ++k)
      inside *= 0.5 * (std::erf((g.R() - c.x0[k]) / s) + std::erf((g.R() + c.x0[k]) / s));
    lost_mass = 1.0 - inside;
    truncation_warning = g.R() < 5.0 * std::sqrt(c.t0) || lost_mass > 1e-6;
  }

  double integrate(std::span<const double> values) const { return weighted_sum(weights, values); }
  double mass() const { return pairwise_sum(weights); }
};

struct FunctionalReport {
  double value = 0.0;
  double lost_mass = 0.0;
  bool truncation_warning = false;
};

/// F_{x0,t0}(A) = t0^2 * sum_p W_p |F|^2(x_p)
inline FunctionalReport f_functional_report(const TwoForm& f, const Center& c) {
  const WeightedQuadrature q(f.grid(), c);
  return {c.t0 * c.t0 * q.integrate(pointwise_norm2(f)), q.lost_mass, q.truncation_warning};
}

inline double f_functional(const ConnectionField& a, const Center& c) {
  return f_functional_report(curvature(a), c).value;
}

struct CenterGradient {
  double dt0 = 0.0;
  std::vector<double> dx0;
};

namespace detail {
/// Value and exact center derivatives of t0^2 sum trap(p) |F|^2 G(x_p) for a
/// precomputed |F|^2 array. Optionally returns the second derivatives too
/// (row-major (n+1)^2 Hessian in (x0, t0)).
inline double functional_with_gradient(const Grid& g, std::span<const double> f2, const Center& c, CenterGradient* grad,
                                       std::vector<double>* hess = nullptr) {
  const int n = g.n();
  const double t0 = c.t0;
  const double norm = std::pow(4.0 * std::numbers::pi * t0, -0.5 * n);
  const std::size_t np = g.points();
  const int nv = n + 1;
  const int slots = 1 + (grad ? nv : 0) + (hess ? nv * nv : 0);
  std::vector<std::vector<double>> terms(slots, std::vector<double>(np, 0.0));
  std::vector<double> y(n), x(n);
  for (std::size_t p = 0; p < np; ++p) {
    if (f2[p] == 0.0) continue;
    g.coords(p, x);
    double d2 = 0.0;
    for (int k = 0; k < n; ++k) {
      y[k] = x[k] - c.x0[k];
      d2 += y[k] * y[k];
    }
    const double G = norm * std::exp(-d2 / (4.0 * t0)) * trapezoid_factor(g, p) * f2[p];
    terms[0][p] = t0 * t0 * G;
    if (!grad) continue;
    // derivatives of Phi = t0^2 G: d/dx0_k = t0 y_k G / 2, d/dt0 = ((4-n)/2 t0 + d2/4) G
    for (int k = 0; k < n; ++k) terms[1 + k][p] = 0.5 * t0 * y[k] * G;
    const double a = 0.5 * (4.0 - n) * t0 + 0.25 * d2;
    terms[1 + n][p] = a * G;
    if (!hess) continue;
    const int base = 1 + nv;
    // dG/dt0 = G (-n/(2 t0) + d2/(4 t0^2)); dG/dx0_k = G y_k/(2 t0)
    const double gt = -0.5 * n / t0 + d2 / (4.0 * t0 * t0);
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        // d/dx0_l of (t0 y_k G / 2) = t0/2 (-delta_kl G + y_k y_l G / (2 t0))
        terms[base + k * nv + l][p] = 0.5 * t0 * ((k == l ? -1.0 : 0.0) + y[k] * y[l] / (2.0 * t0)) * G;
      }
    for (int k = 0; k < n; ++k) {
      // d/dt0 of (t0 y_k G / 2) = y_k G / 2 + t0 y_k G gt / 2
      const double v = 0.5 * y[k] * G * (1.0 + t0 * gt);
      terms[base + k * nv + n][p] = v;
      terms[base + n * nv + k][p] = v;
    }
    // d/dt0 of (a G) = (4-n)/2 G + a G gt
    terms[base + n * nv + n][p] = (0.5 * (4.0 - n) + a * gt) * G;
  }
  if (grad) {
    grad->dx0.assign(n, 0.0);
    for (int k = 0; k < n; ++k) grad->dx0[k] = pairwise_sum(terms[1 + k]);
    grad->dt0 = pairwise_sum(terms[1 + n]);
  }
  if (hess) {
    hess->assign(nv * nv, 0.0);
    for (int k = 0; k < nv * nv; ++k) (*hess)[k] = pairwise_sum(terms[1 + nv + k]);
  }
  return pairwise_sum(terms[0]);
}
}  // namespace detail

/// Exact derivatives of the discrete F-functional with respect to (t0, x0):
/// dF/dt0 = sum W ((4-n)/2 t0 + |x-x0|^2/4) |F|^2, dF/dx0_k = sum W t0 (x-x0)^k |F|^2 / 2.
inline CenterGradient f_gradient_center(const ConnectionField& a, const Center& c) {
  check_center(a.grid(), c);
  CenterGradient grad;
  detail::functional_with_gradient(a.grid(), pointwise_norm2(curvature(a)), c, &grad);
  return grad;
}

struct EntropyConfig {
  int max_iterations = 200;
  double gradient_tolerance = 1e-9;   ///< relative, on the (x0, log t0) gradient
  double shell_threshold = 1e-6;      ///< outer-shell mean |F|^2 triggering the +inf sentinel
  double offset_fraction = 0.25;      ///< the two offset starts sit at +-fraction * R * e_1
  std::vector<double> log_t0_starts = {-1.0, 0.0, 1.0};
};

struct EntropyResult {
  double value = 0.0;  ///< +infinity for non-decaying curvature
  std::optional<Center> argmax_center;
  int starts_tried = 0;
  bool converged = false;
  bool clamp_active = false;  ///< the best point sits on the t0 or box clamp
  double shell_mean = 0.0;
  std::string diagnostic;

  bool divergent() const { return std::isinf(value); }
};

/// Mean of |F|^2 over the outermost layer of grid points.
inline double outer_shell_mean(const Grid& g, std::span<const double> f2) {
  std::vector<double> vals;
  for (std::size_t p = 0; p < g.points(); ++p)
    if (g.boundary_distance(p) == 0) vals.push_back(f2[p]);
  return vals.empty() ? 0.0 : pairwise_sum(vals) / static_cast<double>(vals.size());
}

namespace detail {

struct AscentOutcome {
  std::vector<double> z;  // (x0, log t0)
  double value = -1.0;
  bool converged = false;
  bool clamped = false;
};

/// Projected quasi-Newton (BFGS) ascent of F in z = (x0, s = log t0) with
/// Armijo backtracking. Every evaluated value is reported through probe.
template <class Probe>
AscentOutcome ascend(const Grid& g, std::span<const double> f2, std::vector<double> z, const EntropyConfig& cfg,
                     Probe&& probe) {
  const int n = g.n(), nv = n + 1;
  const double smin = std::log(g.h() * g.h()), smax = std::log(std::pow(g.R() / 5.0, 2));
  auto project = [&](std::vector<double>& v) {
    bool hit = false;
    for (int k = 0; k < n; ++k) {
      const double c = std::clamp(v[k], -g.R(), g.R());
      hit |= c != v[k];
      v[k] = c;
    }
    const double s = std::clamp(v[n], smin, std::max(smin, smax));
    hit |= s != v[n];
    v[n] = s;
    return hit;
  };
  auto eval = [&](const std::vector<double>& v, std::vector<double>& grad) {
    Center c(std::vector<double>(v.begin(), v.begin() + n), std::exp(v[n]));
    CenterGradient cg;
    const double val = functional_with_gradient(g, f2, c, &cg);
    grad.assign(nv, 0.0);
    for (int k = 0; k < n; ++k) grad[k] = cg.dx0[k];
    grad[n] = c.t0 * cg.dt0;
    probe(c, val);
    return val;
  };
  AscentOutcome out;
  project(z);
  std::vector<double> grad, gnew, znew(nv), dir(nv);
  double f = eval(z, grad);
  // inverse Hessian approximation of -F, started at a scaled identity
  std::vector<double> H(nv * nv, 0.0);
  for (int k = 0; k < nv; ++k) H[k * nv + k] = 1.0;
  bool scaled = false;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    // projected gradient norm: ignore components pushing against active bounds
    double gn = 0.0;
    for (int k = 0; k < nv; ++k) {
      const double lo = k < n ? -g.R() : smin, hi = k < n ? g.R() : smax;
      if ((z[k] <= lo && grad[k] < 0) || (z[k] >= hi && grad[k] > 0)) continue;
      gn += grad[k] * grad[k];
    }
    gn = std::sqrt(gn);
    if (gn <= cfg.gradient_tolerance * (std::abs(f) + 1e-300) || f == 0.0) {
      out.converged = true;
      break;
    }
    if (!scaled) {
      const double s0 = 0.1 / std::max(gn, 1e-300) * (std::abs(f) + 1e-300);
      for (int k = 0; k < nv; ++k) H[k * nv + k] = std::min(s0, 1.0);
      scaled = true;
    }
    for (int i = 0; i < nv; ++i) {
      dir[i] = 0.0;
      for (int j = 0; j < nv; ++j) dir[i] += H[i * nv + j] * grad[j];
    }
    double slope = 0.0;
    for (int k = 0; k < nv; ++k) slope += dir[k] * grad[k];
    if (!(slope > 0.0)) {
      for (int k = 0; k < nv; ++k) {
        std::fill(H.begin() + k * nv, H.begin() + (k + 1) * nv, 0.0);
        H[k * nv + k] = 1.0 / std::max(gn, 1e-300) * (std::abs(f) + 1e-300) * 0.1;
        dir[k] = H[k * nv + k] * grad[k];
      }
      slope = 0.0;
      for (int k = 0; k < nv; ++k) slope += dir[k] * grad[k];
    }
    double step = 1.0, fnew = -1.0;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      for (int k = 0; k < nv; ++k) znew[k] = z[k] + step * dir[k];
      project(znew);
      fnew = eval(znew, gnew);
      double gain = 0.0;
      for (int k = 0; k < nv; ++k) gain += grad[k] * (znew[k] - z[k]);
      if (fnew >= f + 1e-4 * gain && fnew >= f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      out.converged = true;  // no ascent direction left at this resolution
      break;
    }
    std::vector<double> sv(nv), yv(nv);
    double sy = 0.0;
    for (int k = 0; k < nv; ++k) {
      sv[k] = znew[k] - z[k];
      yv[k] = -(gnew[k] - grad[k]);  // gradient of -F
      sy += sv[k] * yv[k];
    }
    const double rel = std::abs(fnew - f) / (std::abs(f) + 1e-300);
    z = znew;
    f = fnew;
    grad = gnew;
    if (sy > 1e-300) {
      std::vector<double> Hy(nv, 0.0);
      double yHy = 0.0;
      for (int i = 0; i < nv; ++i) {
        for (int j = 0; j < nv; ++j) Hy[i] += H[i * nv + j] * yv[j];
        yHy += yv[i] * Hy[i];
      }
      for (int i = 0; i < nv; ++i)
        for (int j = 0; j < nv; ++j)
          H[i * nv + j] += (sy + yHy) * sv[i] * sv[j] / (sy * sy) - (Hy[i] * sv[j] + sv[i] * Hy[j]) / sy;
    }
    if (rel < 1e-15) {
      out.converged = true;
      break;
    }
  }
  out.z = z;
  out.value = f;
  out.clamped = project(z) || z[n] <= smin + 1e-12 || z[n] >= smax - 1e-12;
  for (int k = 0; k < n; ++k) out.clamped |= std::abs(z[k]) >= g.R() - 1e-12;
  return out;
}

}  // namespace detail

/// lambda(A) = sup over centers of F_{x0,t0}(A), approximated by multistart
/// ascent. t0 is clamped to [h^2, (R/5)^2] and x0 to the box.
inline EntropyResult entropy(const TwoForm& f, const EntropyConfig& cfg = {}) {
  const Grid& g = f.grid();
  const int n = g.n();
  const auto f2 = pointwise_norm2(f);
  EntropyResult res;
  res.shell_mean = outer_shell_mean(g, f2);
  if (res.shell_mean > cfg.shell_threshold) {
    res.value = std::numeric_limits<double>::infinity();
    res.diagnostic = "curvature does not decay: outer-shell mean |F|^2 = " + std::to_string(res.shell_mean) +
                     " exceeds " + std::to_string(cfg.shell_threshold);
    return res;
  }
  double fmax = 0.0;
  std::size_t pmax = g.center_point();
  for (std::size_t p = 0; p < f2.size(); ++p)
    if (f2[p] > fmax) fmax = f2[p], pmax = p;
  if (fmax == 0.0) {
    res.value = 0.0;
    res.argmax_center = Center::origin(n);
    res.converged = true;
    res.starts_tried = 0;
    res.diagnostic = "flat connection";
    return res;
  }
  std::vector<std::vector<double>> starts;
  std::vector<double> xmax(n);
  g.coords(pmax, xmax);
  for (double s : cfg.log_t0_starts) {
    std::vector<double> z(n + 1, 0.0);
    z[n] = s;
    starts.push_back(z);
  }
  for (double s : cfg.log_t0_starts) {
    std::vector<double> z(xmax);
    z.push_back(s);
    starts.push_back(z);
  }
  for (double sign : {1.0, -1.0}) {
    std::vector<double> z(n + 1, 0.0);
    z[0] = sign * cfg.offset_fraction * g.R();
    starts.push_back(z);
  }
  double best = -1.0;
  Center best_c;
  bool best_conv = false, best_clamped = false;
  auto probe = [&](const Center& c, double v) {
    if (v > best) best = v, best_c = c;
  };
  for (const auto& z : starts) {
    ++res.starts_tried;
    const auto out = detail::ascend(g, f2, z, cfg, probe);
    if (out.value >= best - 1e-15 * std::abs(best)) {
      best_conv = out.converged;
      best_clamped = out.clamped;
    }
  }
  res.value = best;
  res.argmax_center = best_c;
  res.converged = best_conv;
  res.clamp_active = best_clamped;
  if (best_clamped) res.diagnostic = "maximum sits on the t0/box clamp";
  return res;
}

inline EntropyResult entropy(const ConnectionField& a, const EntropyConfig& cfg = {}) { return entropy(curvature(a), cfg); }

/// Phi_{x0,t0}(A(t)) = (t0 - t)^2 sum W_{x0,t0-t} |F|^2
inline double phi(const TwoForm& f, const Center& c, double t) {
  if (!(t < c.t0)) throw DomainError("phi requires t < t0");
  return f_functional_report(f, Center(c.x0, c.t0 - t)).value;
}

inline double phi(const ConnectionField& a, const Center& c, double t) { return phi(curvature(a), c, t); }

/// YM(A) = 1/2 sum trap(p) |F|^2 (truncated to the box)
inline double ym_energy(const TwoForm& f) {
  const auto f2 = pointwise_norm2(f);
  const Grid& g = f.grid();
  std::vector<double> w(g.points());
  for (std::size_t p = 0; p < g.points(); ++p) w[p] = trapezoid_factor(g, p);
  return 0.5 * weighted_sum(w, f2);
}

inline double ym_energy(const ConnectionField& a) { return ym_energy(curvature(a)); }

}  // namespace ymlab
