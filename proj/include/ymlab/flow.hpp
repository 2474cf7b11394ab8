#pragma once

/// Explicit integration of the Yang-Mills flow dA/dt = J(A) with frozen
/// boundary values, monotonicity diagnostics, parabolic blowup rescaling,
/// Type-I detection and the self-similarity check.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ymlab/archive.hpp"
#include "ymlab/fields.hpp"
#include "ymlab/functionals.hpp"
#include "ymlab/gauge.hpp"
#include "ymlab/variations.hpp"

namespace ymlab {

struct FlowDiagnostics {
  double t = 0.0;
  double dt = 0.0;  ///< size of the step that produced this sample (0 for the initial one)
  double sup_f = 0.0;
  double energy = 0.0;
  std::vector<double> phi;  ///< one per registered center
  double entropy = std::numeric_limits<double>::quiet_NaN();
};

struct FlowTrace {
  std::vector<double> times;
  std::vector<ConnectionField> snapshots;
  std::vector<FlowDiagnostics> diagnostics;  ///< aligned with snapshots
  std::vector<double> step_sizes;           ///< every accepted step
  std::vector<Center> centers;
  int halvings = 0;
  std::vector<std::string> violations;  ///< Phi increases beyond the slack
};

struct EnergyIncrease : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BlowupDetected : std::runtime_error {
  BlowupDetected(const std::string& what, double t, ConnectionField last, FlowTrace partial)
      : std::runtime_error(what), time(t), last_finite(std::move(last)), trace(std::move(partial)) {}
  double time;
  ConnectionField last_finite;
  FlowTrace trace;
};

/// Largest admissible explicit step cfl * h^2 / (2n).
inline double max_stable_dt(const Grid& g, double cfl = 0.5) { return cfl * g.h() * g.h() / (2.0 * g.n()); }

namespace detail {

/// J(A) with the frozen boundary layers zeroed. Four layers is the width
/// beyond which J coincides with minus the trapezoid adjoint of d_nabla_one,
/// so the semi-discrete flow is the exact gradient flow of ym_energy.
inline OneForm flow_velocity(const ConnectionField& a, int frozen) {
  OneForm v = codifferential(a, curvature(a));
  const Grid& g = a.grid();
  const std::size_t ps = v.point_stride();
  for (std::size_t p = 0; p < g.points(); ++p)
    if (g.boundary_distance(p) < frozen) std::fill(v.data().begin() + p * ps, v.data().begin() + (p + 1) * ps, 0.0);
  return v;
}

}  // namespace detail

/// One classical RK4 step of dA/dt = J, with values in the outer frozen
/// layers held fixed.
inline ConnectionField flow_step(const ConnectionField& a, double dt, double cfl = 0.5, int frozen = 4) {
  if (!(dt > 0.0)) throw DomainError("flow step must be positive");
  if (cfl > 0.5) throw DomainError("cfl must not exceed 0.5");
  if (frozen < 1) throw DomainError("at least the outermost layer must be frozen");
  if (dt > max_stable_dt(a.grid(), cfl) * (1.0 + 1e-12))
    throw DomainError("flow step " + std::to_string(dt) + " exceeds the explicit limit " +
                      std::to_string(max_stable_dt(a.grid(), cfl)));
  const OneForm k1 = detail::flow_velocity(a, frozen);
  ConnectionField s = a;
  s.axpy(0.5 * dt, as_connection(k1));
  const OneForm k2 = detail::flow_velocity(s, frozen);
  s = a;
  s.axpy(0.5 * dt, as_connection(k2));
  const OneForm k3 = detail::flow_velocity(s, frozen);
  s = a;
  s.axpy(dt, as_connection(k3));
  const OneForm k4 = detail::flow_velocity(s, frozen);
  ConnectionField out = a;
  out.axpy(dt / 6.0, as_connection(k1));
  out.axpy(dt / 3.0, as_connection(k2));
  out.axpy(dt / 3.0, as_connection(k3));
  out.axpy(dt / 6.0, as_connection(k4));
  if (!out.all_finite()) throw BlowupDetected("non-finite connection after flow step", 0.0, a, FlowTrace{});
  return out;
}

struct FlowConfig {
  double cfl = 0.5;
  double dt = 0.0;                  ///< initial step; 0 picks the CFL limit
  int snapshot_stride = 1;          ///< keep every k-th accepted step (and the last)
  std::vector<Center> centers;      ///< Phi centers, t0 > t_end
  int entropy_stride = 0;           ///< sample the entropy every k snapshots; 0 never
  EntropyConfig entropy;
  int frozen_layers = 4;
  int max_halvings = 20;
  double energy_slack = 1e-12;      ///< relative increase tolerated before halving
  double blowup_sup = 1e12;         ///< sup|F| treated as blowup
  double phi_slack = 1e-8;          ///< tolerated Phi increase, relative to max(1, Phi(0))
};

namespace detail {

inline FlowDiagnostics sample(const ConnectionField& a, double t, double dt, const FlowConfig& cfg, bool with_entropy) {
  const TwoForm f = curvature(a);
  FlowDiagnostics d;
  d.t = t;
  d.dt = dt;
  d.sup_f = sup_norm(f);
  d.energy = ym_energy(f);
  for (const auto& c : cfg.centers) d.phi.push_back(phi(f, c, t));
  if (with_entropy) d.entropy = entropy(f, cfg.entropy).value;
  return d;
}

}  // namespace detail

/// Integrates from t = 0 to t_end with adaptive steps: a step that raises
/// the Yang-Mills energy is retried at half size.
inline FlowTrace integrate(const ConnectionField& a0, double t_end, const FlowConfig& cfg = {}) {
  if (!(t_end >= 0.0)) throw DomainError("flow horizon must be nonnegative");
  if (cfg.snapshot_stride < 1) throw DomainError("snapshot stride must be positive");
  for (const auto& c : cfg.centers)
    if (!(c.t0 > t_end)) throw DomainError("Phi centers need t0 > t_end");
  const double cap = max_stable_dt(a0.grid(), cfg.cfl);
  double dt = cfg.dt > 0 ? std::min(cfg.dt, cap) : cap;
  FlowTrace tr;
  tr.centers = cfg.centers;
  int snaps = 0;
  auto record = [&](const ConnectionField& a, double t, double step) {
    const bool ent = cfg.entropy_stride > 0 && snaps % cfg.entropy_stride == 0;
    tr.times.push_back(t);
    tr.snapshots.push_back(a);
    tr.diagnostics.push_back(detail::sample(a, t, step, cfg, ent));
    if (snaps > 0)
      for (std::size_t k = 0; k < cfg.centers.size(); ++k) {
        const double prev = tr.diagnostics[snaps - 1].phi[k], now = tr.diagnostics[snaps].phi[k];
        if (now - prev > cfg.phi_slack * std::max(1.0, std::abs(tr.diagnostics[0].phi[k])))
          tr.violations.push_back("Phi for center " + std::to_string(k + 1) + " increases at t = " + std::to_string(t));
      }
    ++snaps;
  };
  ConnectionField a = a0;
  double t = 0.0;
  record(a, t, 0.0);
  double energy = ym_energy(a);
  long step_index = 0;
  while (t < t_end * (1.0 - 1e-14)) {
    const double h = std::min(dt, t_end - t);
    ConnectionField next;
    double e_next = 0.0;
    double hh = h;
    for (int halving = 0;; ++halving) {
      try {
        next = flow_step(a, hh, cfg.cfl, cfg.frozen_layers);
      } catch (const BlowupDetected& e) {
        throw BlowupDetected(e.what(), t, a, tr);
      }
      e_next = ym_energy(next);
      if (e_next <= energy * (1.0 + cfg.energy_slack) + 1e-300) {
        if (hh < h) dt = hh;
        break;
      }
      if (halving >= cfg.max_halvings)
        throw EnergyIncrease("ym_energy increases at t = " + std::to_string(t) + " for every step size tried");
      hh *= 0.5;
      ++tr.halvings;
    }
    a = std::move(next);
    energy = e_next;
    t += hh;
    tr.step_sizes.push_back(hh);
    ++step_index;
    const bool last = !(t < t_end * (1.0 - 1e-14));
    if (last || step_index % cfg.snapshot_stride == 0) record(a, t, hh);
    if (tr.diagnostics.back().sup_f > cfg.blowup_sup)
      throw BlowupDetected("sup|F| exceeded the blowup threshold", t, a, tr);
  }
  return tr;
}

struct MonotonicityReport {
  std::vector<double> times;  ///< interior snapshot times
  std::vector<double> lhs;    ///< centered dPhi/dt
  std::vector<double> rhs;    ///< -2 (t0 - t)^2 sum W |S_t|^2
  double max_abs_discrepancy = 0.0;
  double relative_discrepancy = 0.0;  ///< max |lhs - rhs| / max |rhs|
  double max_increase = 0.0;          ///< max Phi_{i+1} - Phi_i
  bool monotone = true;
  bool agrees = true;
  double tolerance = 5e-2;
};

/// Compares the derivative of Phi along a trace with the monotonicity
/// formula evaluated at each interior snapshot.
inline MonotonicityReport monotonicity_check(const FlowTrace& tr, const Center& c, double tolerance = 5e-2,
                                             double slack = 1e-8) {
  MonotonicityReport rep;
  rep.tolerance = tolerance;
  const std::size_t ns = tr.snapshots.size();
  std::vector<double> ph(ns);
  for (std::size_t i = 0; i < ns; ++i) ph[i] = phi(tr.snapshots[i], c, tr.times[i]);
  for (std::size_t i = 0; i + 1 < ns; ++i) rep.max_increase = std::max(rep.max_increase, ph[i + 1] - ph[i]);
  rep.monotone = rep.max_increase <= slack * std::max(1.0, std::abs(ph.empty() ? 0.0 : ph[0]));
  double scale = 0.0;
  for (std::size_t i = 1; i + 1 < ns; ++i) {
    const double t = tr.times[i];
    const Center ct(c.x0, c.t0 - t);
    const OneForm s = soliton_residual(tr.snapshots[i], ct);
    const double tau = c.t0 - t;
    const double rhs = -2.0 * tau * tau * weighted_inner(s, s, ct);
    // second-order centered difference on a possibly uneven stencil
    const double h1 = t - tr.times[i - 1], h2 = tr.times[i + 1] - t;
    const double lhs = -h2 / (h1 * (h1 + h2)) * ph[i - 1] + (h2 - h1) / (h1 * h2) * ph[i] +
                       h1 / (h2 * (h1 + h2)) * ph[i + 1];
    rep.times.push_back(t);
    rep.lhs.push_back(lhs);
    rep.rhs.push_back(rhs);
    rep.max_abs_discrepancy = std::max(rep.max_abs_discrepancy, std::abs(lhs - rhs));
    scale = std::max(scale, std::abs(rhs));
  }
  rep.relative_discrepancy = scale > 0 ? rep.max_abs_discrepancy / scale : rep.max_abs_discrepancy;
  rep.agrees = scale > 0 ? rep.relative_discrepancy <= tolerance : rep.max_abs_discrepancy <= slack;
  return rep;
}

struct RescaledSnapshot {
  ConnectionField field;
  double s = 0.0;  ///< rescaled time (t - T) / lambda^2
};

/// A^lambda_p(y) = lambda A_p(lambda y) on the same grid (cubic interpolation,
/// clamped at the box), at rescaled time s = (t - T) / lambda^2.
inline RescaledSnapshot rescale_blowup(const ConnectionField& a, double t, double lambda, double T) {
  if (!(lambda > 0.0)) throw DomainError("blowup scale must be positive");
  if (lambda == 1.0) return {a, t - T};
  return {rescale(a, 1.0 / lambda, a.grid()), (t - T) / (lambda * lambda)};
}

struct TypeOneReport {
  bool conclusive = false;
  bool type_one = false;
  double blowup_time = std::numeric_limits<double>::quiet_NaN();
  double slope = std::numeric_limits<double>::quiet_NaN();
  double C_fit = std::numeric_limits<double>::quiet_NaN();
  double quality = 0.0;  ///< coefficient of determination of the log-log fit
  std::string note;
};

/// T from the zero of the line through the last five samples of 1/sup|F|,
/// then a least-squares fit of log sup|F| against -log(T - t).
inline TypeOneReport type_one_detector(const std::vector<double>& t, const std::vector<double>& sup_f,
                                       double slope_window = 0.2) {
  TypeOneReport rep;
  if (t.size() != sup_f.size()) throw DimensionError("time and sup|F| series differ in length");
  std::vector<double> ts, ss;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (sup_f[i] > 0.0 && std::isfinite(sup_f[i])) ts.push_back(t[i]), ss.push_back(sup_f[i]);
  if (ts.size() < 6) {
    rep.note = "inconclusive: fewer than 6 samples with nonzero curvature";
    return rep;
  }
  auto linfit = [](const std::vector<double>& x, const std::vector<double>& y, double& a, double& b, double& r2) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
      sx += x[i], sy += y[i], sxx += x[i] * x[i], sxy += x[i] * y[i], syy += y[i] * y[i];
    const double den = n * sxx - sx * sx;
    b = den != 0 ? (n * sxy - sx * sy) / den : 0.0;
    a = (sy - b * sx) / n;
    const double vy = syy - sy * sy / n;
    double res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) res += std::pow(y[i] - a - b * x[i], 2);
    r2 = vy > 0 ? 1.0 - res / vy : 0.0;
  };
  std::vector<double> xt(ts.end() - 5, ts.end()), yi;
  for (auto it = ss.end() - 5; it != ss.end(); ++it) yi.push_back(1.0 / *it);
  double a, b, r2;
  linfit(xt, yi, a, b, r2);
  if (!(b < 0.0)) {
    rep.note = "inconclusive: 1/sup|F| is not decreasing, no blowup ahead";
    return rep;
  }
  rep.blowup_time = -a / b;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (ts[i] < rep.blowup_time) x.push_back(-std::log(rep.blowup_time - ts[i])), y.push_back(std::log(ss[i]));
  if (x.size() < 6) {
    rep.note = "inconclusive: fewer than 6 samples before the estimated blowup time";
    return rep;
  }
  linfit(x, y, a, b, r2);
  rep.conclusive = true;
  rep.slope = b;
  rep.C_fit = std::exp(a);
  rep.quality = r2;
  rep.type_one = std::abs(b - 1.0) <= slope_window;
  return rep;
}

inline TypeOneReport type_one_detector(const FlowTrace& tr, double slope_window = 0.2) {
  std::vector<double> s;
  for (const auto& d : tr.diagnostics) s.push_back(d.sup_f);
  return type_one_detector(tr.times, s, slope_window);
}

struct SelfSimilarityReport {
  double deviation = 0.0;  ///< max over lambda samples
  std::vector<double> lambdas;
  std::vector<double> times;
  std::vector<double> deviations;
};

/// Flows A (in radial gauge about x0) and compares A(t_lambda) with the
/// self-similar prediction lambda A(lambda (x - x0) + x0), where
/// t_lambda = t0 (1 - lambda^-2). Samples below 1 are mirrored to 1/lambda
/// since the flow only runs forward. Deviations are relative G-norms over the
/// points whose preimage lies in the box.
inline SelfSimilarityReport self_similarity_check(const ConnectionField& a, const Center& c,
                                                  std::vector<double> lambdas = {0.8, 0.9, 1.1},
                                                  const FlowConfig& cfg = {}) {
  SelfSimilarityReport rep;
  for (double& l : lambdas) {
    if (!(l > 0.0) || l == 1.0) throw DomainError("lambda samples must be positive and differ from 1");
    if (l < 1.0) l = 1.0 / l;
  }
  std::vector<double> order = lambdas;
  std::sort(order.begin(), order.end());
  const Grid& g = a.grid();
  const WeightedQuadrature q(g, c);
  ConnectionField cur = a;
  double t = 0.0;
  for (double l : order) {
    const double target = c.t0 * (1.0 - 1.0 / (l * l));
    FlowConfig fc = cfg;
    fc.centers.clear();
    fc.entropy_stride = 0;
    fc.snapshot_stride = 1 << 30;
    const FlowTrace tr = integrate(cur, target - t, fc);
    cur = tr.snapshots.back();
    t = target;
    const ConnectionField pred = resample(a, g, l, [&](std::span<const double> x, std::span<double> y) {
      for (std::size_t k = 0; k < x.size(); ++k) y[k] = l * (x[k] - c.x0[k]) + c.x0[k];
    });
    std::vector<double> diff(g.points(), 0.0), ref(g.points(), 0.0), x(g.n());
    for (std::size_t p = 0; p < g.points(); ++p) {
      g.coords(p, x);
      bool inside = true;
      for (int k = 0; k < g.n(); ++k) inside = inside && std::abs(l * (x[k] - c.x0[k]) + c.x0[k]) <= g.R();
      if (!inside) continue;
      for (int j = 0; j < g.n(); ++j)
        for (int e = 0; e < a.block(); ++e) {
          const double u = cur.at(p, j)[e], v = pred.at(p, j)[e];
          diff[p] += (u - v) * (u - v);
          ref[p] += v * v;
        }
    }
    const double dn = q.integrate(diff), rn = q.integrate(ref);
    const double dev = rn > 0 ? std::sqrt(dn / rn) : std::sqrt(dn);
    rep.lambdas.push_back(l);
    rep.times.push_back(t);
    rep.deviations.push_back(dev);
    rep.deviation = std::max(rep.deviation, dev);
  }
  return rep;
}

/// Writes manifest.json, one field archive per snapshot and diagnostics.csv
/// (t, dt, sup_F, ym_energy, phi_c1..., entropy).
inline void save_trace(const FlowTrace& tr, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["format"] = "ymlab-flow-trace";
  m["version"] = 1;
  m["times"] = tr.times;
  m["step_sizes"] = tr.step_sizes;
  m["halvings"] = tr.halvings;
  nlohmann::json centers = nlohmann::json::array();
  for (const auto& c : tr.centers) centers.push_back({{"x0", c.x0}, {"t0", c.t0}});
  m["centers"] = centers;
  std::vector<std::string> files;
  for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
    std::ostringstream name;
    name << "snapshot_" << std::setw(5) << std::setfill('0') << i;
    save_field(tr.snapshots[i], dir / name.str(), {{"t", tr.times[i]}});
    files.push_back(name.str() + ".json");
  }
  m["snapshots"] = files;
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
  std::ofstream csv(dir / "diagnostics.csv");
  csv << "t,dt,sup_F,ym_energy";
  for (std::size_t k = 0; k < tr.centers.size(); ++k) csv << ",phi_c" << (k + 1);
  csv << ",entropy\n";
  csv << std::setprecision(17);
  for (const auto& d : tr.diagnostics) {
    csv << d.t << ',' << d.dt << ',' << d.sup_f << ',' << d.energy;
    for (double v : d.phi) csv << ',' << v;
    csv << ',';
    if (!std::isnan(d.entropy)) csv << d.entropy;
    csv << '\n';
  }
  if (!csv) throw ArchiveError("cannot write " + (dir / "diagnostics.csv").string());
}

/// Reads a trace written by save_trace; snapshot digests are verified.
inline FlowTrace load_trace(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ArchiveError("cannot open " + (dir / "manifest.json").string());
  nlohmann::json m;
  in >> m;
  if (m.value("format", "") != "ymlab-flow-trace") throw ArchiveError("not a flow trace manifest");
  FlowTrace tr;
  tr.times = m["times"].get<std::vector<double>>();
  tr.step_sizes = m["step_sizes"].get<std::vector<double>>();
  tr.halvings = m["halvings"].get<int>();
  for (const auto& c : m["centers"]) tr.centers.emplace_back(c["x0"].get<std::vector<double>>(), c["t0"].get<double>());
  for (const auto& f : m["snapshots"]) tr.snapshots.push_back(load_field<FormKind::connection>(dir / f.get<std::string>()));
  std::ifstream csv(dir / "diagnostics.csv");
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    FlowDiagnostics d;
    d.t = std::stod(cells.at(0));
    d.dt = std::stod(cells.at(1));
    d.sup_f = std::stod(cells.at(2));
    d.energy = std::stod(cells.at(3));
    for (std::size_t k = 0; k < tr.centers.size(); ++k) d.phi.push_back(std::stod(cells.at(4 + k)));
    const std::string& e = cells.at(4 + tr.centers.size());
    if (!e.empty()) d.entropy = std::stod(e);
    tr.diagnostics.push_back(d);
  }
  if (tr.diagnostics.size() != tr.snapshots.size()) throw ArchiveError("diagnostics and snapshots differ in length");
  return tr;
}

}  // namespace ymlab
