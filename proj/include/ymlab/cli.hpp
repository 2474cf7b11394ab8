#pragma once

/// Command layer behind the ymlab executable. Each command reads a validated
/// JSON run configuration, dispatches to the owning module and returns a JSON
/// report plus an exit code:
///   0 success, 1 invalid configuration or I/O failure,
///   2 failed assertion (or a warning under --strict), 3 non-convergence.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "ymlab/archive.hpp"
#include "ymlab/catalog.hpp"
#include "ymlab/flow.hpp"
#include "ymlab/schema.hpp"
#include "ymlab/schema_text.hpp"
#include "ymlab/solve.hpp"
#include "ymlab/spectral.hpp"
#include "ymlab/verify.hpp"

namespace ymlab::cli {

enum ExitCode : int { ok = 0, config_error = 1, assertion_failed = 2, not_converged = 3 };

/// Configuration problem detected after schema validation (missing inputs,
/// inconsistent dimensions). Carries the JSON pointer of the culprit.
struct ConfigError : std::runtime_error {
  ConfigError(const std::string& path, const std::string& msg) : std::runtime_error(path + ": " + msg) {}
};

struct RunOptions {
  std::filesystem::path out_dir = ".";
  bool strict = false;
  std::optional<std::uint64_t> seed;  ///< overrides the config seed
};

struct CommandResult {
  int exit_code = ok;
  nlohmann::json report;
  std::string text;  ///< human-readable rendering (the verify table); empty otherwise
};

inline const nlohmann::json& run_schema() {
  static const nlohmann::json s = nlohmann::json::parse(schema_text);
  return s;
}

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"make-field", "curvature",    "functional", "entropy",
                                             "spectrum",   "flow",         "verify",     "find-soliton",
                                             "rescale",    "descent"};
  return c;
}

/// Replaces non-finite numbers by the strings "+inf", "-inf" and "nan" so
/// the report stays valid JSON.
inline nlohmann::json sanitize(const nlohmann::json& j) {
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
    return j;
  }
  if (j.is_array() || j.is_object()) {
    nlohmann::json out = j;
    for (auto it = out.begin(); it != out.end(); ++it) *it = sanitize(*it);
    return out;
  }
  return j;
}

namespace detail {

inline std::uint64_t seed_of(const nlohmann::json& cfg, const RunOptions& opt, const nlohmann::json& section) {
  if (opt.seed) return *opt.seed;
  if (section.is_object() && section.contains("seed")) return section["seed"].get<std::uint64_t>();
  return cfg.value("seed", std::uint64_t{1});
}

inline Grid grid_of(const nlohmann::json& cfg) {
  if (!cfg.contains("grid")) throw ConfigError("/grid", "required to construct a field");
  const auto& g = cfg["grid"];
  return Grid(g["n"].get<int>(), g["m"].get<int>(), g["R"].get<double>());
}

inline Center center_of(const nlohmann::json& c, int n, const std::string& path) {
  auto x0 = c["x0"].get<std::vector<double>>();
  if (static_cast<int>(x0.size()) != n)
    throw ConfigError(path + "/x0", "has " + std::to_string(x0.size()) + " entries, the grid has dimension " + std::to_string(n));
  return Center(std::move(x0), c["t0"].get<double>());
}

inline Center center_of(const nlohmann::json& cfg, int n) {
  return cfg.contains("center") ? center_of(cfg["center"], n, "/center") : Center::origin(n);
}

inline std::filesystem::path resolve_input(const std::string& p) {
  std::filesystem::path path(p);
  if (path.extension() != ".json") path.replace_extension(".json");
  return path;
}

inline ConnectionField make_field(const nlohmann::json& cfg, const RunOptions& opt) {
  const auto& f = cfg["field"];
  const std::string kind = f["kind"].get<std::string>();
  const int rank = cfg.value("rank", 2);
  if (kind == "descended") {
    if (!f.contains("inner")) throw ConfigError("/field/inner", "required for a descended field");
    const auto inner = load_field<FormKind::connection>(resolve_input(f["inner"].get<std::string>()));
    const int axis = f.value("axis", inner.grid().n());
    if (axis > inner.grid().n()) throw ConfigError("/field/axis", "exceeds the dimension of the inner field");
    return catalog::descended(inner, axis);
  }
  const Grid g = grid_of(cfg);
  const std::uint64_t seed = seed_of(cfg, opt, f);
  if (kind == "flat") return catalog::flat(g, rank);
  if (kind == "pure-gauge") return catalog::pure_gauge(g, rank, seed, f.value("amplitude", 0.5), f.value("envelope", 1.0));
  if (kind == "abelian-linear") {
    if (!f.contains("B")) throw ConfigError("/field/B", "required for an abelian-linear field");
    const auto rows = f["B"].get<std::vector<std::vector<double>>>();
    std::vector<double> b;
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != g.n() || static_cast<int>(rows.size()) != g.n())
        throw ConfigError("/field/B", "must be an n x n matrix");
      b.insert(b.end(), row.begin(), row.end());
    }
    std::vector<int> gen = f.value("generators", std::vector<int>{0, 1});
    for (int i = 0; i < g.n(); ++i)
      for (int j = 0; j < g.n(); ++j)
        if (b[i * g.n() + j] != -b[j * g.n() + i]) throw ConfigError("/field/B", "must be antisymmetric");
    if (gen[0] >= rank || gen[1] >= rank || gen[0] == gen[1])
      throw ConfigError("/field/generators", "must be two distinct indices below the rank");
    return catalog::abelian_linear(g, rank, b, gen[0], gen[1]);
  }
  catalog::SmoothSpec sp;
  sp.seed = seed;
  sp.amplitude = f.value("amplitude", sp.amplitude);
  sp.envelope = f.value("envelope", sp.envelope);
  sp.spread = f.value("spread", sp.spread);
  sp.bumps = f.value("bumps", sp.bumps);
  sp.abelian = f.value("abelian", sp.abelian);
  return catalog::random_smooth(g, rank, sp);
}

/// The input connection: an archive when "input" is given, otherwise the
/// "field" construction.
inline ConnectionField input_field(const nlohmann::json& cfg, const RunOptions& opt, const std::string& command) {
  if (cfg.contains("input")) return load_field<FormKind::connection>(resolve_input(cfg["input"].get<std::string>()));
  if (cfg.contains("field")) return make_field(cfg, opt);
  throw ConfigError("/input", "command " + command + " needs an input archive or a field specification");
}

inline std::filesystem::path output_base(const nlohmann::json& cfg, const RunOptions& opt, const std::string& fallback) {
  return opt.out_dir / cfg.value("output", fallback);
}

inline nlohmann::json center_json(const Center& c) { return {{"x0", c.x0}, {"t0", c.t0}}; }

inline void warn_truncation(const Grid& g, const Center& c, std::vector<std::string>& warnings) {
  const WeightedQuadrature q(g, c);
  if (q.truncation_warning)
    warnings.push_back("Gaussian weight not resolved by the box: lost mass " + std::to_string(q.lost_mass));
}

inline SolitonGate gate_of(const nlohmann::json& section) {
  SolitonGate gate;
  if (section.is_object()) gate.relative_bound = section.value("gate_bound", gate.relative_bound);
  return gate;
}

inline std::string verify_table(const VerifyBundle& b) {
  std::ostringstream os;
  os << std::left;
  os << "check                          gap          tolerance    result\n";
  auto row = [&](const std::string& name, double gap, double tol, bool pass) {
    os << name;
    for (std::size_t i = name.size(); i < 31; ++i) os << ' ';
    std::ostringstream g, t;
    g.precision(3);
    t.precision(3);
    g << std::scientific << gap;
    t << std::scientific << tol;
    os << g.str() << "    " << t.str() << "    " << (pass ? "PASS" : "FAIL") << '\n';
  };
  for (const auto& r : b.identities) row(r.name, r.relative_gap, r.tolerance, r.pass);
  for (std::size_t i = 0; i < b.paths.size(); ++i)
    row("path[" + std::to_string(i) + "]", b.paths[i].max_disagreement, 5e-2, b.paths[i].pass);
  os << "gap theorem: sup|F|^2 = " << b.gap.sup_f2 << " vs " << b.gap.threshold << " (" << b.gap.note << ")\n";
  os << "descent: " << b.descent.note << '\n';
  os << "near-soliton gate: " << (b.gated ? "passed" : "not passed, soliton-gated checks skipped") << '\n';
  os << "overall: " << (b.pass ? "PASS" : "FAIL") << '\n';
  return os.str();
}

}  // namespace detail

/// Runs one command on a configuration. Schema violations and configuration
/// errors propagate as exceptions; main() maps them to exit code 1.
inline CommandResult run_command(const std::string& command, const nlohmann::json& cfg, const RunOptions& opt = {}) {
  schema::require_valid(run_schema(), cfg);
  std::filesystem::create_directories(opt.out_dir);
  CommandResult res;
  nlohmann::json& rep = res.report;
  std::vector<std::string> warnings;
  rep["command"] = command;

  if (command == "make-field") {
    if (!cfg.contains("field")) throw ConfigError("/field", "required for make-field");
    const auto a = detail::make_field(cfg, opt);
    const auto path = save_field(a, detail::output_base(cfg, opt, "field"), {{"field", cfg["field"]}});
    const TwoForm f = curvature(a);
    rep["archive"] = path.filename().string();
    rep["grid"] = {{"n", a.grid().n()}, {"m", a.grid().m()}, {"R", a.grid().R()}};
    rep["rank"] = a.rank();
    rep["sup_f"] = sup_norm(f);
    rep["sup_f_interior"] = sup_norm(f, Region{4, -1.0});
  } else if (command == "curvature") {
    const auto a = detail::input_field(cfg, opt, command);
    const TwoForm f = curvature(a);
    const auto path = save_field(f, detail::output_base(cfg, opt, "curvature"));
    rep["archive"] = path.filename().string();
    rep["sup_f"] = sup_norm(f);
    rep["sup_f_interior"] = sup_norm(f, Region{4, -1.0});
    rep["bianchi_residual"] = bianchi_residual(a);
    rep["ym_energy"] = ym_energy(f);
  } else if (command == "functional") {
    const auto a = detail::input_field(cfg, opt, command);
    const Center c = detail::center_of(cfg, a.grid().n());
    const auto fr = f_functional_report(curvature(a), c);
    const auto grad = f_gradient_center(a, c);
    rep["center"] = detail::center_json(c);
    rep["value"] = fr.value;
    rep["lost_mass"] = fr.lost_mass;
    rep["gradient"] = {{"dt0", grad.dt0}, {"dx0", grad.dx0}};
    if (fr.truncation_warning) warnings.push_back("Gaussian weight not resolved by the box: lost mass " + std::to_string(fr.lost_mass));
  } else if (command == "entropy") {
    const auto a = detail::input_field(cfg, opt, command);
    EntropyConfig ec;
    if (cfg.contains("entropy")) {
      const auto& e = cfg["entropy"];
      ec.max_iterations = e.value("max_iterations", ec.max_iterations);
      ec.gradient_tolerance = e.value("gradient_tolerance", ec.gradient_tolerance);
      ec.shell_threshold = e.value("shell_threshold", ec.shell_threshold);
    }
    const auto er = entropy(a, ec);
    rep["value"] = er.value;
    rep["divergent"] = er.divergent();
    rep["argmax_center"] = er.argmax_center ? detail::center_json(*er.argmax_center) : nlohmann::json(nullptr);
    rep["converged"] = er.converged;
    rep["clamp_active"] = er.clamp_active;
    rep["starts_tried"] = er.starts_tried;
    rep["shell_mean"] = er.shell_mean;
    rep["diagnostic"] = er.diagnostic;
    if (er.clamp_active) warnings.push_back("entropy maximum sits on the search clamp");
    if (!er.divergent() && !er.converged) res.exit_code = not_converged;
  } else if (command == "spectrum") {
    const auto a = detail::input_field(cfg, opt, command);
    const Center c = detail::center_of(cfg, a.grid().n());
    SpectralConfig sc;
    const nlohmann::json s = cfg.value("spectral", nlohmann::json::object());
    sc.k = s.value("k", sc.k);
    sc.deflate = s.value("deflate", sc.deflate);
    sc.max_iterations = s.value("max_iterations", sc.max_iterations);
    sc.tolerance = s.value("tolerance", sc.tolerance);
    sc.guard = s.value("guard", sc.guard);
    sc.seed = detail::seed_of(cfg, opt, s);
    sc.require_gate = s.value("require_gate", sc.require_gate);
    sc.gate = detail::gate_of(s);
    const auto spec = lowest_spectrum(a, c, sc);
    std::optional<StabilityVerdict> verdict;
    if (!sc.deflate) {
      const auto forced = forced_eigenfields(a);
      std::vector<OneForm> ivf;
      for (std::size_t i = 1; i < forced.size(); ++i) ivf.push_back(forced[i].field);
      verdict = classify_spectrum(spec, forced[0].field, ivf, WeightedQuadrature(a.grid(), c));
    }
    rep["center"] = detail::center_json(c);
    rep["spectrum"] = spectrum_json(spec, verdict ? &*verdict : nullptr);
    detail::warn_truncation(a.grid(), c, warnings);
    if (!spec.converged) res.exit_code = not_converged;
  } else if (command == "flow") {
    const auto a = detail::input_field(cfg, opt, command);
    const int n = a.grid().n();
    if (!cfg.contains("flow")) throw ConfigError("/flow", "required for the flow command");
    const auto& fl = cfg["flow"];
    FlowConfig fc;
    fc.cfl = fl.value("cfl", fc.cfl);
    fc.dt = fl.value("dt", fc.dt);
    fc.snapshot_stride = fl.value("snapshot_stride", fc.snapshot_stride);
    fc.entropy_stride = fl.value("entropy_stride", fc.entropy_stride);
    fc.frozen_layers = fl.value("frozen_layers", fc.frozen_layers);
    const double t_end = fl["t_end"].get<double>();
    if (fl.contains("centers"))
      for (std::size_t i = 0; i < fl["centers"].size(); ++i) {
        Center c = detail::center_of(fl["centers"][i], n, "/flow/centers/" + std::to_string(i));
        if (!(c.t0 > t_end)) throw ConfigError("/flow/centers/" + std::to_string(i) + "/t0", "must exceed t_end");
        fc.centers.push_back(std::move(c));
      }
    const auto dir = detail::output_base(cfg, opt, "trace");
    FlowTrace tr;
    try {
      tr = integrate(a, t_end, fc);
    } catch (const BlowupDetected& b) {
      save_trace(b.trace, dir);
      rep["blowup"] = true;
      rep["blowup_time"] = b.time;
      rep["trace"] = dir.filename().string();
      rep["type_one"] = nullptr;
      const auto t1 = type_one_detector(b.trace);
      rep["type_one"] = {{"conclusive", t1.conclusive}, {"type_one", t1.type_one}, {"blowup_time", t1.blowup_time},
                         {"slope", t1.slope}};
      warnings.push_back("flow blew up before t_end");
      res.report = sanitize(rep);
      res.report["warnings"] = warnings;
      if (opt.strict) res.exit_code = assertion_failed;
      std::ofstream(opt.out_dir / "report.json") << res.report.dump(2) << '\n';
      return res;
    } catch (const EnergyIncrease& e) {
      rep["error"] = e.what();
      res.report = sanitize(rep);
      res.exit_code = not_converged;
      std::ofstream(opt.out_dir / "report.json") << res.report.dump(2) << '\n';
      return res;
    }
    save_trace(tr, dir);
    rep["blowup"] = false;
    rep["trace"] = dir.filename().string();
    rep["steps"] = tr.step_sizes.size();
    rep["halvings"] = tr.halvings;
    rep["final_time"] = tr.times.back();
    rep["energy"] = {{"initial", tr.diagnostics.front().energy}, {"final", tr.diagnostics.back().energy}};
    bool energy_monotone = true;
    for (std::size_t i = 1; i < tr.diagnostics.size(); ++i)
      energy_monotone = energy_monotone && tr.diagnostics[i].energy <= tr.diagnostics[i - 1].energy;
    rep["energy_monotone"] = energy_monotone;
    nlohmann::json mono = nlohmann::json::array();
    bool all_ok = energy_monotone && tr.violations.empty();
    for (const auto& c : tr.centers) {
      const auto m = monotonicity_check(tr, c);
      mono.push_back({{"center", detail::center_json(c)}, {"monotone", m.monotone}, {"agrees", m.agrees},
                      {"relative_discrepancy", m.relative_discrepancy}, {"max_increase", m.max_increase}});
      all_ok = all_ok && m.monotone && m.agrees;
    }
    rep["monotonicity"] = mono;
    rep["violations"] = tr.violations;
    if (!all_ok) res.exit_code = assertion_failed;
  } else if (command == "verify") {
    const auto a = detail::input_field(cfg, opt, command);
    VerifyOptions vo;
    const nlohmann::json v = cfg.value("verify", nlohmann::json::object());
    vo.V = v.value("V", vo.V);
    if (!vo.V.empty() && static_cast<int>(vo.V.size()) != a.grid().n())
      throw ConfigError("/verify/V", "must have one entry per grid dimension");
    vo.tolerance = v.value("tolerance", vo.tolerance);
    vo.flat_tolerance = v.value("flat_tolerance", vo.flat_tolerance);
    vo.descent_tolerance = v.value("descent_tolerance", vo.descent_tolerance);
    vo.path_checks = v.value("path_checks", vo.path_checks);
    vo.seed = detail::seed_of(cfg, opt, v);
    vo.gate = detail::gate_of(v);
    const auto b = verify_bundle(a, vo);
    rep["verification"] = b.json;
    res.text = detail::verify_table(b);
    detail::warn_truncation(a.grid(), Center::origin(a.grid().n()), warnings);
    if (!b.pass) res.exit_code = assertion_failed;
  } else if (command == "find-soliton") {
    const auto seed = detail::input_field(cfg, opt, command);
    SolverConfig sc;
    sc.center = Center::origin(seed.grid().n());
    if (cfg.contains("center")) sc.center = detail::center_of(cfg, seed.grid().n());
    const nlohmann::json s = cfg.value("solver", nlohmann::json::object());
    sc.max_outer = s.value("max_outer", sc.max_outer);
    sc.max_cg = s.value("max_cg", sc.max_cg);
    sc.cg_tol = s.value("cg_tol", sc.cg_tol);
    sc.fd_probe = s.value("fd_probe", sc.fd_probe);
    sc.target_residual = s.value("target_residual", sc.target_residual);
    sc.stagnation_window = s.value("stagnation_window", sc.stagnation_window);
    sc.stagnation_decrease = s.value("stagnation_decrease", sc.stagnation_decrease);
    const std::string jm = s.value("jacobian", std::string("central"));
    sc.jacobian = jm == "analytic" ? JacobianMode::analytic : jm == "richardson" ? JacobianMode::richardson : JacobianMode::central;
    const auto out = find_soliton(seed, sc);
    const auto path = save_field(out.field, detail::output_base(cfg, opt, "soliton"),
                                 {{"solver", solve_report_json(out.report)}});
    rep["archive"] = path.filename().string();
    rep["report"] = solve_report_json(out.report);
    rep["gate"] = soliton_gate(out.field, sc.center).passed;
    if (!out.report.converged) res.exit_code = not_converged;
  } else if (command == "rescale") {
    const auto a = detail::input_field(cfg, opt, command);
    if (!cfg.contains("rescale")) throw ConfigError("/rescale", "required for the rescale command");
    const auto& r = cfg["rescale"];
    const auto snap = rescale_blowup(a, r.value("t", 0.0), r["lambda"].get<double>(), r.value("T", 0.0));
    const auto path = save_field(snap.field, detail::output_base(cfg, opt, "rescaled"), {{"s", snap.s}});
    rep["archive"] = path.filename().string();
    rep["s"] = snap.s;
    rep["sup_f"] = sup_norm(curvature(snap.field));
  } else if (command == "descent") {
    const auto a = detail::input_field(cfg, opt, command);
    const nlohmann::json d = cfg.value("descent", nlohmann::json::object());
    const Center c = detail::center_of(cfg, a.grid().n());
    const auto dr = descent_check(a, d.value("tolerance", 1e-6), c, d.value("structure_tolerance", 1e-6));
    rep["descent"] = descent_json(dr);
  } else {
    throw ConfigError("/command", "unknown command " + command);
  }

  rep["warnings"] = warnings;
  if (opt.strict && !warnings.empty() && res.exit_code == ok) res.exit_code = assertion_failed;
  res.report = sanitize(rep);
  std::ofstream out(opt.out_dir / "report.json");
  out << res.report.dump(2) << '\n';
  if (!out) throw ArchiveError("cannot write " + (opt.out_dir / "report.json").string());
  return res;
}

/// run_command with every failure mapped onto the exit-code contract. The
/// report of a failed run carries "error" and, for schema violations, the
/// list of offending JSON pointers under "issues".
inline CommandResult execute(const std::string& command, const nlohmann::json& cfg, const RunOptions& opt = {}) {
  CommandResult res;
  auto fail = [&](int code, const std::string& kind, const std::string& what) {
    res.exit_code = code;
    res.report["command"] = command;
    res.report["error"] = {{"kind", kind}, {"message", what}};
  };
  try {
    return run_command(command, cfg, opt);
  } catch (const schema::SchemaViolation& e) {
    fail(config_error, "schema", e.what());
    nlohmann::json issues = nlohmann::json::array();
    for (const auto& i : e.issues) issues.push_back({{"path", i.path.empty() ? "/" : i.path}, {"message", i.message}});
    res.report["error"]["issues"] = issues;
  } catch (const ConfigError& e) {
    fail(config_error, "config", e.what());
  } catch (const ArchiveError& e) {
    fail(config_error, "io", e.what());
  } catch (const NotNearSoliton& e) {
    fail(assertion_failed, "not-near-soliton", e.what());
  } catch (const EnergyIncrease& e) {
    fail(not_converged, "energy-increase", e.what());
  } catch (const std::invalid_argument& e) {
    fail(config_error, "invalid-argument", e.what());
  } catch (const std::domain_error& e) {
    fail(config_error, "domain", e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    fail(config_error, "io", e.what());
  } catch (const nlohmann::json::exception& e) {
    fail(config_error, "config", e.what());
  } catch (const std::exception& e) {
    fail(config_error, "internal", e.what());
  }
  return res;
}

}  // namespace ymlab::cli
