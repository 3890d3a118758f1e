#pragma once

// Command-line front end: synth, verify and export-curves over a run
// directory holding problem.json, envelope.csv, costate.json, manifest.json.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "errors.hpp"
#include "io.hpp"
#include "model.hpp"
#include "shoot.hpp"
#include "verify.hpp"

namespace pulseforge::cli {

enum ExitCode : int { kOk = 0, kSlopeShortfall = 1, kInvalid = 2, kNotConverged = 3 };

inline constexpr const char* kProblemFile = "problem.json";
inline constexpr const char* kEnvelopeFile = "envelope.csv";
inline constexpr const char* kCostateFile = "costate.json";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kPropagatorFile = "propagator.csv";
inline constexpr const char* kCurvesFile = "error_curves.csv";
inline constexpr const char* kDefaultGrid = "1e-3:3e-2:10";

struct SynthOptions {
  std::string problem;
  std::optional<std::uint64_t> seed;
  std::optional<int> starts;
  std::optional<double> tol;
  std::string out;
};

struct VerifyOptions {
  std::string dir;
  std::optional<int> axis;  // 1-based
  std::optional<std::string> grid;
};

/// Smallest acceptable sweep slope for robustness order r.
inline double default_min_slope(int order) {
  switch (order) {
    case 1:
      return 3.5;
    case 2:
      return 4.5;
    default:
      return 5.0;
  }
}

/// Parses "a:b:count" into a log-spaced grid; throws on anything degenerate.
inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 3) throw ValidationError("degenerate grid \"" + text + "\": expected a:b:count");
  double a = 0.0;
  double b = 0.0;
  int count = 0;
  try {
    std::size_t used = 0;
    a = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw std::invalid_argument("a");
    b = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw std::invalid_argument("b");
    count = std::stoi(parts[2], &used);
    if (used != parts[2].size()) throw std::invalid_argument("count");
  } catch (const std::exception&) {
    throw ValidationError("degenerate grid \"" + text + "\": not numeric");
  }
  if (!(a > 0.0) || !(b > a) || count < 2) {
    throw ValidationError("degenerate grid \"" + text + "\": need 0 < a < b and count >= 2");
  }
  return log_grid(a, b, count);
}

namespace detail {

namespace fs = std::filesystem;
using io::Json;

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json solver_json(const SolverOptions& o) {
  return Json{{"seed", o.seed},
              {"starts", o.starts},
              {"sigma", o.sigma},
              {"tol", o.tol},
              {"max_iter", o.max_iter},
              {"steps", o.steps},
              {"screen_tol", o.screen_tol},
              {"seeding", o.seeding == Seeding::direct ? "direct" : "costate"},
              {"direct",
               {{"modes", o.direct.modes},
                {"sigma", o.direct.sigma},
                {"steps", o.direct.steps},
                {"fit_steps", o.direct.fit_steps},
                {"max_iter", o.direct.max_iter}}}};
}

inline Json closure_json(const ProblemSpec& spec, const std::vector<double>& norms) {
  Json j = Json::object();
  const auto idx = enumerate_multi_indices(spec.disturbances, spec.order);
  for (std::size_t k = 0; k < idx.size() && k < norms.size(); ++k) j[idx[k].label()] = norms[k];
  return j;
}

/// Everything a run directory provides.
struct RunDir {
  io::LoadedProblem problem;
  Json manifest;
  Envelope envelope;
};

inline RunDir load_run(const fs::path& dir) {
  for (const char* f : {kProblemFile, kManifestFile, kEnvelopeFile}) {
    if (!fs::exists(dir / f)) throw ValidationError("missing artifact " + (dir / f).string());
  }
  RunDir run;
  run.problem = io::load_problem_file((dir / kProblemFile).string());
  run.manifest = io::read_json((dir / kManifestFile).string());
  const double drift = run.manifest.value("drift_scale", 1.0);
  run.envelope = io::envelope_from_table(io::read_csv((dir / kEnvelopeFile).string()), run.problem.spec.controls,
                                         drift, (dir / kEnvelopeFile).string());
  return run;
}

/// Re-simulates the stored initial costate on the solver's grid.
inline PulseSolution replay(const fs::path& dir, const ProblemSpec& spec) {
  if (!fs::exists(dir / kCostateFile)) throw ValidationError("missing artifact " + (dir / kCostateFile).string());
  const Json c = io::read_json((dir / kCostateFile).string());
  if (!c.contains("unknowns") || !c["unknowns"].is_array() || !c.contains("steps")) {
    throw ValidationError((dir / kCostateFile).string() + ": expected \"unknowns\" and \"steps\"");
  }
  const auto z = c["unknowns"].get<std::vector<double>>();
  const int steps = c["steps"].get<int>();
  if (z.size() != static_cast<std::size_t>(unknown_count(spec)) || steps < 1) {
    throw ValidationError((dir / kCostateFile).string() + ": costate does not match the problem");
  }
  return simulate(spec, z, steps);
}

}  // namespace detail

inline int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  using io::Json;
  io::LoadedProblem problem;
  std::string text;
  try {
    const io::Document doc = io::Document::from_file(opt.problem);
    text = doc.text();
    problem = io::load_problem(doc);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
  SolverOptions so = problem.settings.solver;
  if (opt.seed) so.seed = *opt.seed;
  if (opt.starts) so.starts = *opt.starts;
  if (opt.tol) so.tol = *opt.tol;
  if (so.starts < 1 || !(so.tol > 0.0)) {
    err << "error: --starts must be >= 1 and --tol positive\n";
    return kInvalid;
  }
  const ProblemSpec& spec = problem.spec;
  const fs::path dir = opt.out.empty() ? fs::path(fs::path(opt.problem).stem().string() + "_run") : fs::path(opt.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    err << "error: cannot create " << dir.string() << ": " << ec.message() << "\n";
    return kInvalid;
  }

  const std::string started = detail::utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  const PulseSolution sol = solve_best_effort(spec, so);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  {
    std::ofstream copy(dir / kProblemFile, std::ios::binary);
    copy << text;
  }
  Json candidates = Json::array();
  for (const auto& c : sol.candidates) {
    candidates.push_back({{"seed", c.seed},
                          {"iterations", c.iterations},
                          {"residual_norm", c.residual_norm},
                          {"cost_J", c.cost_J},
                          {"converged", c.converged}});
  }
  Json manifest{{"spec_fingerprint", io::fingerprint(text)},
                {"solver", detail::solver_json(so)},
                {"seed", sol.seed},
                {"converged", sol.converged},
                {"steps_used", sol.steps_used},
                {"residual_norm", sol.residual_norm},
                {"cost_J", sol.cost_J},
                {"drift_scale", sol.envelope.drift_scale},
                {"candidates", candidates},
                {"started_at", started},
                {"finished_at", detail::utc_now()},
                {"elapsed_seconds", elapsed}};
  Json artifacts{{"problem", kProblemFile}, {"manifest", kManifestFile}};
  if (!sol.trajectory.values.empty()) {
    io::write_csv((dir / kEnvelopeFile).string(), io::envelope_table(sol.envelope));
    io::write_json((dir / kCostateFile).string(),
                   Json{{"unknowns", sol.unknowns.coords}, {"steps", sol.steps_used}});
    manifest["closure_norms"] = detail::closure_json(spec, closure_norms(sol, spec));
    manifest["unitarity_defect"] = unitarity_defect(sol, spec);
    manifest["hamiltonian_drift"] = hamiltonian_drift(sol, spec);
    artifacts["envelope"] = kEnvelopeFile;
    artifacts["costate"] = kCostateFile;
  }
  manifest["artifacts"] = artifacts;
  io::write_json((dir / kManifestFile).string(), manifest);

  out << "residual " << io::format_double(sol.residual_norm) << " cost " << io::format_double(sol.cost_J)
      << " steps " << sol.steps_used << " seed " << sol.seed << " -> " << dir.string() << "\n";
  if (!sol.converged) {
    err << "error: no start reached tol " << so.tol << " (best residual " << sol.residual_norm << ")\n";
    return kNotConverged;
  }
  return kOk;
}

inline int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  using io::Json;
  const fs::path dir(opt.dir);
  detail::RunDir run;
  std::vector<double> grid;
  try {
    run = detail::load_run(dir);
    grid = parse_grid(opt.grid.value_or(run.problem.settings.grid.value_or(kDefaultGrid)));
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
  const ProblemSpec& spec = run.problem.spec;
  std::vector<int> axes;
  if (opt.axis) {
    if (*opt.axis < 1 || *opt.axis > spec.disturbances) {
      err << "error: --axis must lie in [1, " << spec.disturbances << "]\n";
      return kInvalid;
    }
    axes.push_back(*opt.axis);
  } else {
    for (int i = 1; i <= spec.disturbances; ++i) axes.push_back(i);
  }
  const double min_slope = run.problem.settings.min_slope.value_or(default_min_slope(spec.order));

  bool pass = true;
  Json axes_json = Json::array();
  for (int axis : axes) {
    const SweepResult r = sweep_axis(run.envelope, spec, axis - 1, grid);
    io::CsvTable table;
    for (int i = 1; i <= spec.disturbances; ++i) table.header.push_back("eps_" + std::to_string(i));
    table.header.push_back("infidelity");
    for (std::size_t k = 0; k < r.infidelities.size(); ++k) {
      std::vector<double> row = r.epsilons[k];
      row.push_back(r.infidelities[k]);
      table.rows.push_back(std::move(row));
    }
    const std::string file = "sweep_axis" + std::to_string(axis) + ".csv";
    io::write_csv((dir / file).string(), table);
    const bool ok = r.fitted_slope && *r.fitted_slope >= min_slope;
    pass = pass && ok;
    Json a{{"axis", axis}, {"file", file}, {"fitted_points", r.fitted_points}, {"min_slope", min_slope}, {"pass", ok}};
    a["slope"] = r.fitted_slope ? Json(*r.fitted_slope) : Json(nullptr);
    if (r.fitted_points > 0) a["fit_range"] = {r.fit_min, r.fit_max};
    axes_json.push_back(a);
    out << "axis " << axis << " slope " << (r.fitted_slope ? io::format_double(*r.fitted_slope) : "undefined")
        << " (min " << min_slope << ") " << (ok ? "ok" : "FAIL") << "\n";
  }
  const ErrorCurveAudit audit = error_curve_audit(run.envelope, spec);
  const std::vector<double> zero(static_cast<std::size_t>(spec.disturbances), 0.0);
  const double ideal = 1.0 - fidelity(spec.target, propagate_noisy(run.envelope, zero, spec));
  Json summary{{"grid", {{"min", grid.front()}, {"max", grid.back()}, {"count", grid.size()}}},
               {"axes", axes_json},
               {"audit_closure_norms", detail::closure_json(spec, audit.closure_norms)},
               {"ideal_infidelity", ideal},
               {"pass", pass}};
  io::write_json((dir / kSummaryFile).string(), summary);
  return pass ? kOk : kSlopeShortfall;
}

inline int cmd_export_curves(const std::string& dir_name, std::ostream& out, std::ostream& err) {
  namespace fs = std::filesystem;
  const fs::path dir(dir_name);
  detail::RunDir run;
  PulseSolution sol;
  try {
    run = detail::load_run(dir);
    sol = detail::replay(dir, run.problem.spec);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalid;
  }
  const ProblemSpec& spec = run.problem.spec;
  const Layout l = Layout::of(spec);

  io::CsvTable prop;
  prop.header.push_back("t");
  if (l.n == 2) {
    prop.header.insert(prop.header.end(), {"re_alpha", "im_alpha", "re_beta", "im_beta"});
  } else {
    for (int i = 0; i < l.n; ++i) {
      for (int j = 0; j < l.n; ++j) {
        const std::string rc = std::to_string(i + 1) + std::to_string(j + 1);
        prop.header.push_back("re_r" + rc);
        prop.header.push_back("im_r" + rc);
      }
    }
  }
  io::CsvTable curves;
  curves.header.push_back("t");
  for (const auto& idx : enumerate_multi_indices(spec.disturbances, spec.order)) {
    std::string name = "omega";
    for (int i : idx.indices) name += "_" + std::to_string(i);
    for (int c = 1; c <= l.d; ++c) curves.header.push_back(name + "_c" + std::to_string(c));
  }
  for (std::size_t k = 0; k < sol.trajectory.values.size(); ++k) {
    const auto& y = sol.trajectory.values[k];
    const double t = sol.trajectory.times[k];
    const CMatrix<double> r = read_matrix(y.data(), l.n);
    // R = [[α, −β*], [β, α*]] for N = 2.
    std::vector<double> row{t};
    if (l.n == 2) {
      row.insert(row.end(), {r.re(0, 0), r.im(0, 0), r.re(1, 0), r.im(1, 0)});
    } else {
      for (int i = 0; i < l.n; ++i) {
        for (int j = 0; j < l.n; ++j) {
          row.push_back(r.re(i, j));
          row.push_back(r.im(i, j));
        }
      }
    }
    prop.rows.push_back(std::move(row));
    std::vector<double> crow{t};
    crow.insert(crow.end(), y.data() + l.omega_offset(0), y.data() + l.omega_offset(0) + l.p * l.d);
    curves.rows.push_back(std::move(crow));
  }
  io::write_csv((dir / kPropagatorFile).string(), prop);
  io::write_csv((dir / kCurvesFile).string(), curves);
  out << "wrote " << (dir / kPropagatorFile).string() << " and " << (dir / kCurvesFile).string() << "\n";
  return kOk;
}

/// Parses argv and dispatches to a subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"pulseforge: robust control pulses by PMP shooting"};
  app.require_subcommand(1);

  SynthOptions synth;
  std::uint64_t seed = 0;
  int starts = 0;
  double tol = 0.0;
  auto* s = app.add_subcommand("synth", "solve a problem file and write a run directory");
  s->add_option("problem", synth.problem, "problem JSON")->required();
  auto* seed_opt = s->add_option("--seed", seed, "base seed");
  auto* starts_opt = s->add_option("--starts", starts, "multistart count");
  auto* tol_opt = s->add_option("--tol", tol, "residual tolerance");
  s->add_option("--out", synth.out, "output directory");

  VerifyOptions verify;
  int axis = 0;
  std::string grid;
  auto* v = app.add_subcommand("verify", "sweep disturbances over a run directory");
  v->add_option("dir", verify.dir, "run directory")->required();
  auto* axis_opt = v->add_option("--axis", axis, "disturbance axis (1-based)");
  auto* grid_opt = v->add_option("--grid", grid, "a:b:count, log-spaced");

  std::string export_dir;
  auto* e = app.add_subcommand("export-curves", "write propagator and error-curve trajectories");
  e->add_option("dir", export_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return kInvalid;
  }

  try {
    if (s->parsed()) {
      if (seed_opt->count() > 0) synth.seed = seed;
      if (starts_opt->count() > 0) synth.starts = starts;
      if (tol_opt->count() > 0) synth.tol = tol;
      return cmd_synth(synth, out, err);
    }
    if (v->parsed()) {
      if (axis_opt->count() > 0) verify.axis = axis;
      if (grid_opt->count() > 0) verify.grid = grid;
      return cmd_verify(verify, out, err);
    }
    return cmd_export_curves(export_dir, out, err);
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << "\n";
    return kInvalid;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kInvalid;
  }
}

}  // namespace pulseforge::cli
