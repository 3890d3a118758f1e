// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "pulseforge/io.hpp"
#include "pulseforge/ode.hpp"
#include "pulseforge/pmp.hpp"
#include "pulseforge/shoot.hpp"
#include "pulseforge/verify.hpp"

using namespace pulseforge;

namespace {

struct Check {
  std::ostringstream detail;
  bool ok = true;

  /// Records `value` against a named bound and folds the outcome in.
  void require(const std::string& name, double value, bool pass) {
    if (detail.tellp() > 0) detail << ", ";
    detail << name << "=" << value;
    if (!pass) {
      detail << " (!)";
      ok = false;
    }
  }
};

void report(int id, const std::string& title, const Check& c) {
  std::cout << (c.ok ? "PASS" : "FAIL") << " criterion " << id << " " << title << ": " << c.detail.str() << std::endl;
}

struct Solved {
  ProblemSpec spec;
  SolverOptions options;
  PulseSolution sol;
  double seconds = 0.0;
};

Solved synthesize(const std::string& file) {
  const auto loaded = io::load_problem_file(std::string(PULSEFORGE_SOURCE_DIR) + "/problems/" + file);
  Solved s{loaded.spec, loaded.settings.solver, {}, 0.0};
  std::cerr << "solving " << file << " ..." << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  s.sol = solve_best_effort(s.spec, s.options);
  s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "  residual " << s.sol.residual_norm << " cost " << s.sol.cost_J << " in " << s.seconds << " s" << std::endl;
  return s;
}

double ideal_infidelity(const Solved& s) {
  const std::vector<double> zero(static_cast<std::size_t>(s.spec.disturbances), 0.0);
  return 1.0 - fidelity(s.spec.target, propagate_noisy(s.sol.envelope, zero, s.spec));
}

double worst_closure(const Solved& s) {
  const auto norms = error_curve_audit(s.sol.envelope, s.spec).closure_norms;
  return *std::max_element(norms.begin(), norms.end());
}

double slope_or_nan(const SweepResult& r) { return r.fitted_slope.value_or(std::nan("")); }

/// Largest |∂H/∂v| at the maximizing input, sampled at `samples` grid times.
double stationarity(const Solved& s, int samples) {
  const HamiltonianSystem<double> sys(s.spec);
  const auto& values = s.sol.trajectory.values;
  const double h = 1e-4;
  double worst = 0.0;
  for (int j = 0; j < samples; ++j) {
    const auto k = static_cast<std::size_t>(std::lround(static_cast<double>(j) * (values.size() - 1) / (samples - 1)));
    const auto pt = sys.decode(values[k].data());
    const auto best = sys.optimal_inputs(pt);
    for (std::size_t i = 0; i < best.size(); ++i) {
      auto plus = best;
      auto minus = best;
      plus[i] += h;
      minus[i] -= h;
      worst = std::max(worst, std::abs(sys.hamiltonian(pt, plus) - sys.hamiltonian(pt, minus)) / (2 * h));
    }
  }
  return worst;
}

double jacobian_gap(const Solved& s) {
  const auto& z = s.sol.unknowns.coords;
  const Eigen::MatrixXd jd = jacobian(z, s.spec, 256, JacobianMethod::dual);
  const Eigen::MatrixXd jf = fixtures::ridders_jacobian(z, s.spec, 256);
  return (jd - jf).norm() / jf.norm();
}

/// Envelope values vanish at both ends and move no faster than the largest rate.
void check_envelope(Check& c, const Envelope& env) {
  double ends = 0.0;
  double peak_rate = 0.0;
  double steepest = 0.0;
  for (std::size_t j = 0; j < env.u.front().size(); ++j) {
    ends = std::max({ends, std::abs(env.u.front()[j]), std::abs(env.u.back()[j])});
    for (std::size_t k = 0; k < env.times.size(); ++k) peak_rate = std::max(peak_rate, std::abs(env.v[k][j]));
    for (std::size_t k = 1; k < env.times.size(); ++k) {
      const double dt = env.times[k] - env.times[k - 1];
      steepest = std::max(steepest, std::abs(env.u[k][j] - env.u[k - 1][j]) / dt);
    }
  }
  c.require("endpoint_u", ends, ends <= 1e-8);
  c.require("max_du_dt", steepest, std::isfinite(steepest) && steepest <= peak_rate * (1 + 1e-6) + 1e-12);
}

}  // namespace

int main() {
  const Solved ex1 = synthesize("hadamard_robust.json");
  const Solved ex2 = synthesize("sqrtx_order3.json");
  bool all = true;

  {
    Check c;
    c.require("residual", ex1.sol.residual_norm, ex1.sol.converged && ex1.sol.residual_norm <= 1e-8);
    const double closure = worst_closure(ex1);
    c.require("closure", closure, closure <= 1e-6);
    const double ideal = ideal_infidelity(ex1);
    c.require("ideal_infidelity", ideal, ideal <= 1e-8);
    check_envelope(c, ex1.sol.envelope);
    c.require("seconds", ex1.seconds, ex1.seconds <= 300.0);
    report(1, "Example 1 reproduction", c);
    all = all && c.ok;
  }
  {
    Check c;
    const auto grid = log_grid(1e-3, 3e-2, 10);
    const Envelope baseline_env = baseline::sequential_hadamard(ex1.spec.horizon);
    for (int axis = 0; axis < ex1.spec.disturbances; ++axis) {
      const double robust = slope_or_nan(sweep_axis(ex1.sol.envelope, ex1.spec, axis, grid));
      c.require("slope_axis" + std::to_string(axis + 1), robust, robust >= 3.5);
      const double plain = slope_or_nan(sweep_axis(baseline_env, ex1.spec, axis, grid));
      c.require("baseline_axis" + std::to_string(axis + 1), plain, std::abs(plain - 2.0) <= 0.3);
    }
    report(2, "Example 1 robustness scaling", c);
    all = all && c.ok;
  }
  {
    Check c;
    c.require("residual", ex2.sol.residual_norm, ex2.sol.converged && ex2.sol.residual_norm <= 1e-8);
    const double closure = worst_closure(ex2);
    c.require("closure", closure, closure <= 1e-6);
    const auto grid = log_grid(0.1, 0.5, 10);
    const double robust = slope_or_nan(sweep_axis(ex2.sol.envelope, ex2.spec, 0, grid));
    c.require("slope", robust, robust >= 5.0);
    const double plain = slope_or_nan(sweep_axis(baseline::constant_sqrt_x(ex2.spec.horizon), ex2.spec, 0, grid));
    c.require("baseline", plain, std::abs(plain - 2.0) <= 0.3);
    c.require("seconds", ex2.seconds, ex2.seconds <= 600.0);
    report(3, "Example 2 reproduction", c);
    all = all && c.ok;
  }
  {
    Check c;
    for (const Solved* s : {&ex1, &ex2}) {
      const std::string tag = s == &ex1 ? "ex1" : "ex2";
      const double drift = hamiltonian_drift(s->sol, s->spec);
      c.require(tag + "_H_drift", drift, drift <= 1e-6);
      const double stat = stationarity(*s, 50);
      c.require(tag + "_dH_dv", stat, stat <= 1e-8);
    }
    const double fd = std::max(fixtures::costate_fd_gap(ex2.spec, 20, 7), fixtures::costate_fd_gap(fixtures::driftful_sqrtx(3), 20, 8));
    c.require("caseB_fd_gap", fd, fd <= 1e-6);
    report(4, "PMP internal consistency", c);
    all = all && c.ok;
  }
  {
    Check c;
    ProblemSpec open = ex2.spec;
    open.smoothing = 0;
    open.weights = {1.0, 1.0};
    open = validate(open);
    const double drive = std::numbers::pi / (4.0 * open.horizon);
    const auto second = fixtures::second_order_check(open, [drive](double) { return std::vector<double>{drive}; }, 400);
    c.require("omega2_gap", second.gap, second.gap <= 1e-6 && second.magnitude > 1e-3);
    const std::vector<double> eps{0.05, 0.1, 0.2};
    std::vector<double> defects;
    for (double e : eps) defects.push_back(magnus_consistency(ex2.sol.envelope, ex2.spec, std::vector<double>{e}));
    const double exponent = loglog_slope(eps, defects, 0.0).value_or(std::nan(""));
    c.require("magnus_exponent", exponent, exponent >= ex2.spec.order + 0.5);
    report(5, "Magnus oracle equivalence", c);
    all = all && c.ok;
  }
  {
    Check c;
    auto growth = [](double, const Eigen::VectorXd& y) -> Eigen::VectorXd { return y; };
    const Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 1.0);
    std::vector<double> n;
    std::vector<double> err;
    for (int steps : {10, 20, 40, 80, 160}) {
      n.push_back(steps);
      err.push_back(std::abs(rk4_endpoint(growth, one, 1.0, steps)[0] - std::numbers::e));
    }
    const double order = loglog_slope(n, err, 0.0).value_or(std::nan(""));
    c.require("rk4_slope", order, std::abs(order + 4.0) <= 0.2);
    for (const Solved* s : {&ex1, &ex2}) {
      const std::string tag = s == &ex1 ? "ex1" : "ex2";
      const double defect = unitarity_defect(s->sol, s->spec);
      c.require(tag + "_unitarity", defect, defect <= 1e-7);
      const double gap = jacobian_gap(*s);
      c.require(tag + "_jacobian_gap", gap, gap <= 1e-5);
    }
    std::cerr << "re-solving hadamard_robust.json ..." << std::endl;
    const PulseSolution again = solve_best_effort(ex1.spec, ex1.options);
    const bool same = again.unknowns.coords == ex1.sol.unknowns.coords;
    c.require("rerun_identical", same ? 1.0 : 0.0, same);
    report(6, "Numerics", c);
    all = all && c.ok;
  }
  return all ? 0 : 1;
}
