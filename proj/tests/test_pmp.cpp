#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "pulseforge/ode.hpp"
#include "pulseforge/pmp.hpp"

using namespace pulseforge;
using fixtures::max_abs_diff;

namespace {

using Point = HamiltonianSystem<double>::Point;

Costate random_costate(const ProblemSpec& spec, std::mt19937_64& rng) {
  const Layout l = Layout::of(spec);
  Costate mu;
  mu.mu_R = fixtures::random_algebra(rng, l.n);
  for (int k = 0; k < l.p; ++k) mu.mus.push_back(fixtures::random_algebra(rng, l.n));
  mu.mu_u = fixtures::gaussian(rng, static_cast<std::size_t>(l.m * l.s));
  return mu;
}

AugmentedState random_state(const ProblemSpec& spec, std::mt19937_64& rng) {
  AugmentedState x = AugmentedState::initial(spec);
  x.R = fixtures::random_unitary(rng, spec.dimension);
  for (auto& o : x.omegas) o = fixtures::random_algebra(rng, spec.dimension);
  for (auto& u : x.u_state) u = std::normal_distribution<double>()(rng);
  return x;
}


}  // namespace

TEST(Pmp, ControlHamiltonianExample) {
  const ProblemSpec s = fixtures::sqrtx_spec(1, 1.0, 0);
  AugmentedState x = AugmentedState::initial(s);
  Costate mu{AlgebraElement(times_minus_i(pauli::x())) * 2.0, {AlgebraElement::zero(2)}, {}};
  const std::vector<double> u{1.0};
  // ⟨2(−iX), −iX⟩ − ½·1·1
  EXPECT_NEAR(control_hamiltonian(x, mu, u, s), 1.5, 1e-15);
  mu.mus[0] = AlgebraElement(times_minus_i(pauli::z()));
  // ⟨μ1, A⟩ with A = −iZ at R = I adds 1.
  EXPECT_NEAR(control_hamiltonian(x, mu, u, s), 2.5, 1e-15);
}

TEST(Pmp, OptimalControlWithoutSmoothing) {
  const ProblemSpec s = fixtures::sqrtx_spec(1, 1.0, 0);
  const AugmentedState x = AugmentedState::initial(s);
  const Costate mu{AlgebraElement(times_minus_i(pauli::x())) * 0.7, {AlgebraElement::zero(2)}, {}};
  const auto u = optimal_control(x, mu, s);
  ASSERT_EQ(u.size(), 1u);
  EXPECT_NEAR(u[0], 0.7, 1e-15);
}

TEST(Pmp, OptimalInputWithSmoothing) {
  ProblemSpec s = fixtures::hadamard_spec();
  s.weights.R_v = 2.0;
  const AugmentedState x = AugmentedState::initial(s);
  Costate mu{AlgebraElement::zero(2), {AlgebraElement::zero(2), AlgebraElement::zero(2)}, {3.0, -1.0}};
  const auto v = optimal_control(x, mu, s);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_NEAR(v[0], 1.5, 1e-15);
  EXPECT_NEAR(v[1], -0.5, 1e-15);
}

TEST(Pmp, MissingControlPenaltyIsRejected) {
  ProblemSpec s = fixtures::sqrtx_spec(1, 1.0, 0);
  s.weights.R_u = 0.0;
  EXPECT_THROW(HamiltonianSystem<double>{s}, ValidationError);
}

TEST(Pmp, ErrorCurveCostatesOfCaseAAreConstant) {
  std::mt19937_64 rng(31);
  const ProblemSpec s = fixtures::hadamard_spec();
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = random_state(s, rng);
    const auto mu = random_costate(s, rng);
    const std::vector<double> u{0.4, -0.9};
    const Costate d = costate_rhs(x, mu, u, s);
    for (const auto& m : d.mus) EXPECT_LT(norm(m), 1e-14);
  }
}

TEST(Pmp, HighestOrderCostateOfCaseBIsConstant) {
  std::mt19937_64 rng(32);
  for (int r : {2, 3}) {
    const ProblemSpec s = fixtures::sqrtx_spec(r);
    for (int trial = 0; trial < 10; ++trial) {
      const Costate d = costate_rhs(random_state(s, rng), random_costate(s, rng), std::vector<double>{0.3}, s);
      EXPECT_LT(norm(d.mus.back()), 1e-14);
    }
  }
}

TEST(Pmp, ZeroCostateHasZeroRate) {
  std::mt19937_64 rng(33);
  for (const ProblemSpec& s : {fixtures::hadamard_spec(), fixtures::sqrtx_spec(3)}) {
    const Layout l = Layout::of(s);
    Costate zero{AlgebraElement::zero(2), std::vector<AlgebraElement>(static_cast<std::size_t>(l.p), AlgebraElement::zero(2)),
                 std::vector<double>(static_cast<std::size_t>(l.m * l.s), 0.0)};
    AugmentedState x = random_state(s, rng);
    std::vector<double> u(static_cast<std::size_t>(l.m), 0.0);
    x.u_state = u;
    const Costate d = costate_rhs(x, zero, u, s);
    EXPECT_LT(norm(d.mu_R), 1e-15);
    for (const auto& m : d.mus) EXPECT_LT(norm(m), 1e-15);
    for (double v : d.mu_u) EXPECT_EQ(v, 0.0);
  }
}

TEST(Pmp, CostateRateIsLinearInCostate) {
  std::mt19937_64 rng(34);
  for (const ProblemSpec& s : {fixtures::hadamard_spec(), fixtures::sqrtx_spec(3)}) {
    const Layout l = Layout::of(s);
    const auto x = random_state(s, rng);
    const auto mu = random_costate(s, rng);
    const auto nu = random_costate(s, rng);
    Costate mix{mu.mu_R * 2.0 + nu.mu_R * -0.5, {}, {}};
    for (int k = 0; k < l.p; ++k) {
      mix.mus.push_back(mu.mus[static_cast<std::size_t>(k)] * 2.0 + nu.mus[static_cast<std::size_t>(k)] * -0.5);
    }
    for (int j = 0; j < l.m * l.s; ++j) {
      mix.mu_u.push_back(2.0 * mu.mu_u[static_cast<std::size_t>(j)] - 0.5 * nu.mu_u[static_cast<std::size_t>(j)]);
    }
    // With R_u = 0 the μ_u rate has no inhomogeneous term.
    std::vector<double> u(static_cast<std::size_t>(l.m), 0.6);
    const Costate a = costate_rhs(x, mu, u, s);
    const Costate b = costate_rhs(x, nu, u, s);
    const Costate c = costate_rhs(x, mix, u, s);
    EXPECT_LT(norm(c.mu_R - (a.mu_R * 2.0 + b.mu_R * -0.5)), 1e-12);
    for (int k = 0; k < l.p; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      EXPECT_LT(norm(c.mus[kk] - (a.mus[kk] * 2.0 + b.mus[kk] * -0.5)), 1e-12);
    }
    for (int j = 0; j < l.m * l.s; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      EXPECT_NEAR(c.mu_u[jj], 2.0 * a.mu_u[jj] - 0.5 * b.mu_u[jj], 1e-12);
    }
  }
}

TEST(CostateCaseA, MatchesFiniteDifferenceGradient) {
  EXPECT_LT(fixtures::costate_fd_gap(fixtures::hadamard_spec(), 20, 41), 1e-6);
  EXPECT_LT(fixtures::costate_fd_gap(fixtures::cheap_spec(), 20, 42), 1e-6);
}

TEST(CostateCaseB, MatchesFiniteDifferenceGradient) {
  for (int r : {2, 3}) {
    EXPECT_LT(fixtures::costate_fd_gap(fixtures::driftful_sqrtx(r), 20, 43 + static_cast<std::uint64_t>(r)), 1e-6) << "order " << r;
  }
}

TEST(Pmp, OptimalInputsAreStationary) {
  std::mt19937_64 rng(35);
  for (const ProblemSpec& s : {fixtures::hadamard_spec(), fixtures::cheap_spec(), fixtures::sqrtx_spec(3)}) {
    const HamiltonianSystem<double> sys(s);
    for (int trial = 0; trial < 20; ++trial) {
      const auto y = fixtures::random_point(sys, rng);
      const Point pt = sys.decode(y.data());
      const auto best = sys.optimal_inputs(pt);
      const double h0 = sys.hamiltonian(pt, best);
      for (std::size_t j = 0; j < best.size(); ++j) {
        const double h = 1e-4;
        auto plus = best;
        auto minus = best;
        plus[j] += h;
        minus[j] -= h;
        const double hp = sys.hamiltonian(pt, plus);
        const double hm = sys.hamiltonian(pt, minus);
        EXPECT_LT(std::abs(hp - hm) / (2 * h), 1e-8);
        EXPECT_LE(hp, h0);
        EXPECT_LE(hm, h0);
      }
    }
  }
}

TEST(Pmp, HamiltonianIsConservedAlongExtremals) {
  std::mt19937_64 rng(36);
  for (const ProblemSpec& base : {fixtures::hadamard_spec(1.0), fixtures::cheap_spec(), fixtures::sqrtx_spec(3, 1.0)}) {
    ProblemSpec s = base;
    s.horizon = 1.0;
    const HamiltonianSystem<double> sys(s);
    const Layout& l = sys.layout();
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd y0 = Eigen::VectorXd::Zero(l.total_size());
      write_matrix(CMatrix<double>::identity(l.n), y0.data());
      const auto mu = fixtures::gaussian(rng, static_cast<std::size_t>(l.costate_size()));
      for (int k = 0; k < l.costate_size(); ++k) y0[l.state_size() + k] = mu[static_cast<std::size_t>(k)];
      const auto traj = rk4_integrate(sys, y0, 1.0, 2000);
      const double h0 = sys.hamiltonian_at(y0.data());
      double drift = 0.0;
      for (const auto& y : traj.values) drift = std::max(drift, std::abs(sys.hamiltonian_at(y.data()) - h0));
      EXPECT_LT(drift, 1e-6) << "trial " << trial;
    }
  }
}

TEST(Pmp, FullVectorFieldAgreesWithPieces) {
  std::mt19937_64 rng(37);
  const ProblemSpec s = fixtures::sqrtx_spec(3);
  const auto x = random_state(s, rng);
  const auto mu = random_costate(s, rng);
  const auto y = flatten(x, mu, s);
  const auto dy = full_vector_field(y, s);
  const Layout l = Layout::of(s);
  const Costate d = costate_rhs(x, mu, x.u_state, s);
  const auto c = vectorize(d.mu_R);
  for (int k = 0; k < l.d; ++k) EXPECT_NEAR(dy[static_cast<std::size_t>(l.mu_r_offset() + k)], c[static_cast<std::size_t>(k)], 1e-13);
  // u̇ = v* = μ_u / R_v
  EXPECT_NEAR(dy[static_cast<std::size_t>(l.u_offset())], mu.mu_u[0] / s.weights.R_v, 1e-15);
  EXPECT_THROW(full_vector_field(std::span<const double>(y.data(), y.size() - 1), s), DimensionError);
}
