#pragma once

// Levenberg–Marquardt for small dense nonlinear least-squares problems.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace pulseforge {

struct LeastSquaresResult {
  std::vector<double> x;
  double residual_norm = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

struct LeastSquaresOptions {
  double tol = 1e-8;
  int max_iter = 200;
  /// Stop once an accepted step is this small relative to ‖x‖.
  double step_tol = 1e-12;
};

/// Levenberg–Marquardt with Marquardt diagonal scaling and Nielsen's damping
/// update. `f(x)` returns the residual and `jac(x)` its Jacobian, either as an
/// empty optional when evaluation fails; failed trial points count as rejected
/// steps.
template <class Residual, class Jacobian>
LeastSquaresResult levenberg_marquardt(Residual&& f, Jacobian&& jac, std::vector<double> x,
                                       const LeastSquaresOptions& opt) {
  LeastSquaresResult out;
  out.x = x;
  std::optional<Eigen::VectorXd> r0 = f(x);
  if (!r0) return out;
  Eigen::VectorXd r = *r0;
  double norm = r.norm();
  out.residual_norm = norm;
  if (norm <= opt.tol) {
    out.converged = true;
    return out;
  }
  std::optional<Eigen::MatrixXd> j = jac(x);
  if (!j) return out;

  const int nz = static_cast<int>(x.size());
  double lambda = -1.0;
  double nu = 2.0;
  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    out.iterations = iter;
    // Column scaling D = diag(JᵀJ); the damped step solves the stacked
    // system [J D^-1/2; √λ I] y = [−r; 0] by QR so the conditioning of J is
    // not squared.
    const Eigen::VectorXd scale = j->colwise().squaredNorm().transpose();
    const Eigen::VectorXd d_sqrt = scale.cwiseMax(1e-12 * std::max(1.0, scale.maxCoeff())).cwiseSqrt();
    if (lambda < 0.0) lambda = 1e-3;

    // Undamped minimum-norm Gauss–Newton step first; near an ill-conditioned
    // root the damped step would need λ far below what the update reaches.
    {
      const Eigen::VectorXd gn = j->completeOrthogonalDecomposition().solve(-r);
      if (gn.allFinite()) {
        std::vector<double> trial(x);
        for (int i = 0; i < nz; ++i) trial[static_cast<std::size_t>(i)] += gn[i];
        const std::optional<Eigen::VectorXd> rt = f(trial);
        const double predicted = 0.5 * (norm * norm - (r + *j * gn).squaredNorm());
        const double actual = rt ? 0.5 * (norm * norm - rt->squaredNorm()) : -1.0;
        if (rt && predicted > 0.0 && actual >= 0.25 * predicted) {
          const double xnorm = Eigen::Map<const Eigen::VectorXd>(x.data(), nz).norm();
          x = std::move(trial);
          r = *rt;
          norm = r.norm();
          out.x = x;
          out.residual_norm = norm;
          if (norm <= opt.tol) {
            out.converged = true;
            return out;
          }
          if (gn.norm() <= opt.step_tol * (xnorm + opt.step_tol)) break;
          lambda = std::max(lambda / 10.0, 1e-20);
          j = jac(x);
          if (!j) break;
          continue;
        }
      }
    }

    const auto rows = j->rows();
    Eigen::MatrixXd stacked(rows + nz, nz);
    stacked.topRows(rows) = *j * d_sqrt.cwiseInverse().asDiagonal();
    stacked.bottomRows(nz) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(nz, nz);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows + nz);
    rhs.head(rows) = -r;
    const Eigen::VectorXd delta = stacked.colPivHouseholderQr().solve(rhs).cwiseQuotient(d_sqrt);
    if (!delta.allFinite()) break;

    std::vector<double> trial(x);
    for (int i = 0; i < nz; ++i) trial[static_cast<std::size_t>(i)] += delta[i];
    const std::optional<Eigen::VectorXd> rt = f(trial);
    const double predicted = 0.5 * (norm * norm - (r + *j * delta).squaredNorm());
    const double actual = rt ? 0.5 * (norm * norm - rt->squaredNorm()) : -1.0;
    const double rho = predicted > 0.0 ? actual / predicted : -1.0;

    if (rt && actual > 0.0 && rho > 0.0) {
      const double xnorm = Eigen::Map<const Eigen::VectorXd>(x.data(), nz).norm();
      x = std::move(trial);
      r = *rt;
      norm = r.norm();
      out.x = x;
      out.residual_norm = norm;
      if (norm <= opt.tol) {
        out.converged = true;
        return out;
      }
      if (delta.norm() <= opt.step_tol * (xnorm + opt.step_tol)) break;
      lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
      nu = 2.0;
      j = jac(x);
      if (!j) break;
    } else {
      lambda *= nu;
      nu *= 2.0;
      if (lambda > 1e16) break;
    }
  }
  return out;
}

}  // namespace pulseforge
