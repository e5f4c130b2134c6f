#pragma once

#include <Eigen/Core>

#include <functional>

namespace inftucker {

/// Smooth part of a composite objective. Returns f(x) and writes df/dx into
/// `grad`. Returning a non-finite value marks x as infeasible; the line
/// search then backtracks.
using SmoothObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct L1QuasiNewtonOptions {
  int max_iters = 100;
  int history = 10;
  double pseudo_grad_tol = 1e-8;  // infinity norm of the pseudo-gradient
  double rel_tol = 1e-10;         // relative objective decrease per step
  int max_line_search = 50;
  double armijo = 1e-4;
};

struct L1QuasiNewtonResult {
  Eigen::VectorXd x;
  double value = 0.0;  // f(x) + lambda * |x|_1
  double pseudo_grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
};

/// Minimizes f(x) + lambda * |x|_1 with an orthant-wise limited-memory
/// quasi-Newton method: L-BFGS directions computed from the pseudo-gradient,
/// sign-constrained to the descent orthant, with steps projected back onto
/// the orthant of the current iterate. Every accepted step strictly decreases
/// the composite objective. lambda = 0 reduces to plain L-BFGS.
L1QuasiNewtonResult minimize_l1(const SmoothObjective& f, Eigen::VectorXd x0, double lambda,
                                const L1QuasiNewtonOptions& options = {});

/// Minimum-norm subgradient of f + lambda |.|_1 at x given grad = df/dx.
Eigen::VectorXd l1_pseudo_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                   double lambda);

}  // namespace inftucker
