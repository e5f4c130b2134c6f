#include "inftucker/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace inftucker {

Eigen::VectorXd l1_pseudo_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                   double lambda) {
  Eigen::VectorXd pg(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0) {
      pg[i] = grad[i] + lambda;
    } else if (x[i] < 0.0) {
      pg[i] = grad[i] - lambda;
    } else if (grad[i] + lambda < 0.0) {
      pg[i] = grad[i] + lambda;
    } else if (grad[i] - lambda > 0.0) {
      pg[i] = grad[i] - lambda;
    } else {
      pg[i] = 0.0;
    }
  }
  return pg;
}

namespace {

struct CurvaturePair {
  Eigen::VectorXd s;
  Eigen::VectorXd y;
  double rho;
};

// Two-loop recursion: approximates H * v from the stored pairs.
Eigen::VectorXd apply_inverse_hessian(const std::deque<CurvaturePair>& pairs, Eigen::VectorXd v) {
  std::vector<double> alpha(pairs.size());
  for (std::size_t i = pairs.size(); i-- > 0;) {
    alpha[i] = pairs[i].rho * pairs[i].s.dot(v);
    v -= alpha[i] * pairs[i].y;
  }
  if (!pairs.empty()) {
    const auto& last = pairs.back();
    v *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double beta = pairs[i].rho * pairs[i].y.dot(v);
    v += (alpha[i] - beta) * pairs[i].s;
  }
  return v;
}

double l1_norm(const Eigen::VectorXd& x) { return x.lpNorm<1>(); }

}  // namespace

L1QuasiNewtonResult minimize_l1(const SmoothObjective& f, Eigen::VectorXd x0, double lambda,
                                const L1QuasiNewtonOptions& options) {
  L1QuasiNewtonResult result;
  const Eigen::Index dim = x0.size();
  Eigen::VectorXd x = std::move(x0);
  Eigen::VectorXd grad(dim);
  double smooth = f(x, grad);
  if (!std::isfinite(smooth)) {
    result.x = x;
    result.value = smooth;
    result.line_search_failed = true;
    return result;
  }
  double value = smooth + lambda * l1_norm(x);

  std::deque<CurvaturePair> pairs;
  Eigen::VectorXd trial_grad(dim);
  for (int iter = 0; iter < options.max_iters; ++iter) {
    const Eigen::VectorXd pg = l1_pseudo_gradient(x, grad, lambda);
    result.pseudo_grad_norm = pg.lpNorm<Eigen::Infinity>();
    if (result.pseudo_grad_norm <= options.pseudo_grad_tol) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd dir = -apply_inverse_hessian(pairs, pg);
    // Keep only components that agree with steepest descent.
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (dir[i] * pg[i] >= 0.0) dir[i] = 0.0;
    }
    if (dir.squaredNorm() == 0.0) dir = -pg;

    Eigen::VectorXd orthant(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      orthant[i] = x[i] != 0.0 ? (x[i] > 0.0 ? 1.0 : -1.0) : (pg[i] < 0.0 ? 1.0 : (pg[i] > 0.0 ? -1.0 : 0.0));
    }

    double step = pairs.empty() ? std::min(1.0, 1.0 / pg.norm()) : 1.0;
    bool accepted = false;
    Eigen::VectorXd trial(dim);
    double trial_smooth = 0.0, trial_value = 0.0;
    for (int ls = 0; ls < options.max_line_search; ++ls) {
      trial = x + step * dir;
      for (Eigen::Index i = 0; i < dim; ++i) {
        if (trial[i] * orthant[i] <= 0.0) trial[i] = 0.0;
      }
      trial_smooth = f(trial, trial_grad);
      if (std::isfinite(trial_smooth)) {
        trial_value = trial_smooth + lambda * l1_norm(trial);
        const double decrease = pg.dot(trial - x);
        if (trial_value <= value + options.armijo * decrease && trial_value < value) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.line_search_failed = true;
      break;
    }

    CurvaturePair pair{trial - x, trial_grad - grad, 0.0};
    const double sy = pair.s.dot(pair.y);
    if (sy > 1e-12 * pair.s.norm() * pair.y.norm() && sy > 0.0) {
      pair.rho = 1.0 / sy;
      pairs.push_back(std::move(pair));
      if (static_cast<int>(pairs.size()) > options.history) pairs.pop_front();
    }

    const double previous = value;
    x = trial;
    grad = trial_grad;
    smooth = trial_smooth;
    value = trial_value;
    result.iterations = iter + 1;
    if ((previous - value) <= options.rel_tol * std::max(1.0, std::abs(previous))) {
      result.converged = true;
      break;
    }
  }
  result.pseudo_grad_norm = l1_pseudo_gradient(x, grad, lambda).lpNorm<Eigen::Infinity>();
  result.x = std::move(x);
  result.value = value;
  return result;
}

}  // namespace inftucker
