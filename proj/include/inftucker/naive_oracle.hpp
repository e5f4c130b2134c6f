#pragma once

// Dense reference implementations. Everything here materializes the full
// covariance Sigma_p = Sigma_1 kron ... kron Sigma_K and uses plain dense
// linear algebra, so it is only usable for small grids. None of it calls
// into the Kronecker fast path. Internally everything runs in long double so
// that the jittered, badly conditioned Gram matrices the fast path sees do
// not eat the reference's own accuracy.

#include <span>
#include <vector>

#include "inftucker/inference.hpp"
#include "inftucker/kernels.hpp"
#include "inftucker/tensor.hpp"

namespace inftucker::oracle {

inline constexpr Index kKronRowCap = 100;
inline constexpr Index kPosteriorCap = 100;
inline constexpr Index kGradientCap = 64;

using Real = long double;
using MatrixR = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
using VectorR = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

struct DenseGPState {
  MatrixR sigma_p;
  MatrixR upsilon;
  VectorR mu_vec;
};

struct DenseObjective {
  double value = 0.0;      // includes the l1 term
  TuckerFactors gradient;  // smooth part
};

struct DenseMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Kronecker product with rows ordered like vec_index (last factor fastest).
Eigen::MatrixXd dense_kron(std::span<const Eigen::MatrixXd> mats);

/// Sigma_p built from the Gram matrices (jitter included).
Eigen::MatrixXd dense_sigma_p(std::span<const SpectralGram> grams);

/// Upsilon = rho^2 Sigma_p (tau rho^2 I + Sigma_p)^-1, mu = Upsilon vec(target) / rho^2.
DenseGPState dense_posterior(const DenseTensor& target, std::span<const SpectralGram> grams, double tau,
                             double rho);

double dense_trace_sigma_inv_upsilon(const MatrixR& sigma_p, const MatrixR& upsilon);

/// beta2 = (nu + mu' Sigma_p^-1 mu + tr(Sigma_p^-1 Upsilon)) / 2.
double dense_beta2(double nu, const DenseGPState& state);

/// f(U) and its gradient, with every derivative formed as an explicit
/// Kronecker product: for u = U_k(i, j),
///   df/du = (n/n_k) tr(Sigma_k^-1 dSigma_k) + tau mu' D mu + tau tr(D Upsilon),
/// where D = dSigma_p^-1/du = -Sigma_p^-1 dSigma_p Sigma_p^-1.
/// f(U) alone, returned at the internal precision (for finite differences).
Real dense_objective_value(const TuckerFactors& factors, const MatrixR& upsilon, const VectorR& mu_vec, double tau,
                           const ModelConfig& config);

DenseObjective dense_objective_and_gradient(const TuckerFactors& factors, const MatrixR& upsilon,
                                            const VectorR& mu_vec, double tau,
                                            const ModelConfig& config);

/// Predictive moments at vec offset `offset`:
///   mean = k' (Sigma_p + rho^2 tau* I)^-1 vec(target)
///   var  = 1 + (k(i,i) - k' (Sigma_p + rho^2 tau* I)^-1 k) / tau*
DenseMoments dense_predictive(const DenseTensor& target, std::span<const SpectralGram> grams, double tau_star,
                              double rho, Index offset);

double dense_normal_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

/// Multivariate t log-density by integrating the Gamma(nu/2, nu/2) scale
/// mixture of normals numerically over log(eta).
double dense_t_logpdf_quadrature(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& cov, double nu);

}  // namespace inftucker::oracle
