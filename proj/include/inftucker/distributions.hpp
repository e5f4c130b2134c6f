#pragma once

#include <span>
#include <vector>

#include "inftucker/kernels.hpp"
#include "inftucker/random.hpp"
#include "inftucker/tensor.hpp"

namespace inftucker {

double std_normal_pdf(double x);
double std_normal_cdf(double x);
/// log Phi(x), accurate far into the lower tail.
double log_std_normal_cdf(double x);

/// E[z] for z ~ N(mu, 1) truncated to z > 0 (y = 1) or z <= 0 (y = 0).
/// Deep tails switch to a continued-fraction Mills ratio.
double truncated_normal_mean(double mu, int y);

struct TensorNormalParams {
  DenseTensor mean;
  std::vector<SpectralGram> mode_grams;
};

struct TensorTParams {
  double nu = 10.0;
  DenseTensor mean;
  std::vector<SpectralGram> mode_grams;
};

/// ||X x S^{-1/2}||^2 = vec(X)^T (Sigma_1 kron ... kron Sigma_K)^{-1} vec(X),
/// computed by whitening each mode with Lambda^{-1/2} V^T.
double whitened_norm_sq(const DenseTensor& x, std::span<const SpectralGram> grams);

/// sum_k (n / n_k) log|Sigma_k| = log|Sigma_1 kron ... kron Sigma_K|.
double kronecker_log_det(std::span<const SpectralGram> grams);

double tensor_normal_logpdf(const TensorNormalParams& p, const DenseTensor& m);
double tensor_t_logpdf(const TensorTParams& p, const DenseTensor& m);

/// mean + E x_1 Sigma_1^{1/2} ... x_K Sigma_K^{1/2}, E iid standard normal.
DenseTensor sample_tensor_normal(SeededRandomSource& rng, const TensorNormalParams& p);

/// Gamma mixture: eta ~ Gam(nu/2, nu/2), then a tensor normal with every mode
/// Gram scaled by eta^{-1/K}.
DenseTensor sample_tensor_t(SeededRandomSource& rng, const TensorTParams& p);

/// W x_1 Phi_1 ... x_K Phi_K with W an r x ... x r core of iid standard
/// normals; feature_maps[k] is n_k x r.
DenseTensor sample_finite_tucker(SeededRandomSource& rng, Index r,
                                 std::span<const Eigen::MatrixXd> feature_maps);

/// As above with a tensor-t core TT(nu, 0, {I_r}).
DenseTensor sample_finite_tucker_t(SeededRandomSource& rng, Index r, double nu,
                                   std::span<const Eigen::MatrixXd> feature_maps);

void check_grams_match(const Dims& dims, std::span<const SpectralGram> grams);

}  // namespace inftucker
