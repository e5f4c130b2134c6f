#pragma once

// Variational EM for infinite Tucker decomposition.
//
// The latent tensor M has prior vec(M) | eta ~ N(0, Sigma_p / eta) with
// Sigma_p = Sigma_1 kron ... kron Sigma_K, Sigma_k = k(U_k, U_k), and
// eta ~ Gam(nu/2, nu/2) for the t process (eta = 1 for the Gaussian process).
// Observations are probit (through a latent z ~ N(m, 1)) or Gaussian with
// standard deviation sigma. Every operation on Sigma_p goes through the
// per-mode eigendecompositions; no n x n matrix is ever formed.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inftucker/kernels.hpp"
#include "inftucker/mask.hpp"
#include "inftucker/random.hpp"
#include "inftucker/tensor.hpp"

namespace inftucker {

enum class NoiseModel { probit, gaussian };
enum class ProcessKind { gaussian_process, t_process };

std::string to_string(NoiseModel noise);
std::string to_string(ProcessKind process);
NoiseModel noise_model_from_string(const std::string& name);
ProcessKind process_kind_from_string(const std::string& name);

struct ModelConfig {
  NoiseModel noise = NoiseModel::gaussian;
  ProcessKind process = ProcessKind::t_process;
  double nu = 10.0;
  std::vector<Index> rank_per_mode;  // one entry, or one per mode
  std::vector<KernelSpec> kernels;   // one entry, or one per mode
  double l1_lambda = 0.0;
  double gaussian_sigma = 1.0;
  int max_em_iters = 200;
  double em_rel_tol = 1e-5;
  int mstep_max_iters = 100;
  int lbfgs_history = 10;
  double mstep_grad_tol = 1e-6;
  double mstep_rel_tol = 1e-9;
  std::uint64_t seed = 0;
  double truncation_energy = 1.0;

  /// Noise scale rho: 1 for probit, sigma for Gaussian noise.
  double rho() const { return noise == NoiseModel::probit ? 1.0 : gaussian_sigma; }
  Index rank(Index mode) const;
  const KernelSpec& kernel(Index mode) const;
  void validate(Index order) const;
};

struct VariationalState {
  // E[Z] for probit; for Gaussian noise the observations with missing cells
  // imputed by the current posterior mean.
  DenseTensor target;
  // Probit only: the posterior mean each truncated q(z_i) was centred on.
  DenseTensor anchor;
  DenseTensor mu;        // E[M]
  DenseTensor ups_diag;  // eigenvalues of Upsilon in the Kronecker eigenbasis
  std::vector<Eigen::MatrixXd> basis;  // per-mode eigenvectors of that basis
  double beta1 = 0.0;
  double beta2 = 0.0;
  double tau = 1.0;  // E[eta]
};

struct PosteriorMoments {
  DenseTensor mu;
  DenseTensor ups_diag;
};

struct GammaPosterior {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double tau = 0.0;
};

/// Statistics the M-step holds fixed.
struct MStepStats {
  DenseTensor mu;
  DenseTensor ups_diag;
  std::vector<Eigen::MatrixXd> basis;
  double tau = 1.0;

  static MStepStats from_state(const VariationalState& state);
};

struct ObjectiveAndGradient {
  double value = 0.0;         // includes the l1 term
  TuckerFactors gradient;     // gradient of the smooth part only
};

struct FactorUpdate {
  TuckerFactors factors;
  double objective = 0.0;
  double pseudo_grad_norm = 0.0;
  int iterations = 0;
  bool line_search_failed = false;
};

struct EmIterationRecord {
  int iteration = 0;
  double objective = 0.0;
  double mstep_objective = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double tau = 1.0;
  bool mstep_line_search_failed = false;
};

struct FittedModel {
  TuckerFactors factors;
  std::vector<SpectralGram> mode_grams;  // rebuilt from the final factors
  ModelConfig config;
  VariationalState state;
  ObservationMask mask;  // training cells
  double tau_star = 1.0;
  std::vector<double> objective_trace;
  std::vector<EmIterationRecord> history;
  bool converged = false;

  const Dims& dims() const { return mask.dims(); }
};

std::vector<SpectralGram> build_grams(const TuckerFactors& factors, const ModelConfig& config);

/// q(z) update: truncated-normal means on observed cells, E[m] elsewhere.
DenseTensor e_step_z(const DenseTensor& mu, const DenseTensor& y, const ObservationMask& mask);

/// q(M) update. With lambda_j the Kronecker eigenvalue products,
///   ups_diag_j = rho^2 lambda_j / (tau rho^2 + lambda_j)
///   mu         = ((target x V^T) (.) ups_diag) x V / rho^2.
PosteriorMoments e_step_m(const DenseTensor& target, std::span<const SpectralGram> grams,
                          double tau, double rho);

/// q(eta) update: beta1 = (nu + n) / 2, beta2 = (nu + mu' Sigma_p^-1 mu + tr(Sigma_p^-1 Upsilon)) / 2.
GammaPosterior e_step_eta(double nu, const DenseTensor& mu, const DenseTensor& ups_diag,
                          std::span<const SpectralGram> grams);

/// tr(Sigma_p^-1 Upsilon) when Upsilon is diagonal in the eigenbasis of `grams`.
double trace_sigma_inv_upsilon(std::span<const SpectralGram> grams, const DenseTensor& ups_diag);

/// tr(Sigma_p^-1 Upsilon) with Upsilon = (kron basis) diag(ups_diag) (kron basis)^T
/// and Sigma_p from `grams` (the bases may differ).
double trace_sigma_inv_upsilon(std::span<const SpectralGram> grams, const DenseTensor& ups_diag,
                               std::span<const Eigen::MatrixXd> basis);

/// f(U) = sum_k (n/n_k) log|Sigma_k| + tau ||E[M] x S^{-1/2}||^2
///        + tau tr(Sigma_p^-1 Upsilon) + lambda sum_k |U_k|_1
double m_step_objective(const TuckerFactors& factors, const MStepStats& stats,
                        const ModelConfig& config);
TuckerFactors m_step_gradient(const TuckerFactors& factors, const MStepStats& stats,
                              const ModelConfig& config);
ObjectiveAndGradient m_step_evaluate(const TuckerFactors& factors, const MStepStats& stats,
                                     const ModelConfig& config);

FactorUpdate optimize_factors(const TuckerFactors& initial, const MStepStats& stats,
                              const ModelConfig& config);

/// Tracked EM objective: -2 * ELBO + lambda * sum_k |U_k|_1, with additive
/// constants that do not depend on q or U dropped. Its U-dependent part is
/// exactly f(U), and each E-step update minimizes it in one factor of q, so
/// it is non-increasing over EM cycles.
double variational_objective(const TuckerFactors& factors, const VariationalState& state,
                             const ModelConfig& config, const DenseTensor& y,
                             const ObservationMask& mask);

FittedModel fit(const DenseTensor& y, const ObservationMask& mask, const ModelConfig& config);
FittedModel fit(const DenseTensor& y, const ObservationMask& mask, const ModelConfig& config,
                SeededRandomSource& rng);

/// Flattening used by the optimizer: factors concatenated, each column-major.
Eigen::VectorXd flatten_factors(const TuckerFactors& factors);
TuckerFactors unflatten_factors(const Eigen::VectorXd& x, const TuckerFactors& shape);

}  // namespace inftucker
