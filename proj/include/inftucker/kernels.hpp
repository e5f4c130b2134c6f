#pragma once

#include <Eigen/Dense>

#include <string>

#include "inftucker/tensor.hpp"

namespace inftucker {

enum class KernelFamily { gaussian, exponential, linear };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// Covariance function over component-matrix rows.
///   gaussian:    exp(-gamma * |u - v|^2)
///   exponential: exp(-gamma * |u - v|)
///   linear:      <u, v>            (gamma unused)
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double gamma = 1.0;

  void validate() const;
  bool operator==(const KernelSpec&) const = default;
};

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& u,
                   const Eigen::Ref<const Eigen::VectorXd>& v);

/// Raw kernel matrix over the rows of `rows`, without jitter.
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& rows);

inline constexpr double kEigenvalueFloor = 1e-12;
inline constexpr double kInitialJitter = 1e-8;
inline constexpr double kMaxJitter = 1e-2;

/// A Gram matrix together with its symmetric eigendecomposition.
/// Eigenpairs are sorted by decreasing eigenvalue; every eigenvalue is at
/// least kEigenvalueFloor.
struct SpectralGram {
  Eigen::MatrixXd gram;     // kernel matrix + jitter * I
  Eigen::MatrixXd eigvecs;  // orthogonal
  Eigen::VectorXd eigvals;
  double jitter_applied = 0.0;

  Index size() const { return eigvals.size(); }
  double log_det() const { return eigvals.array().log().sum(); }

  /// V diag(f(lambda)) V^T.
  template <typename F>
  Eigen::MatrixXd spectral_map(F f) const {
    return eigvecs * eigvals.unaryExpr(f).asDiagonal() * eigvecs.transpose();
  }
  Eigen::MatrixXd inverse() const {
    return spectral_map([](double l) { return 1.0 / l; });
  }

  /// Builds a SpectralGram from an explicit spectrum; gram is V diag(l) V^T.
  static SpectralGram from_spectrum(Eigen::MatrixXd eigvecs, Eigen::VectorXd eigvals);
};

/// Kernel matrix plus jitter, eigendecomposed. Jitter starts at
/// kInitialJitter * mean(diag) and grows by 10x up to kMaxJitter * mean(diag)
/// while the smallest eigenvalue sits below kEigenvalueFloor; remaining
/// eigenvalues under the floor are clipped. Throws NumericalError if the
/// eigensolver fails or produces non-finite values.
SpectralGram gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& rows);

/// Same jitter/eigendecomposition procedure applied to an explicit symmetric matrix.
SpectralGram decompose_gram(const Eigen::MatrixXd& kernel);

struct TruncatedSpectrum {
  SpectralGram spectrum;
  Index retained = 0;
  double error_bound = 0.0;  // (1 - energy) * trace
};

/// Keeps the shortest leading run of eigenpairs holding at least `energy`
/// of the (jitter-free) spectral mass; the rest are set to the floor.
TruncatedSpectrum truncated_spectrum(const SpectralGram& sg, double energy);

/// Chain rule through the kernel: given a symmetric sensitivity matrix
/// G = df/dK, returns dF/dU with entries sum_ab G_ab dK_ab/du_ij.
/// The exponential kernel contributes 0 for coincident rows.
Eigen::MatrixXd kernel_gradient(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                                const Eigen::MatrixXd& sensitivity);

}  // namespace inftucker
