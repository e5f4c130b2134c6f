#include "inftucker/kernels.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace inftucker {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::gaussian: return "gaussian";
    case KernelFamily::exponential: return "exponential";
    case KernelFamily::linear: return "linear";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "gaussian") return KernelFamily::gaussian;
  if (name == "exponential") return KernelFamily::exponential;
  if (name == "linear") return KernelFamily::linear;
  throw UsageError("unknown kernel family '" + name + "'");
}

void KernelSpec::validate() const {
  if (family != KernelFamily::linear && !(gamma > 0.0 && std::isfinite(gamma))) {
    throw UsageError("kernel gamma must be positive, got " + std::to_string(gamma));
  }
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& u,
                   const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (u.size() != v.size()) throw ShapeError("kernel_eval: argument lengths differ");
  switch (spec.family) {
    case KernelFamily::gaussian: return std::exp(-spec.gamma * (u - v).squaredNorm());
    case KernelFamily::exponential: return std::exp(-spec.gamma * (u - v).norm());
    case KernelFamily::linear: return u.dot(v);
  }
  return 0.0;
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& rows) {
  const Index n = rows.rows();
  Eigen::MatrixXd k(n, n);
  if (spec.family == KernelFamily::linear) {
    k.noalias() = rows * rows.transpose();
    return k;
  }
  for (Index a = 0; a < n; ++a) {
    k(a, a) = 1.0;
    for (Index b = a + 1; b < n; ++b) {
      const double v = kernel_eval(spec, rows.row(a).transpose(), rows.row(b).transpose());
      k(a, b) = v;
      k(b, a) = v;
    }
  }
  return k;
}

SpectralGram SpectralGram::from_spectrum(Eigen::MatrixXd eigvecs, Eigen::VectorXd eigvals) {
  if (eigvecs.rows() != eigvecs.cols() || eigvecs.cols() != eigvals.size()) {
    throw ShapeError("from_spectrum: eigenvector/eigenvalue sizes disagree");
  }
  SpectralGram sg;
  sg.gram = eigvecs * eigvals.asDiagonal() * eigvecs.transpose();
  sg.eigvecs = std::move(eigvecs);
  sg.eigvals = std::move(eigvals);
  return sg;
}

namespace {

struct Eigenpairs {
  Eigen::MatrixXd vecs;
  Eigen::VectorXd vals;
};

Eigenpairs sorted_eigen(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) {
    throw NumericalError("symmetric eigendecomposition did not converge (size " +
                         std::to_string(m.rows()) + ")");
  }
  // Eigen returns ascending order; flip to descending.
  Eigenpairs out{es.eigenvectors().rowwise().reverse(), es.eigenvalues().reverse()};
  if (!out.vals.allFinite() || !out.vecs.allFinite()) {
    throw NumericalError("eigendecomposition produced non-finite values");
  }
  return out;
}

}  // namespace

SpectralGram decompose_gram(const Eigen::MatrixXd& kernel) {
  if (kernel.rows() != kernel.cols() || kernel.rows() == 0) {
    throw ShapeError("gram matrix must be square and nonempty");
  }
  if (!kernel.allFinite()) throw NumericalError("kernel matrix has non-finite entries");
  const double mean_diag = kernel.diagonal().mean();
  const double scale = mean_diag > 0.0 ? mean_diag : 1.0;

  double jitter = kInitialJitter * scale;
  const double max_jitter = kMaxJitter * scale;
  Eigen::MatrixXd gram;
  Eigenpairs pairs;
  for (;;) {
    gram = kernel;
    gram.diagonal().array() += jitter;
    pairs = sorted_eigen(gram);
    if (pairs.vals.minCoeff() >= kEigenvalueFloor || jitter * 10.0 > max_jitter * (1.0 + 1e-12)) break;
    jitter *= 10.0;
  }
  SpectralGram sg;
  sg.gram = std::move(gram);
  sg.eigvecs = std::move(pairs.vecs);
  sg.eigvals = pairs.vals.cwiseMax(kEigenvalueFloor);
  sg.jitter_applied = jitter;
  return sg;
}

SpectralGram gram_matrix(const KernelSpec& spec, const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0 || rows.cols() == 0) throw ShapeError("gram_matrix: rows must be nonempty");
  spec.validate();
  return decompose_gram(kernel_matrix(spec, rows));
}

TruncatedSpectrum truncated_spectrum(const SpectralGram& sg, double energy) {
  if (!(energy > 0.0 && energy <= 1.0)) {
    throw UsageError("truncation energy must lie in (0, 1], got " + std::to_string(energy));
  }
  TruncatedSpectrum out;
  out.spectrum = sg;
  const Index n = sg.size();
  const Eigen::VectorXd mass = (sg.eigvals.array() - sg.jitter_applied).cwiseMax(0.0);
  const double total = mass.sum();
  out.error_bound = (1.0 - energy) * total;
  if (energy >= 1.0) {
    out.retained = n;
    return out;
  }
  double cumulative = 0.0;
  Index keep = n;
  for (Index i = 0; i < n; ++i) {
    cumulative += mass[i];
    if (cumulative >= energy * total) {
      keep = i + 1;
      break;
    }
  }
  out.retained = keep;
  for (Index i = keep; i < n; ++i) out.spectrum.eigvals[i] = kEigenvalueFloor;
  out.spectrum.gram =
      out.spectrum.eigvecs * out.spectrum.eigvals.asDiagonal() * out.spectrum.eigvecs.transpose();
  return out;
}

Eigen::MatrixXd kernel_gradient(const KernelSpec& spec, const Eigen::MatrixXd& rows,
                                const Eigen::MatrixXd& sensitivity) {
  const Index n = rows.rows();
  if (sensitivity.rows() != n || sensitivity.cols() != n) {
    throw ShapeError("kernel_gradient: sensitivity must be n x n");
  }
  if (spec.family == KernelFamily::linear) return 2.0 * sensitivity * rows;

  // Stationary kernels: dF/du_i = c * sum_b H_ib (u_i - u_b).
  Eigen::MatrixXd h(n, n);
  double c = 0.0;
  if (spec.family == KernelFamily::gaussian) {
    c = -4.0 * spec.gamma;
    for (Index a = 0; a < n; ++a)
      for (Index b = 0; b < n; ++b)
        h(a, b) = a == b ? 0.0
                         : sensitivity(a, b) *
                               std::exp(-spec.gamma * (rows.row(a) - rows.row(b)).squaredNorm());
  } else {
    c = -2.0 * spec.gamma;
    for (Index a = 0; a < n; ++a) {
      for (Index b = 0; b < n; ++b) {
        const double d = (rows.row(a) - rows.row(b)).norm();
        h(a, b) = (a == b || d == 0.0) ? 0.0 : sensitivity(a, b) * std::exp(-spec.gamma * d) / d;
      }
    }
  }
  Eigen::MatrixXd grad = h.rowwise().sum().asDiagonal() * rows;
  grad.noalias() -= h * rows;
  return c * grad;
}

}  // namespace inftucker
