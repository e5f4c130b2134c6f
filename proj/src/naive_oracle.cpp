#include "inftucker/naive_oracle.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <numbers>

#include "inftucker/errors.hpp"

namespace inftucker::oracle {

namespace {

void check_cap(Index n, Index cap, const char* what) {
  if (n > cap) {
    throw UsageError(std::string(what) + ": dense oracle limited to n <= " + std::to_string(cap) + ", got " +
                     std::to_string(n));
  }
}

MatrixR symmetric_inverse(const MatrixR& a) {
  Eigen::LLT<MatrixR> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("dense oracle: matrix is not positive definite");
  return llt.solve(MatrixR::Identity(a.rows(), a.cols()));
}

Real log_det_spd(const MatrixR& a) {
  Eigen::LLT<MatrixR> llt(a);
  if (llt.info() != Eigen::Success) throw NumericalError("dense oracle: matrix is not positive definite");
  return 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

template <typename M>
M kron_of(std::span<const M> mats) {
  if (mats.empty()) throw ShapeError("dense_kron: empty factor list");
  Index rows = 1;
  for (const auto& m : mats) rows *= m.rows();
  check_cap(rows, kKronRowCap, "dense_kron");
  M out = mats.front();
  for (std::size_t k = 1; k < mats.size(); ++k) {
    const M& b = mats[k];
    M next(out.rows() * b.rows(), out.cols() * b.cols());
    for (Index i = 0; i < out.rows(); ++i)
      for (Index j = 0; j < out.cols(); ++j)
        next.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = out(i, j) * b;
    out = std::move(next);
  }
  return out;
}

MatrixR sigma_p_of(std::span<const SpectralGram> grams) {
  std::vector<MatrixR> mats;
  for (const auto& g : grams) mats.push_back(g.gram.cast<Real>());
  return kron_of<MatrixR>(mats);
}

// d k(u_a, u_b) / d u_a(j), written out per kernel family.
double kernel_partial(const KernelSpec& spec, const Eigen::MatrixXd& u, Index a, Index b, Index j) {
  const double diff = u(a, j) - u(b, j);
  const double dist2 = (u.row(a) - u.row(b)).squaredNorm();
  switch (spec.family) {
    case KernelFamily::gaussian:
      return -2.0 * spec.gamma * diff * std::exp(-spec.gamma * dist2);
    case KernelFamily::exponential: {
      const double d = std::sqrt(dist2);
      if (d == 0.0) return 0.0;
      return -spec.gamma * std::exp(-spec.gamma * d) * diff / d;
    }
    case KernelFamily::linear:
      return u(b, j);
  }
  return 0.0;
}

// dSigma_k / dU_k(i, j): only row and column i change.
MatrixR gram_derivative(const KernelSpec& spec, const Eigen::MatrixXd& u, Index i, Index j) {
  const Index n = u.rows();
  MatrixR e = MatrixR::Zero(n, n);
  for (Index b = 0; b < n; ++b) {
    const double p = kernel_partial(spec, u, i, b, j);
    if (b == i) {
      e(i, i) = 2.0 * p;
    } else {
      e(i, b) = p;
      e(b, i) = p;
    }
  }
  return e;
}

}  // namespace

Eigen::MatrixXd dense_kron(std::span<const Eigen::MatrixXd> mats) { return kron_of<Eigen::MatrixXd>(mats); }

Eigen::MatrixXd dense_sigma_p(std::span<const SpectralGram> grams) { return sigma_p_of(grams).cast<double>(); }

DenseGPState dense_posterior(const DenseTensor& target, std::span<const SpectralGram> grams, double tau,
                             double rho) {
  check_cap(target.size(), kPosteriorCap, "dense_posterior");
  DenseGPState s;
  s.sigma_p = sigma_p_of(grams);
  const Index n = s.sigma_p.rows();
  if (n != target.size()) throw ShapeError("dense_posterior: grams do not match target dims");
  const Real rho2 = Real(rho) * rho;
  const MatrixR shifted = s.sigma_p + Real(tau) * rho2 * MatrixR::Identity(n, n);
  // Sigma_p (tau rho^2 I + Sigma_p)^-1; the two factors commute.
  s.upsilon = rho2 * shifted.llt().solve(s.sigma_p);
  s.upsilon = (s.upsilon + s.upsilon.transpose()).eval() / 2;
  s.mu_vec = s.upsilon * target.values().cast<Real>() / rho2;
  return s;
}

double dense_trace_sigma_inv_upsilon(const MatrixR& sigma_p, const MatrixR& upsilon) {
  return static_cast<double>((symmetric_inverse(sigma_p) * upsilon).trace());
}

double dense_beta2(double nu, const DenseGPState& state) {
  const MatrixR inv = symmetric_inverse(state.sigma_p);
  return static_cast<double>((nu + state.mu_vec.dot(inv * state.mu_vec) + (inv * state.upsilon).trace()) / 2);
}

namespace {

struct DenseObjectiveParts {
  std::vector<MatrixR> grams;
  MatrixR sigma_inv;
  Index n = 1;
  Real value = 0;
};

DenseObjectiveParts dense_objective_parts(const TuckerFactors& factors, const MatrixR& upsilon,
                                          const VectorR& mu_vec, double tau, const ModelConfig& config) {
  check_factors(factors);
  DenseObjectiveParts p;
  for (std::size_t k = 0; k < factors.size(); ++k) {
    p.grams.push_back(gram_matrix(config.kernel(static_cast<Index>(k)), factors[k]).gram.cast<Real>());
    p.n *= factors[k].rows();
  }
  check_cap(p.n, kGradientCap, "dense objective");
  if (upsilon.rows() != p.n || mu_vec.size() != p.n) throw ShapeError("dense objective: state size mismatch");

  const MatrixR sigma_p = kron_of<MatrixR>(p.grams);
  p.sigma_inv = symmetric_inverse(sigma_p);
  const Real t = tau;
  Real l1 = 0;
  for (const auto& f : factors) l1 += f.cwiseAbs().sum();
  p.value = log_det_spd(sigma_p) + t * mu_vec.dot(p.sigma_inv * mu_vec) + t * (p.sigma_inv * upsilon).trace() +
            Real(config.l1_lambda) * l1;
  return p;
}

}  // namespace

Real dense_objective_value(const TuckerFactors& factors, const MatrixR& upsilon, const VectorR& mu_vec, double tau,
                           const ModelConfig& config) {
  return dense_objective_parts(factors, upsilon, mu_vec, tau, config).value;
}

DenseObjective dense_objective_and_gradient(const TuckerFactors& factors, const MatrixR& upsilon,
                                            const VectorR& mu_vec, double tau,
                                            const ModelConfig& config) {
  const auto order = factors.size();
  const DenseObjectiveParts p = dense_objective_parts(factors, upsilon, mu_vec, tau, config);
  const std::vector<MatrixR>& grams = p.grams;
  const MatrixR& sigma_inv = p.sigma_inv;
  const Index n = p.n;
  const Real t = tau;

  DenseObjective out;
  out.value = static_cast<double>(p.value);

  for (std::size_t k = 0; k < order; ++k) {
    const Eigen::MatrixXd& u = factors[k];
    const KernelSpec& spec = config.kernel(static_cast<Index>(k));
    const MatrixR a_k = symmetric_inverse(grams[k]);
    const Real weight = static_cast<Real>(n) / static_cast<Real>(u.rows());
    Eigen::MatrixXd g(u.rows(), u.cols());
    for (Index i = 0; i < u.rows(); ++i) {
      for (Index j = 0; j < u.cols(); ++j) {
        const MatrixR e = gram_derivative(spec, u, i, j);
        std::vector<MatrixR> parts = grams;
        parts[k] = e;
        const MatrixR d_sigma_p = kron_of<MatrixR>(parts);
        const MatrixR delta = -sigma_inv * d_sigma_p * sigma_inv;
        g(i, j) = static_cast<double>(weight * (a_k * e).trace() + t * mu_vec.dot(delta * mu_vec) +
                                      t * (delta * upsilon).trace());
      }
    }
    out.gradient.push_back(std::move(g));
  }
  return out;
}

DenseMoments dense_predictive(const DenseTensor& target, std::span<const SpectralGram> grams, double tau_star,
                              double rho, Index offset) {
  check_cap(target.size(), kPosteriorCap, "dense_predictive");
  const MatrixR sigma_p = sigma_p_of(grams);
  const Index n = sigma_p.rows();
  if (offset < 0 || offset >= n) throw IndexError("dense_predictive: offset out of range");
  const MatrixR shifted = sigma_p + Real(rho) * rho * tau_star * MatrixR::Identity(n, n);
  const Eigen::LLT<MatrixR> llt(shifted);
  const VectorR k = sigma_p.col(offset);
  DenseMoments m;
  m.mean = static_cast<double>(k.dot(llt.solve(target.values().cast<Real>())));
  m.variance = static_cast<double>(1 + (sigma_p(offset, offset) - k.dot(llt.solve(k))) / tau_star);
  return m;
}

double dense_normal_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
  const Index n = x.size();
  const MatrixR c = cov.cast<Real>();
  const VectorR r = (x - mean).cast<Real>();
  return static_cast<double>(-0.5L * n * std::log(2 * std::numbers::pi_v<Real>) - 0.5L * log_det_spd(c) -
                             0.5L * r.dot(c.llt().solve(r)));
}

double dense_t_logpdf_quadrature(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                 const Eigen::MatrixXd& cov, double nu) {
  const double n = static_cast<double>(x.size());
  const MatrixR c = cov.cast<Real>();
  const VectorR r = (x - mean).cast<Real>();
  const double q = static_cast<double>(r.dot(c.llt().solve(r)));
  const double log_norm_const = -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * static_cast<double>(log_det_spd(c));
  const double half = nu / 2.0;
  // Integrand over s = log(eta): Gam(eta; nu/2, nu/2) N(x; mean, cov/eta) eta.
  const auto log_integrand = [&](double s) {
    const double eta = std::exp(s);
    const double log_gamma_pdf = half * std::log(half) - std::lgamma(half) + (half - 1.0) * s - half * eta;
    return log_gamma_pdf + s + log_norm_const + 0.5 * n * s - 0.5 * eta * q;
  };
  const double s_peak = std::log((nu + n) / (nu + q));
  const double shift = log_integrand(s_peak);
  const auto integrand = [&](double s) { return std::exp(log_integrand(s) - shift); };
  const double lo = s_peak - 60.0;
  const double hi = s_peak + 8.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, lo, hi, 20, 1e-13);
  return shift + std::log(value);
}

}  // namespace inftucker::oracle
