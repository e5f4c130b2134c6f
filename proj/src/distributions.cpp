#include "inftucker/distributions.hpp"

#include <cmath>
#include <numbers>

namespace inftucker {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

// Mills ratio (1 - Phi(t)) / phi(t) for large positive t, by the Laplace
// continued fraction 1 / (t + 1 / (t + 2 / (t + 3 / (t + ...)))).
double mills_ratio_upper(double t) {
  double acc = t;
  for (int k = 60; k >= 1; --k) acc = t + k / acc;
  return 1.0 / acc;
}

constexpr double kTailSwitch = -8.0;

}  // namespace

double std_normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_std_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-std_normal_cdf(-x));
  if (x >= kTailSwitch) return std::log(std_normal_cdf(x));
  // Phi(x) = phi(x) * R(-x)
  return -0.5 * x * x - 0.5 * kLogTwoPi + std::log(mills_ratio_upper(-x));
}

double truncated_normal_mean(double mu, int y) {
  if (y != 0 && y != 1) throw UsageError("truncated_normal_mean: y must be 0 or 1");
  const double s = 2.0 * y - 1.0;
  const double x = s * mu;
  const double ratio = x >= kTailSwitch ? std_normal_pdf(x) / std_normal_cdf(x)
                                        : 1.0 / mills_ratio_upper(-x);
  return mu + s * ratio;
}

void check_grams_match(const Dims& dims, std::span<const SpectralGram> grams) {
  if (grams.size() != dims.size()) {
    throw ShapeError("need one Gram matrix per mode: got " + std::to_string(grams.size()) +
                     " for order " + std::to_string(dims.size()));
  }
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (grams[k].size() != dims[k]) {
      throw ShapeError("Gram for mode " + std::to_string(k + 1) + " has size " +
                       std::to_string(grams[k].size()) + ", mode has " + std::to_string(dims[k]));
    }
  }
}

double whitened_norm_sq(const DenseTensor& x, std::span<const SpectralGram> grams) {
  check_grams_match(x.dims(), grams);
  DenseTensor w = x;
  for (Index k = 0; k < x.order(); ++k) {
    const auto& g = grams[k];
    w = mode_product(w, g.eigvals.cwiseSqrt().cwiseInverse().asDiagonal() * g.eigvecs.transpose(), k);
  }
  return frobenius_norm_sq(w);
}

double kronecker_log_det(std::span<const SpectralGram> grams) {
  Index n = 1;
  for (const auto& g : grams) n *= g.size();
  double total = 0.0;
  for (const auto& g : grams) total += static_cast<double>(n / g.size()) * g.log_det();
  return total;
}

double tensor_normal_logpdf(const TensorNormalParams& p, const DenseTensor& m) {
  if (m.dims() != p.mean.dims()) throw ShapeError("tensor_normal_logpdf: dims mismatch");
  const double n = static_cast<double>(m.size());
  const DenseTensor diff(m.dims(), m.values() - p.mean.values());
  const double q = whitened_norm_sq(diff, p.mode_grams);
  const double out = -0.5 * n * kLogTwoPi - 0.5 * kronecker_log_det(p.mode_grams) - 0.5 * q;
  if (!std::isfinite(out)) throw NumericalError("tensor_normal_logpdf is not finite");
  return out;
}

double tensor_t_logpdf(const TensorTParams& p, const DenseTensor& m) {
  if (!(p.nu > 2.0)) throw UsageError("tensor t requires nu > 2");
  if (m.dims() != p.mean.dims()) throw ShapeError("tensor_t_logpdf: dims mismatch");
  const double n = static_cast<double>(m.size());
  const double nu = p.nu;
  const DenseTensor diff(m.dims(), m.values() - p.mean.values());
  const double q = whitened_norm_sq(diff, p.mode_grams);
  const double out = std::lgamma(0.5 * (n + nu)) - std::lgamma(0.5 * nu) -
                     0.5 * n * std::log(nu * std::numbers::pi) -
                     0.5 * kronecker_log_det(p.mode_grams) -
                     0.5 * (n + nu) * std::log1p(q / nu);
  if (!std::isfinite(out)) throw NumericalError("tensor_t_logpdf is not finite");
  return out;
}

DenseTensor sample_tensor_normal(SeededRandomSource& rng, const TensorNormalParams& p) {
  check_grams_match(p.mean.dims(), p.mode_grams);
  DenseTensor e(p.mean.dims(), rng.normal_vector(p.mean.size()));
  for (Index k = 0; k < e.order(); ++k) {
    const auto& g = p.mode_grams[k];
    e = mode_product(e, g.spectral_map([](double l) { return std::sqrt(l); }), k);
  }
  e.values() += p.mean.values();
  return e;
}

DenseTensor sample_tensor_t(SeededRandomSource& rng, const TensorTParams& p) {
  if (!(p.nu > 2.0)) throw UsageError("tensor t requires nu > 2");
  const double eta = rng.gamma(0.5 * p.nu, 0.5 * p.nu);
  DenseTensor s = sample_tensor_normal(rng, TensorNormalParams{DenseTensor::Zero(p.mean.dims()), p.mode_grams});
  s.values() = p.mean.values() + s.values() / std::sqrt(eta);
  return s;
}

namespace {

DenseTensor apply_feature_maps(DenseTensor core, std::span<const Eigen::MatrixXd> feature_maps) {
  for (Index k = 0; k < core.order(); ++k) core = mode_product(core, feature_maps[k], k);
  return core;
}

Dims core_dims(Index r, std::span<const Eigen::MatrixXd> feature_maps) {
  if (feature_maps.empty()) throw ShapeError("sample_finite_tucker: need at least one feature map");
  for (const auto& f : feature_maps) {
    if (f.cols() != r) throw ShapeError("feature maps must have r columns");
  }
  return Dims(feature_maps.size(), r);
}

}  // namespace

DenseTensor sample_finite_tucker(SeededRandomSource& rng, Index r,
                                 std::span<const Eigen::MatrixXd> feature_maps) {
  const Dims dims = core_dims(r, feature_maps);
  DenseTensor core(dims, rng.normal_vector(num_elements(dims)));
  return apply_feature_maps(std::move(core), feature_maps);
}

DenseTensor sample_finite_tucker_t(SeededRandomSource& rng, Index r, double nu,
                                   std::span<const Eigen::MatrixXd> feature_maps) {
  if (!(nu > 2.0)) throw UsageError("tensor t requires nu > 2");
  const Dims dims = core_dims(r, feature_maps);
  const double eta = rng.gamma(0.5 * nu, 0.5 * nu);
  DenseTensor core(dims, rng.normal_vector(num_elements(dims)) / std::sqrt(eta));
  return apply_feature_maps(std::move(core), feature_maps);
}

}  // namespace inftucker
