#include "inftucker/inference.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <limits>
#include <numbers>

#include "inftucker/distributions.hpp"
#include "inftucker/optimizer.hpp"

namespace inftucker {

std::string to_string(NoiseModel noise) {
  return noise == NoiseModel::probit ? "probit" : "gaussian";
}

std::string to_string(ProcessKind process) {
  return process == ProcessKind::t_process ? "t_process" : "gaussian_process";
}

NoiseModel noise_model_from_string(const std::string& name) {
  if (name == "probit") return NoiseModel::probit;
  if (name == "gaussian") return NoiseModel::gaussian;
  throw UsageError("unknown noise model '" + name + "'");
}

ProcessKind process_kind_from_string(const std::string& name) {
  if (name == "t_process" || name == "t") return ProcessKind::t_process;
  if (name == "gaussian_process" || name == "gp") return ProcessKind::gaussian_process;
  throw UsageError("unknown process '" + name + "'");
}

Index ModelConfig::rank(Index mode) const {
  if (rank_per_mode.empty()) return 3;
  return rank_per_mode.size() == 1 ? rank_per_mode.front() : rank_per_mode.at(static_cast<std::size_t>(mode));
}

const KernelSpec& ModelConfig::kernel(Index mode) const {
  static const KernelSpec kDefault{};
  if (kernels.empty()) return kDefault;
  return kernels.size() == 1 ? kernels.front() : kernels.at(static_cast<std::size_t>(mode));
}

void ModelConfig::validate(Index order) const {
  if (process == ProcessKind::t_process && !(nu > 2.0)) throw UsageError("nu must exceed 2 for the t process");
  if (noise == NoiseModel::gaussian && !(gaussian_sigma > 0.0)) throw UsageError("sigma must be positive");
  if (rank_per_mode.size() > 1 && static_cast<Index>(rank_per_mode.size()) != order) {
    throw UsageError("rank list has " + std::to_string(rank_per_mode.size()) + " entries for order " +
                     std::to_string(order));
  }
  if (kernels.size() > 1 && static_cast<Index>(kernels.size()) != order) {
    throw UsageError("kernel list has " + std::to_string(kernels.size()) + " entries for order " +
                     std::to_string(order));
  }
  for (Index k = 0; k < order; ++k) {
    if (rank(k) < 1) throw UsageError("ranks must be >= 1");
    kernel(k).validate();
  }
  if (l1_lambda < 0.0) throw UsageError("lambda must be nonnegative");
  if (!(truncation_energy > 0.0 && truncation_energy <= 1.0)) throw UsageError("truncation_energy must lie in (0, 1]");
  if (max_em_iters < 1 || mstep_max_iters < 0 || lbfgs_history < 1) throw UsageError("iteration limits must be positive");
}

MStepStats MStepStats::from_state(const VariationalState& state) {
  return MStepStats{state.mu, state.ups_diag, state.basis, state.tau};
}

std::vector<SpectralGram> build_grams(const TuckerFactors& factors, const ModelConfig& config) {
  std::vector<SpectralGram> grams;
  grams.reserve(factors.size());
  for (std::size_t k = 0; k < factors.size(); ++k) {
    grams.push_back(gram_matrix(config.kernel(static_cast<Index>(k)), factors[k]));
  }
  return grams;
}

DenseTensor e_step_z(const DenseTensor& mu, const DenseTensor& y, const ObservationMask& mask) {
  if (mu.dims() != y.dims() || mask.dims() != y.dims()) throw ShapeError("e_step_z: dims mismatch");
  DenseTensor ez = mu;
  for (Index i = 0; i < y.size(); ++i) {
    if (!mask.observed(i)) continue;
    const double v = y[i];
    if (v != 0.0 && v != 1.0) {
      throw UsageError("probit observations must be 0 or 1, got " + std::to_string(v) + " at vec position " +
                       std::to_string(i + 1));
    }
    ez[i] = truncated_normal_mean(mu[i], static_cast<int>(v));
  }
  return ez;
}

namespace {

// Kronecker products of per-mode eigenvalues, laid out as a tensor.
DenseTensor eigenvalue_products(std::span<const SpectralGram> grams, const Dims& dims) {
  std::vector<Eigen::VectorXd> vals;
  vals.reserve(grams.size());
  for (const auto& g : grams) vals.push_back(g.eigvals);
  return DenseTensor(dims, kron_vectors(vals));
}

DenseTensor to_eigenbasis(DenseTensor x, std::span<const Eigen::MatrixXd> basis) {
  for (Index k = 0; k < x.order(); ++k) x = mode_product(x, basis[k].transpose(), k);
  return x;
}

DenseTensor from_eigenbasis(DenseTensor x, std::span<const Eigen::MatrixXd> basis) {
  for (Index k = 0; k < x.order(); ++k) x = mode_product(x, basis[k], k);
  return x;
}

std::vector<Eigen::MatrixXd> eigvec_list(std::span<const SpectralGram> grams) {
  std::vector<Eigen::MatrixXd> out;
  out.reserve(grams.size());
  for (const auto& g : grams) out.push_back(g.eigvecs);
  return out;
}

void check_state_shape(const MStepStats& stats, const TuckerFactors& factors) {
  check_factors(factors);
  if (static_cast<Index>(factors.size()) != stats.mu.order() || stats.ups_diag.dims() != stats.mu.dims() ||
      stats.basis.size() != factors.size()) {
    throw ShapeError("M-step statistics do not match the factor list");
  }
  for (std::size_t k = 0; k < factors.size(); ++k) {
    if (factors[k].rows() != stats.mu.dim(static_cast<Index>(k)) ||
        stats.basis[k].rows() != factors[k].rows()) {
      throw ShapeError("factor " + std::to_string(k + 1) + " row count does not match mode size");
    }
  }
}

}  // namespace

PosteriorMoments e_step_m(const DenseTensor& target, std::span<const SpectralGram> grams, double tau,
                          double rho) {
  check_grams_match(target.dims(), grams);
  if (!(tau > 0.0) || !(rho > 0.0)) throw NumericalError("e_step_m: tau and rho must be positive");
  const double rho2 = rho * rho;
  DenseTensor lambda = eigenvalue_products(grams, target.dims());
  if (lambda.values().minCoeff() <= 0.0) throw NumericalError("e_step_m: non-positive Kronecker eigenvalue");
  PosteriorMoments out;
  out.ups_diag = DenseTensor(target.dims(),
                             (rho2 * lambda.values().array() / (tau * rho2 + lambda.values().array())).matrix());
  const auto basis = eigvec_list(grams);
  DenseTensor coeffs = to_eigenbasis(target, basis);
  coeffs.values().array() *= out.ups_diag.values().array() / rho2;
  out.mu = from_eigenbasis(std::move(coeffs), basis);
  return out;
}

double trace_sigma_inv_upsilon(std::span<const SpectralGram> grams, const DenseTensor& ups_diag) {
  check_grams_match(ups_diag.dims(), grams);
  std::vector<Eigen::VectorXd> inv;
  inv.reserve(grams.size());
  for (const auto& g : grams) inv.push_back(g.eigvals.cwiseInverse());
  return multi_mode_vector_contract(ups_diag, inv);
}

namespace {

// d_k = diag(B_k^T Sigma_k^{-1} B_k) for each mode.
std::vector<Eigen::VectorXd> basis_inverse_diagonals(std::span<const SpectralGram> grams,
                                                     std::span<const Eigen::MatrixXd> basis) {
  std::vector<Eigen::VectorXd> d;
  d.reserve(grams.size());
  for (std::size_t k = 0; k < grams.size(); ++k) {
    const Eigen::MatrixXd c = basis[k].transpose() * grams[k].eigvecs;
    d.push_back(c.cwiseAbs2() * grams[k].eigvals.cwiseInverse());
  }
  return d;
}

}  // namespace

double trace_sigma_inv_upsilon(std::span<const SpectralGram> grams, const DenseTensor& ups_diag,
                               std::span<const Eigen::MatrixXd> basis) {
  check_grams_match(ups_diag.dims(), grams);
  if (basis.size() != grams.size()) throw ShapeError("need one basis matrix per mode");
  return multi_mode_vector_contract(ups_diag, basis_inverse_diagonals(grams, basis));
}

GammaPosterior e_step_eta(double nu, const DenseTensor& mu, const DenseTensor& ups_diag,
                          std::span<const SpectralGram> grams) {
  const double n = static_cast<double>(mu.size());
  GammaPosterior out;
  out.beta1 = (nu + n) / 2.0;
  out.beta2 = (nu + whitened_norm_sq(mu, grams) + trace_sigma_inv_upsilon(grams, ups_diag)) / 2.0;
  out.tau = out.beta1 / out.beta2;
  if (!(out.tau > 0.0) || !std::isfinite(out.tau)) throw NumericalError("e_step_eta: invalid Gamma posterior");
  return out;
}

namespace {

double l1_penalty(const TuckerFactors& factors, double lambda) {
  if (lambda == 0.0) return 0.0;
  double s = 0.0;
  for (const auto& f : factors) s += f.cwiseAbs().sum();
  return lambda * s;
}

// Everything is expressed in the eigenbasis V_k of the current Gram
// matrices. The log-det and frozen-trace sensitivities are both of order
// 1/lambda_min along near-null directions and nearly cancel around the
// E-step point; forming them as dense Sigma_k^{-1} products first loses
// the difference to round-off.
ObjectiveAndGradient evaluate_mstep(const TuckerFactors& factors, const MStepStats& stats,
                                    const ModelConfig& config, bool want_gradient) {
  check_state_shape(stats, factors);
  const auto grams = build_grams(factors, config);
  const Index order = stats.mu.order();
  const auto modes = static_cast<std::size_t>(order);
  const double n = static_cast<double>(stats.mu.size());
  const double tau = stats.tau;

  std::vector<Eigen::VectorXd> inv_lambda(modes);
  std::vector<Eigen::MatrixXd> overlap(modes);  // C_k = B_k^T V_k
  std::vector<Eigen::VectorXd> inv_diag(modes);  // diag(B_k^T Sigma_k^{-1} B_k)
  DenseTensor w = stats.mu;                      // mu in the eigenbasis
  for (std::size_t k = 0; k < modes; ++k) {
    inv_lambda[k] = grams[k].eigvals.cwiseInverse();
    overlap[k] = stats.basis[k].transpose() * grams[k].eigvecs;
    inv_diag[k] = overlap[k].cwiseAbs2() * inv_lambda[k];
    w = mode_product(w, grams[k].eigvecs.transpose(), static_cast<Index>(k));
  }

  ObjectiveAndGradient out;
  const double log_det = kronecker_log_det(grams);
  const double trace = multi_mode_vector_contract(stats.ups_diag, inv_diag);
  const Eigen::VectorXd inv_full = kron_vectors(inv_lambda);
  const double quad = (w.values().array().square() * inv_full.array()).sum();

  out.value = log_det + tau * quad + tau * trace + l1_penalty(factors, config.l1_lambda);
  if (!std::isfinite(out.value)) throw NumericalError("M-step objective is not finite");
  if (!want_gradient) return out;

  out.gradient.resize(modes);
  for (std::size_t k = 0; k < modes; ++k) {
    const Index mode = static_cast<Index>(k);
    const Eigen::VectorXd& il = inv_lambda[k];
    const double weight = n / static_cast<double>(stats.mu.dim(mode));
    // W scaled by 1/lambda on every mode but k.
    std::vector<Eigen::VectorXd> others = inv_lambda;
    others[k] = Eigen::VectorXd::Ones(il.size());
    const DenseTensor scaled(w.dims(), w.values().cwiseProduct(kron_vectors(others)));
    const Eigen::MatrixXd quad_part = il.asDiagonal() * mode_unfolding_product(w, scaled, mode) * il.asDiagonal();
    const Eigen::VectorXd e = contract_all_but(stats.ups_diag, std::span<const Eigen::VectorXd>(inv_diag), mode);
    const Eigen::MatrixXd& c = overlap[k];
    const Eigen::MatrixXd trace_part = il.asDiagonal() * (c.transpose() * e.asDiagonal() * c) * il.asDiagonal();
    Eigen::MatrixXd s = -tau * (quad_part + trace_part);
    s.diagonal() += weight * il;
    s = 0.5 * (s + s.transpose()).eval();
    const Eigen::MatrixXd& v = grams[k].eigvecs;
    const Eigen::MatrixXd sensitivity = v * s * v.transpose();
    out.gradient[k] = kernel_gradient(config.kernel(mode), factors[k], sensitivity);
  }
  return out;
}

}  // namespace

double m_step_objective(const TuckerFactors& factors, const MStepStats& stats, const ModelConfig& config) {
  return evaluate_mstep(factors, stats, config, false).value;
}

TuckerFactors m_step_gradient(const TuckerFactors& factors, const MStepStats& stats,
                              const ModelConfig& config) {
  return evaluate_mstep(factors, stats, config, true).gradient;
}

ObjectiveAndGradient m_step_evaluate(const TuckerFactors& factors, const MStepStats& stats,
                                     const ModelConfig& config) {
  return evaluate_mstep(factors, stats, config, true);
}

Eigen::VectorXd flatten_factors(const TuckerFactors& factors) {
  Index total = 0;
  for (const auto& f : factors) total += f.size();
  Eigen::VectorXd x(total);
  Index pos = 0;
  for (const auto& f : factors) {
    x.segment(pos, f.size()) = f.reshaped();
    pos += f.size();
  }
  return x;
}

TuckerFactors unflatten_factors(const Eigen::VectorXd& x, const TuckerFactors& shape) {
  TuckerFactors out;
  out.reserve(shape.size());
  Index pos = 0;
  for (const auto& f : shape) {
    out.push_back(x.segment(pos, f.size()).reshaped(f.rows(), f.cols()));
    pos += f.size();
  }
  if (pos != x.size()) throw ShapeError("flattened factor vector has the wrong length");
  return out;
}

FactorUpdate optimize_factors(const TuckerFactors& initial, const MStepStats& stats, const ModelConfig& config) {
  check_state_shape(stats, initial);
  // The l1 term is handled by the optimizer; evaluate the smooth part only.
  ModelConfig smooth_config = config;
  smooth_config.l1_lambda = 0.0;
  const SmoothObjective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    try {
      const auto eval = evaluate_mstep(unflatten_factors(x, initial), stats, smooth_config, true);
      grad = flatten_factors(eval.gradient);
      return eval.value;
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  L1QuasiNewtonOptions options;
  options.max_iters = config.mstep_max_iters;
  options.history = config.lbfgs_history;
  options.pseudo_grad_tol = config.mstep_grad_tol;
  options.rel_tol = config.mstep_rel_tol;
  const auto result = minimize_l1(objective, flatten_factors(initial), config.l1_lambda, options);
  FactorUpdate out;
  out.factors = unflatten_factors(result.x, initial);
  out.objective = result.value;
  out.pseudo_grad_norm = result.pseudo_grad_norm;
  out.iterations = result.iterations;
  out.line_search_failed = result.line_search_failed;
  return out;
}

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

// Basis diagonal of Upsilon: sum_i Upsilon_ii = sum_j ups_diag_j because the basis is orthogonal.
double upsilon_trace(const DenseTensor& ups_diag) { return ups_diag.values().sum(); }

double log_det_upsilon(const DenseTensor& ups_diag) { return ups_diag.values().array().log().sum(); }

}  // namespace

double variational_objective(const TuckerFactors& factors, const VariationalState& state,
                             const ModelConfig& config, const DenseTensor& y, const ObservationMask& mask) {
  const MStepStats stats = MStepStats::from_state(state);
  const double n = static_cast<double>(state.mu.size());
  const bool t_process = config.process == ProcessKind::t_process;
  const double tau = t_process ? state.tau : 1.0;

  double j = m_step_objective(factors, stats, config);

  // Prior and q(M) entropy pieces not already in f(U).
  const double e_log_eta =
      t_process ? boost::math::digamma(state.beta1) - std::log(state.beta2) : 0.0;
  j += -n * e_log_eta - log_det_upsilon(state.ups_diag) - n;

  if (t_process) {
    const double nu = config.nu;
    const double b1 = state.beta1;
    j += -nu * std::log(nu / 2.0) + 2.0 * std::lgamma(nu / 2.0) - (nu - 2.0) * e_log_eta + nu * tau;
    j -= 2.0 * (b1 - std::log(state.beta2) + std::lgamma(b1) + (1.0 - b1) * boost::math::digamma(b1));
  }

  const double trace_ups = upsilon_trace(state.ups_diag);
  if (config.noise == NoiseModel::gaussian) {
    const double s2 = config.gaussian_sigma * config.gaussian_sigma;
    const double n_obs = static_cast<double>(mask.count());
    j += n_obs * (kLogTwoPi + std::log(s2)) +
         ((state.target.values() - state.mu.values()).squaredNorm() + trace_ups) / s2;
  } else {
    double acc = 0.0;
    for (Index i = 0; i < state.mu.size(); ++i) {
      const double a = state.anchor[i];
      const double m = state.mu[i];
      double log_z = 0.0;
      if (mask.observed(i)) log_z = log_std_normal_cdf((2.0 * y[i] - 1.0) * a);
      acc += state.target[i] * (m - a) + 0.5 * (a * a - m * m) + log_z;
    }
    j += -2.0 * acc + trace_ups;
  }
  if (!std::isfinite(j)) throw NumericalError("variational objective is not finite");
  return j;
}

FittedModel fit(const DenseTensor& y, const ObservationMask& mask, const ModelConfig& config) {
  SeededRandomSource rng(config.seed);
  return fit(y, mask, config, rng);
}

FittedModel fit(const DenseTensor& y, const ObservationMask& mask, const ModelConfig& config,
                SeededRandomSource& rng) {
  if (y.empty()) throw ShapeError("fit: empty tensor");
  if (mask.dims() != y.dims()) throw ShapeError("fit: mask dims do not match data dims");
  if (mask.count() == 0) throw UsageError("fit: no observed entries");
  config.validate(y.order());
  const Dims& dims = y.dims();
  const Index order = y.order();
  const bool probit = config.noise == NoiseModel::probit;
  const bool t_process = config.process == ProcessKind::t_process;
  const double rho = config.rho();

  if (probit) {
    for (Index i = 0; i < y.size(); ++i) {
      if (mask.observed(i) && y[i] != 0.0 && y[i] != 1.0) {
        throw UsageError("probit data must be binary on observed cells; got " + std::to_string(y[i]) +
                         " at vec position " + std::to_string(i + 1));
      }
    }
  }

  FittedModel model;
  model.config = config;
  model.mask = mask;
  model.factors.reserve(static_cast<std::size_t>(order));
  for (Index k = 0; k < order; ++k) {
    const Index r = config.rank(k);
    model.factors.push_back(rng.normal_matrix(dims[k], r, 1.0 / std::sqrt(static_cast<double>(r))));
  }

  VariationalState& state = model.state;
  state.mu = DenseTensor::Zero(dims);
  state.anchor = DenseTensor::Zero(dims);
  state.target = DenseTensor::Zero(dims);
  if (!probit) {
    for (Index i = 0; i < y.size(); ++i)
      if (mask.observed(i)) state.target[i] = y[i];
  }
  state.beta1 = state.beta2 = config.nu / 2.0;
  state.tau = 1.0;

  double previous = std::numeric_limits<double>::quiet_NaN();
  for (int iter = 1; iter <= config.max_em_iters; ++iter) {
    try {
      const auto grams = build_grams(model.factors, config);
      std::vector<SpectralGram> estep_grams;
      if (config.truncation_energy < 1.0) {
        for (const auto& g : grams) estep_grams.push_back(truncated_spectrum(g, config.truncation_energy).spectrum);
      } else {
        estep_grams = grams;
      }

      if (probit) {
        state.anchor = state.mu;
        state.target = e_step_z(state.mu, y, mask);
      } else {
        for (Index i = 0; i < y.size(); ++i)
          if (!mask.observed(i)) state.target[i] = state.mu[i];
      }

      auto moments = e_step_m(state.target, estep_grams, t_process ? state.tau : 1.0, rho);
      state.mu = std::move(moments.mu);
      state.ups_diag = std::move(moments.ups_diag);
      state.basis = eigvec_list(estep_grams);

      if (t_process) {
        const auto eta = e_step_eta(config.nu, state.mu, state.ups_diag, estep_grams);
        state.beta1 = eta.beta1;
        state.beta2 = eta.beta2;
        state.tau = eta.tau;
      }

      const auto update = optimize_factors(model.factors, MStepStats::from_state(state), config);
      model.factors = update.factors;

      const double objective = variational_objective(model.factors, state, config, y, mask);
      model.objective_trace.push_back(objective);
      model.history.push_back(EmIterationRecord{iter, objective, update.objective, state.beta1, state.beta2,
                                                state.tau, update.line_search_failed});

      if (iter > 1 && std::abs(previous - objective) <= config.em_rel_tol * std::max(1.0, std::abs(previous))) {
        model.converged = true;
        break;
      }
      previous = objective;
    } catch (const NumericalError& e) {
      throw NumericalError("EM iteration " + std::to_string(iter) + ": " + e.what());
    }
  }

  model.mode_grams = build_grams(model.factors, config);
  model.tau_star = t_process ? (state.beta1 - 1.0) / state.beta2 : 1.0;
  return model;
}

}  // namespace inftucker
