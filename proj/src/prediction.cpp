#include "inftucker/prediction.hpp"

#include <cmath>

#include "inftucker/distributions.hpp"

namespace inftucker {

namespace {

void check_fitted(const FittedModel& model) {
  if (model.mode_grams.empty() || model.state.target.empty() ||
      model.mode_grams.size() != static_cast<std::size_t>(model.state.target.order())) {
    throw UsageError("model has not been fitted");
  }
}

}  // namespace

BatchPredictor::BatchPredictor(const FittedModel& model, double rho) {
  check_fitted(model);
  if (!(model.tau_star > 0.0)) throw NumericalError("tau* must be positive for prediction");
  const auto& grams = model.mode_grams;
  const Dims& dims = model.state.target.dims();
  const Index order = model.state.target.order();
  const double c = rho * rho * model.tau_star;

  std::vector<Eigen::VectorXd> vals;
  for (const auto& g : grams) vals.push_back(g.eigvals);
  const Eigen::ArrayXd lambda = kron_vectors(vals).array();

  DenseTensor coeffs = model.state.target;
  for (Index k = 0; k < order; ++k) coeffs = mode_product(coeffs, grams[k].eigvecs.transpose(), k);
  coeffs.values().array() *= lambda / (lambda + c);
  for (Index k = 0; k < order; ++k) coeffs = mode_product(coeffs, grams[k].eigvecs, k);
  mean_ = std::move(coeffs);

  DenseTensor h(dims, (lambda * c / (lambda + c)).matrix());
  for (Index k = 0; k < order; ++k) h = mode_product(h, grams[k].eigvecs.cwiseAbs2(), k);
  h.values().array() = 1.0 + h.values().array() / model.tau_star;
  variance_ = std::move(h);
}

PredictiveMoments BatchPredictor::moments(Index offset) const {
  if (offset < 0 || offset >= mean_.size()) throw IndexError("prediction offset out of range");
  return PredictiveMoments{mean_[offset], variance_[offset]};
}

PredictiveMoments BatchPredictor::moments(const MultiIndex& idx) const {
  return moments(vec_index(idx, mean_.dims()) - 1);
}

Eigen::VectorXd cross_covariance(const FittedModel& model, const MultiIndex& idx) {
  check_fitted(model);
  const Dims& dims = model.state.target.dims();
  vec_index(idx, dims);  // range check
  std::vector<Eigen::VectorXd> rows;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    rows.push_back(model.mode_grams[k].gram.row(idx[k] - 1).transpose());
  }
  return kron_vectors(rows);
}

PredictiveMoments predictive_moments(const FittedModel& model, const MultiIndex& idx, double rho) {
  return BatchPredictor(model, rho).moments(idx);
}

double predict_probit(const FittedModel& model, const MultiIndex& idx) {
  if (model.config.noise != NoiseModel::probit) throw UsageError("predict_probit needs a probit model");
  const auto m = predictive_moments(model, idx, 1.0);
  return std_normal_cdf(m.mean / std::sqrt(m.variance));
}

PredictiveMoments predict_gaussian(const FittedModel& model, const MultiIndex& idx) {
  if (model.config.noise != NoiseModel::gaussian) throw UsageError("predict_gaussian needs a gaussian model");
  return predictive_moments(model, idx, model.config.gaussian_sigma);
}

std::vector<Prediction> predict_cells(const FittedModel& model, const std::vector<Index>& offsets) {
  const bool probit = model.config.noise == NoiseModel::probit;
  const BatchPredictor predictor(model, model.config.rho());
  std::vector<Prediction> out;
  out.reserve(offsets.size());
  for (Index off : offsets) {
    const auto m = predictor.moments(off);
    Prediction p{off, m.mean, m.variance, 0.0};
    if (probit) p.probability = std_normal_cdf(m.mean / std::sqrt(m.variance));
    out.push_back(p);
  }
  return out;
}

}  // namespace inftucker
