#pragma once

// Predictive distributions for cells of the training grid. With
// c = rho^2 tau* and (V, lambda) the Kronecker eigenbasis of Sigma_p,
//   mean_i     = [V diag(lambda / (lambda + c)) V^T vec(target)]_i
//   variance_i = 1 + (1/tau*) sum_j V_ij^2 lambda_j c / (lambda_j + c)
// The variance expression equals 1 + (k(i,i) - k' (Sigma_p + c I)^-1 k) / tau*
// and is a sum of nonnegative terms, so it never needs clipping.

#include <vector>

#include "inftucker/inference.hpp"

namespace inftucker {

struct PredictiveMoments {
  double mean = 0.0;
  double variance = 1.0;
};

/// Precomputes predictive means and variances for every grid cell.
class BatchPredictor {
 public:
  BatchPredictor(const FittedModel& model, double rho);

  PredictiveMoments moments(Index offset) const;
  PredictiveMoments moments(const MultiIndex& idx) const;
  const DenseTensor& means() const { return mean_; }
  const DenseTensor& variances() const { return variance_; }

 private:
  DenseTensor mean_;
  DenseTensor variance_;
};

/// Row of Sigma_p for cell idx: the Kronecker product of per-mode Gram rows.
Eigen::VectorXd cross_covariance(const FittedModel& model, const MultiIndex& idx);

PredictiveMoments predictive_moments(const FittedModel& model, const MultiIndex& idx, double rho);

/// Phi(mean / sqrt(variance)) with rho = 1.
double predict_probit(const FittedModel& model, const MultiIndex& idx);
PredictiveMoments predict_gaussian(const FittedModel& model, const MultiIndex& idx);

struct Prediction {
  Index offset = 0;  // 0-based vec offset
  double mean = 0.0;
  double variance = 1.0;
  double probability = 0.0;  // probit only
};

/// Predictions for the given offsets under the model's own noise model.
std::vector<Prediction> predict_cells(const FittedModel& model, const std::vector<Index>& offsets);

}  // namespace inftucker
