#include <gtest/gtest.h>

#include "inftucker/distributions.hpp"
#include "inftucker/errors.hpp"
#include "inftucker/eval.hpp"
#include "inftucker/naive_oracle.hpp"
#include "inftucker/prediction.hpp"
#include "test_util.hpp"

using namespace inftucker;
using namespace inftucker::testing;

namespace {

// A fitted-looking model with the given grams and target; nothing is optimized.
FittedModel model_with(std::vector<SpectralGram> grams, DenseTensor target, double tau_star, NoiseModel noise) {
  FittedModel m;
  m.config.noise = noise;
  m.mode_grams = std::move(grams);
  m.mask = ObservationMask::full(target.dims());
  m.state.target = std::move(target);
  m.tau_star = tau_star;
  return m;
}

std::vector<SpectralGram> identity_grams(const Dims& dims) {
  std::vector<SpectralGram> g;
  for (Index n : dims) g.push_back(SpectralGram::from_spectrum(Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Ones(n)));
  return g;
}

FittedModel random_model(SeededRandomSource& rng, const Dims& dims, NoiseModel noise) {
  const auto in = random_instance_for(rng, dims, false);
  auto m = model_with(in.grams, in.target, 0.2 + 2.0 * rng.uniform(), noise);
  m.config.gaussian_sigma = in.config.gaussian_sigma;
  return m;
}

}  // namespace

TEST(CrossCovariance, StandardBasisForIdentityGrams) {
  const Dims d{2, 3};
  const auto m = model_with(identity_grams(d), DenseTensor::Zero(d), 1.0, NoiseModel::gaussian);
  const auto k = cross_covariance(m, {2, 1});
  EXPECT_EQ(k, Eigen::VectorXd::Unit(6, vec_index({2, 1}, d) - 1));
}

TEST(CrossCovariance, GaussianKernelSelfEntryIsOne) {
  SeededRandomSource rng(71);
  const Dims d{3, 2};
  const TuckerFactors u = random_factors(rng, d, 2);
  const std::vector<KernelSpec> ks(2, KernelSpec{KernelFamily::gaussian, 0.8});
  const auto m = model_with(grams_for(u, ks), DenseTensor::Zero(d), 1.0, NoiseModel::gaussian);
  const auto k = cross_covariance(m, {2, 2});
  // Only the jitter on the diagonal separates it from exactly 1.
  EXPECT_NEAR(k[vec_index({2, 2}, d) - 1], 1.0, 1e-6);
}

TEST(CrossCovariance, MatchesDenseRow) {
  SeededRandomSource rng(72);
  const auto m = random_model(rng, {2, 3}, NoiseModel::gaussian);
  const Eigen::MatrixXd sigma = oracle::dense_sigma_p(m.mode_grams);
  for (Index j = 1; j <= 6; ++j) {
    const auto k = cross_covariance(m, multi_index_of(j, {2, 3}));
    EXPECT_LE((k - sigma.row(j - 1).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(cross_covariance(m, {3, 1}), IndexError);
}

TEST(PredictiveMoments, IdentityCovarianceExample) {
  const Dims d{2, 2};
  DenseTensor t = DenseTensor::Zero(d);
  t({1, 2}) = 2.0;
  const auto m = model_with(identity_grams(d), t, 1.0, NoiseModel::probit);
  const auto p = predictive_moments(m, {1, 2}, 1.0);
  EXPECT_DOUBLE_EQ(p.mean, 1.0);
  EXPECT_DOUBLE_EQ(p.variance, 1.5);
}

TEST(PredictiveMoments, MatchesDenseOracle) {
  SeededRandomSource rng(73);
  for (int t = 0; t < 20; ++t) {
    const auto noise = t % 2 == 0 ? NoiseModel::gaussian : NoiseModel::probit;
    const auto m = random_model(rng, random_dims(rng, 36), noise);
    const double rho = m.config.rho();
    const BatchPredictor batch(m, rho);
    for (Index i = 0; i < m.state.target.size(); ++i) {
      const auto d = oracle::dense_predictive(m.state.target, m.mode_grams, m.tau_star, rho, i);
      EXPECT_LE(rel_err(batch.moments(i).mean, d.mean), 1e-8);
      EXPECT_LE(rel_err(batch.moments(i).variance, d.variance), 1e-8);
    }
  }
}

TEST(PredictiveMoments, BatchEqualsEntrywise) {
  SeededRandomSource rng(74);
  const auto m = random_model(rng, {2, 3, 2}, NoiseModel::gaussian);
  const BatchPredictor batch(m, m.config.rho());
  for (Index j = 1; j <= 12; ++j) {
    const auto idx = multi_index_of(j, {2, 3, 2});
    const auto single = predictive_moments(m, idx, m.config.rho());
    EXPECT_EQ(single.mean, batch.means()[j - 1]);
    EXPECT_EQ(single.variance, batch.variances()[j - 1]);
  }
}

TEST(PredictiveMoments, VarianceIgnoresTargetValues) {
  SeededRandomSource rng(75);
  auto m = random_model(rng, {3, 2}, NoiseModel::gaussian);
  const DenseTensor before = BatchPredictor(m, 0.7).variances();
  m.state.target = random_tensor(rng, {3, 2});
  EXPECT_EQ(BatchPredictor(m, 0.7).variances(), before);
  for (Index i = 0; i < before.size(); ++i) EXPECT_GE(before[i], 1.0);
}

TEST(PredictiveMoments, HugeNoiseRevertsToPriorMean) {
  SeededRandomSource rng(76);
  auto m = random_model(rng, {3, 2}, NoiseModel::gaussian);
  m.config.gaussian_sigma = 1e6;
  const auto p = predict_gaussian(m, {2, 1});
  EXPECT_LE(std::abs(p.mean), 1e-9);
}

TEST(PredictProbit, ProbabilityFromMoments) {
  const Dims d{2, 2};
  const auto zero = model_with(identity_grams(d), DenseTensor::Zero(d), 1.0, NoiseModel::probit);
  EXPECT_DOUBLE_EQ(predict_probit(zero, {1, 1}), 0.5);

  SeededRandomSource rng(77);
  const auto m = random_model(rng, {2, 3}, NoiseModel::probit);
  for (Index j = 1; j <= 6; ++j) {
    const auto idx = multi_index_of(j, {2, 3});
    const auto mm = predictive_moments(m, idx, 1.0);
    const double p = predict_probit(m, idx);
    EXPECT_DOUBLE_EQ(p, std_normal_cdf(mm.mean / std::sqrt(mm.variance)));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
  EXPECT_NEAR(std_normal_cdf(1.5 / 1.5), 0.841344746068543, 1e-15);
}

TEST(PredictProbit, MonotoneInTarget) {
  const Dims d{2, 2};
  double prev = 0.0;
  for (double v = -3.0; v <= 3.0; v += 0.5) {
    const auto m = model_with(identity_grams(d), DenseTensor::Constant(d, v), 1.0, NoiseModel::probit);
    const double p = predict_probit(m, {1, 1});
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(Prediction, ErrorsOnMisuse) {
  FittedModel empty;
  EXPECT_THROW(predictive_moments(empty, {1}, 1.0), UsageError);
  const Dims d{2, 2};
  const auto g = model_with(identity_grams(d), DenseTensor::Zero(d), 1.0, NoiseModel::gaussian);
  EXPECT_THROW(predict_probit(g, {1, 1}), UsageError);
  EXPECT_THROW(BatchPredictor(g, 1.0).moments(4), IndexError);
}

TEST(Prediction, RecoversNoiseFreeRankOneTensor) {
  ExperimentSpec spec;
  spec.dims = {6, 6, 5};
  spec.generator = Generator::rank1;
  spec.gen_sigma = 0.0;
  spec.holdout_fraction = 0.2;
  spec.model.noise = NoiseModel::gaussian;
  spec.model.gaussian_sigma = 0.1;
  spec.model.rank_per_mode = {3};
  spec.model.kernels = {KernelSpec{KernelFamily::gaussian, 0.5}};
  spec.model.seed = 3;
  SeededRandomSource rng(78);
  const auto data = synth_generate(spec, rng);
  const auto m = fit(data.y, data.observed, spec.model);
  const BatchPredictor batch(m, m.config.rho());
  std::vector<double> pred, truth;
  double energy = 0.0;
  for (Index i = 0; i < data.truth.size(); ++i) {
    energy += data.truth[i] * data.truth[i];
    if (!data.holdout.observed(i)) continue;
    pred.push_back(batch.means()[i]);
    truth.push_back(data.truth[i]);
  }
  const double err = mse(pred, truth);
  EXPECT_LT(err, 1e-2) << "mean square of truth " << energy / static_cast<double>(data.truth.size());
}
