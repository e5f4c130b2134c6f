#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <numbers>

#include "inftucker/distributions.hpp"
#include "inftucker/errors.hpp"
#include "inftucker/naive_oracle.hpp"
#include "test_util.hpp"

using namespace inftucker;
using namespace inftucker::testing;

TEST(StdNormal, Values) {
  EXPECT_DOUBLE_EQ(std_normal_cdf(0.0), 0.5);
  EXPECT_NEAR(std_normal_pdf(0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-16);
  EXPECT_NEAR(std_normal_cdf(1.96), 0.9750021048517795, 1e-15);
  double prev = 0.0;
  for (double x = -8.0; x <= 8.0; x += 0.5) {
    EXPECT_GT(std_normal_cdf(x), prev);
    prev = std_normal_cdf(x);
  }
}

TEST(StdNormal, LogCdfTails) {
  // 40-digit reference values.
  EXPECT_NEAR(log_std_normal_cdf(-10.0), -53.231285150512470578, 1e-12);
  EXPECT_NEAR(log_std_normal_cdf(-37.0), -689.0305855768905936, 1e-10);
  EXPECT_NEAR(log_std_normal_cdf(8.0), -6.2209605742717860585e-16, 1e-25);
}

TEST(TruncatedNormalMean, Examples) {
  const double s = std::sqrt(2.0 / std::numbers::pi);
  EXPECT_NEAR(truncated_normal_mean(0.0, 1), s, 1e-15);
  EXPECT_NEAR(truncated_normal_mean(0.0, 0), -s, 1e-15);
  EXPECT_NEAR(truncated_normal_mean(2.0, 1), 2.0552478626789899591, 1e-13);
  EXPECT_THROW(truncated_normal_mean(0.0, 2), UsageError);
}

TEST(TruncatedNormalMean, DeepTailAgainstHighPrecision) {
  EXPECT_NEAR(truncated_normal_mean(-10.0, 1), 0.098093233962511962844, 1e-12);
  EXPECT_NEAR(truncated_normal_mean(-20.0, 1), 0.049753068527850542214, 1e-12);
  EXPECT_NEAR(truncated_normal_mean(-37.0, 1), 0.026987686126990096026, 1e-12);
  EXPECT_NEAR(truncated_normal_mean(37.0, 0), -0.026987686126990096026, 1e-12);
}

TEST(TruncatedNormalMean, SideAndMonotonicity) {
  double prev = -1e300;
  for (double mu = -60.0; mu <= 12.0; mu += 0.125) {
    const double up = truncated_normal_mean(mu, 1);
    EXPECT_GE(up, mu);
    EXPECT_LE(truncated_normal_mean(mu, 0), mu);
    // Past |mu| ~ 8 the shift on the easy side is below one ulp of mu.
    if (std::abs(mu) < 8.0) {
      EXPECT_GT(up, mu);
      EXPECT_LT(truncated_normal_mean(mu, 0), mu);
    }
    EXPECT_GE(up, prev) << mu;
    if (mu < 8.0) {
      EXPECT_GT(up, prev) << mu;
    }
    prev = up;
  }
}

namespace {

struct Instance {
  std::vector<SpectralGram> grams;
  DenseTensor mean, x;
  Eigen::MatrixXd cov;
};

Instance random_instance(SeededRandomSource& rng, const Dims& dims) {
  Instance in;
  for (Index n : dims) in.grams.push_back(gram_matrix(random_kernel(rng), rng.normal_matrix(n, 2)));
  in.mean = random_tensor(rng, dims);
  in.x = random_tensor(rng, dims);
  in.cov = oracle::dense_sigma_p(in.grams);
  return in;
}

}  // namespace

TEST(TensorNormalLogpdf, StandardNormalAtZero) {
  const TensorNormalParams p{DenseTensor::Zero({1}), {SpectralGram::from_spectrum(Eigen::MatrixXd::Identity(1, 1),
                                                                                  Eigen::VectorXd::Ones(1))}};
  EXPECT_NEAR(tensor_normal_logpdf(p, DenseTensor::Zero({1})), -0.91893853320467274, 1e-14);
}

TEST(TensorNormalLogpdf, MatchesDenseKroneckerNormal) {
  SeededRandomSource rng(21);
  for (const Dims& dims : {Dims{2, 3, 2}, Dims{4, 4, 4}, Dims{5}, Dims{2, 2, 2, 2}}) {
    const auto in = random_instance(rng, dims);
    const double fast = tensor_normal_logpdf({in.mean, in.grams}, in.x);
    const double dense = oracle::dense_normal_logpdf(in.x.values(), in.mean.values(), in.cov);
    EXPECT_LE(std::abs(fast - dense), 1e-9 * std::max(1.0, std::abs(dense))) << format_dims(dims);
  }
}

TEST(TensorNormalLogpdf, TranslationInvariant) {
  SeededRandomSource rng(22);
  const auto in = random_instance(rng, {2, 3});
  DenseTensor mean2 = in.mean, x2 = in.x;
  mean2.values().array() += 3.5;
  x2.values().array() += 3.5;
  EXPECT_NEAR(tensor_normal_logpdf({in.mean, in.grams}, in.x), tensor_normal_logpdf({mean2, in.grams}, x2), 1e-10);
}

TEST(TensorTLogpdf, ScalarStudentT) {
  const auto one = SpectralGram::from_spectrum(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Ones(1));
  const double expected = std::lgamma(2.0) - std::lgamma(1.5) - 0.5 * std::log(3.0 * std::numbers::pi);
  EXPECT_NEAR(tensor_t_logpdf({3.0, DenseTensor::Zero({1}), {one}}, DenseTensor::Zero({1})), expected, 1e-14);
  EXPECT_NEAR(expected, -1.0008888496235098, 1e-13);
  EXPECT_THROW(tensor_t_logpdf({2.0, DenseTensor::Zero({1}), {one}}, DenseTensor::Zero({1})), UsageError);
}

TEST(TensorTLogpdf, MatchesGammaMixtureQuadrature) {
  SeededRandomSource rng(23);
  for (const Dims& dims : {Dims{2, 2}, Dims{2, 2, 2}, Dims{3}}) {
    const auto in = random_instance(rng, dims);
    const double nu = 3.0 + 10.0 * rng.uniform();
    const double fast = tensor_t_logpdf({nu, in.mean, in.grams}, in.x);
    const double quad = oracle::dense_t_logpdf_quadrature(in.x.values(), in.mean.values(), in.cov, nu);
    EXPECT_LE(std::abs(fast - quad), 1e-5) << format_dims(dims);
  }
}

TEST(TensorTLogpdf, ApproachesNormalForLargeNu) {
  SeededRandomSource rng(24);
  const auto in = random_instance(rng, {2, 2});
  EXPECT_LE(std::abs(tensor_t_logpdf({1e6, in.mean, in.grams}, in.x) - tensor_normal_logpdf({in.mean, in.grams}, in.x)),
            1e-3);
}

TEST(TensorTLogpdf, IntegratesToOneInOneDimension) {
  const auto g = SpectralGram::from_spectrum(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Constant(1, 1.7));
  const TensorTParams p{4.0, DenseTensor::Zero({1}), {g}};
  // x = tan(theta) maps the real line onto (-pi/2, pi/2).
  const auto f = [&](double theta) {
    const double x = std::tan(theta);
    const double c = std::cos(theta);
    return std::exp(tensor_t_logpdf(p, DenseTensor({1}, Eigen::VectorXd::Constant(1, x)))) / (c * c);
  };
  const double h = std::numbers::pi / 2;
  const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -h, h, 15, 1e-12);
  EXPECT_NEAR(total, 1.0, 1e-6);
}

TEST(Samplers, DeterministicForSeed) {
  SeededRandomSource rng(25);
  const auto in = random_instance(rng, {2, 3});
  SeededRandomSource a(99), b(99);
  EXPECT_EQ(sample_tensor_normal(a, {in.mean, in.grams}), sample_tensor_normal(b, {in.mean, in.grams}));
  EXPECT_EQ(sample_tensor_t(a, {5.0, in.mean, in.grams}), sample_tensor_t(b, {5.0, in.mean, in.grams}));
}

TEST(Samplers, FlooredGramsReturnMean) {
  SeededRandomSource rng(26);
  const auto mean = random_tensor(rng, {2, 2});
  const auto tiny = SpectralGram::from_spectrum(Eigen::MatrixXd::Identity(2, 2),
                                                Eigen::VectorXd::Constant(2, kEigenvalueFloor));
  const auto s = sample_tensor_normal(rng, {mean, {tiny, tiny}});
  EXPECT_LE((s.values() - mean.values()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Samplers, FiniteTuckerRankOneOnesIsConstant) {
  SeededRandomSource rng(27);
  const std::vector<Eigen::MatrixXd> maps{Eigen::MatrixXd::Ones(3, 1), Eigen::MatrixXd::Ones(2, 1)};
  const auto s = sample_finite_tucker(rng, 1, maps);
  for (Index i = 1; i < s.size(); ++i) EXPECT_EQ(s[i], s[0]);
}

TEST(Samplers, FiniteTuckerOrderOneIsMatrixVector) {
  const Eigen::MatrixXd phi = SeededRandomSource(28).normal_matrix(4, 3);
  SeededRandomSource a(29), b(29);
  const auto s = sample_finite_tucker(a, 3, std::vector<Eigen::MatrixXd>{phi});
  const Eigen::VectorXd w = b.normal_vector(3);
  EXPECT_LE((s.values() - phi * w).norm(), 1e-13);
}

TEST(Samplers, ShortMonteCarloCovariance) {
  SeededRandomSource rng(30);
  const auto in = random_instance(rng, {2, 2});
  const int draws = 20000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(4, 4);
  for (int d = 0; d < draws; ++d) {
    const Eigen::VectorXd v = sample_tensor_normal(rng, {DenseTensor::Zero({2, 2}), in.grams}).values();
    acc += v * v.transpose();
  }
  acc /= draws;
  EXPECT_LE((acc - in.cov).cwiseAbs().maxCoeff(), 0.06 * in.cov.cwiseAbs().maxCoeff());
}
