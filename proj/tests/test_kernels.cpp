#include <gtest/gtest.h>

#include "inftucker/errors.hpp"
#include "inftucker/kernels.hpp"
#include "test_util.hpp"

using namespace inftucker;

TEST(KernelEval, Examples) {
  const Eigen::VectorXd u = Eigen::Vector2d(0.3, -1.2);
  EXPECT_DOUBLE_EQ(kernel_eval({KernelFamily::gaussian, 0.7}, u, u), 1.0);
  EXPECT_NEAR(kernel_eval({KernelFamily::exponential, 1.0}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)),
              0.36787944117144233, 1e-15);
  EXPECT_DOUBLE_EQ(kernel_eval({KernelFamily::linear, 1.0}, Eigen::Vector2d(1, 2), Eigen::Vector2d(3, 4)), 11.0);
  EXPECT_THROW(kernel_eval({KernelFamily::gaussian, 1.0}, Eigen::Vector2d(1, 2), Eigen::Vector3d(1, 2, 3)), ShapeError);
}

TEST(KernelEval, SymmetricAndDecreasing) {
  SeededRandomSource rng(11);
  for (auto fam : {KernelFamily::gaussian, KernelFamily::exponential, KernelFamily::linear}) {
    const KernelSpec s{fam, 0.8};
    for (int t = 0; t < 20; ++t) {
      const Eigen::VectorXd u = rng.normal_vector(3), v = rng.normal_vector(3);
      EXPECT_EQ(kernel_eval(s, u, v), kernel_eval(s, v, u));
    }
  }
  for (auto fam : {KernelFamily::gaussian, KernelFamily::exponential}) {
    double prev = 2.0;
    for (double r = 0.0; r < 4.0; r += 0.25) {
      const double k = kernel_eval({fam, 0.8}, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, r));
      EXPECT_LT(k, prev);
      prev = k;
    }
  }
}

TEST(KernelSpec, RejectsNonPositiveGamma) {
  EXPECT_THROW((KernelSpec{KernelFamily::gaussian, 0.0}).validate(), UsageError);
  EXPECT_NO_THROW((KernelSpec{KernelFamily::linear, 0.0}).validate());
}

TEST(GramMatrix, SingleRow) {
  const auto g = gram_matrix({KernelFamily::gaussian, 1.0}, Eigen::MatrixXd::Constant(1, 2, 0.4));
  EXPECT_NEAR(g.gram(0, 0), 1.0 + g.jitter_applied, 1e-15);
  EXPECT_GT(g.jitter_applied, 0.0);
}

TEST(GramMatrix, IdenticalRowsGiveRankOnePlusJitter) {
  const auto g = gram_matrix({KernelFamily::gaussian, 1.0}, Eigen::MatrixXd::Constant(2, 2, 0.4));
  const double j = g.jitter_applied;
  EXPECT_NEAR(g.gram(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(g.eigvals[0], 2.0 + j, 1e-12);
  EXPECT_NEAR(g.eigvals[1], j, 1e-12);
  EXPECT_GE(g.eigvals[1], kEigenvalueFloor);
}

TEST(GramMatrix, LinearKernelOnIdentityRows) {
  const auto g = gram_matrix({KernelFamily::linear, 1.0}, Eigen::MatrixXd::Identity(3, 3));
  EXPECT_LT((g.gram - (1.0 + g.jitter_applied) * Eigen::MatrixXd::Identity(3, 3)).norm(), 1e-15);
}

TEST(GramMatrix, SpectralInvariantsOnRandomRows) {
  SeededRandomSource rng(12);
  for (int t = 0; t < 30; ++t) {
    const KernelSpec spec = inftucker::testing::random_kernel(rng);
    const Index n = 1 + static_cast<Index>(rng.uniform() * 50);
    const Eigen::MatrixXd rows = rng.normal_matrix(n, 1 + static_cast<Index>(rng.uniform() * 4));
    const Eigen::MatrixXd raw = kernel_matrix(spec, rows);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(raw);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()));
    const auto g = gram_matrix(spec, rows);
    EXPECT_LE((g.gram - g.gram.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((g.eigvecs.transpose() * g.eigvecs - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
    const Eigen::MatrixXd recon = g.eigvecs * g.eigvals.asDiagonal() * g.eigvecs.transpose();
    EXPECT_LE((recon - g.gram).norm() / g.gram.norm(), 1e-8);
    EXPECT_GE(g.eigvals.minCoeff(), kEigenvalueFloor);
    for (Index i = 1; i < n; ++i) EXPECT_GE(g.eigvals[i - 1], g.eigvals[i]);
  }
}

TEST(TruncatedSpectrum, Examples) {
  SeededRandomSource rng(13);
  const auto g = gram_matrix({KernelFamily::gaussian, 0.5}, rng.normal_matrix(6, 2));
  const auto full = truncated_spectrum(g, 1.0);
  EXPECT_EQ(full.retained, 6);
  EXPECT_EQ(full.spectrum.eigvals, g.eigvals);

  const auto rank1 = truncated_spectrum(gram_matrix({KernelFamily::gaussian, 1.0}, Eigen::MatrixXd::Ones(4, 2)), 0.9);
  EXPECT_EQ(rank1.retained, 1);

  Eigen::Matrix2d d;
  d << 4, 0, 0, 1;
  const auto t = truncated_spectrum(decompose_gram(d), 0.8);
  EXPECT_EQ(t.retained, 1);
  EXPECT_EQ(t.spectrum.eigvals[1], kEigenvalueFloor);
  EXPECT_NEAR(t.error_bound, 0.2 * 5.0, 1e-6);
  EXPECT_THROW(truncated_spectrum(g, 0.0), UsageError);
  EXPECT_THROW(truncated_spectrum(g, 1.5), UsageError);
}

namespace {

// Central differences of sum_ab G_ab k(u_a, u_b) with respect to each entry of U.
Eigen::MatrixXd fd_kernel_gradient(const KernelSpec& spec, const Eigen::MatrixXd& u, const Eigen::MatrixXd& g) {
  const double h = 1e-6;
  Eigen::MatrixXd out(u.rows(), u.cols());
  for (Index i = 0; i < u.rows(); ++i)
    for (Index j = 0; j < u.cols(); ++j) {
      Eigen::MatrixXd up = u, dn = u;
      up(i, j) += h;
      dn(i, j) -= h;
      out(i, j) = ((g.array() * kernel_matrix(spec, up).array()).sum() -
                   (g.array() * kernel_matrix(spec, dn).array()).sum()) / (2 * h);
    }
  return out;
}

}  // namespace

TEST(KernelGradient, MatchesFiniteDifferences) {
  SeededRandomSource rng(14);
  for (auto fam : {KernelFamily::gaussian, KernelFamily::exponential, KernelFamily::linear}) {
    const KernelSpec spec{fam, 0.7};
    const Eigen::MatrixXd u = rng.normal_matrix(5, 3);
    Eigen::MatrixXd g = rng.normal_matrix(5, 5);
    g = (g + g.transpose()).eval();
    const Eigen::MatrixXd analytic = kernel_gradient(spec, u, g);
    const Eigen::MatrixXd numeric = fd_kernel_gradient(spec, u, g);
    EXPECT_LE((analytic - numeric).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, numeric.cwiseAbs().maxCoeff()))
        << to_string(fam);
  }
}

TEST(KernelGradient, ExponentialIgnoresCoincidentRows) {
  Eigen::MatrixXd u(2, 1);
  u << 0.5, 0.5;
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(2, 2);
  EXPECT_EQ(kernel_gradient({KernelFamily::exponential, 1.0}, u, g), Eigen::MatrixXd::Zero(2, 1));
}
