#include "anpmn/random.hpp"
#include "anpmn/ukf.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace anpmn;
using namespace anpmn::ukf;

namespace {

MatrixXd random_matrix(Philox4x32& rng, int r, int c) {
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

MatrixXd random_spd(Philox4x32& rng, int n) {
  const MatrixXd a = random_matrix(rng, n, n);
  return a * a.transpose() / n + 0.1 * MatrixXd::Identity(n, n);
}

UtParams params(int n, double alpha, double beta, double kappa) {
  UtParams p;
  p.n = n;
  p.alpha_ut = alpha;
  p.beta_ut = beta;
  p.kappa_ut = kappa;
  return p;
}

const VectorFn kIdentity = [](const VectorXd& x) -> VectorXd { return x; };

}  // namespace

TEST(Weights, HandExampleN2) {
  const auto w = compute_weights(params(2, 1.0, 0.0, 1.0));
  EXPECT_DOUBLE_EQ(w.lambda, 1.0);
  const double expect[] = {1.0 / 3, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(w.wm[i], expect[i], 1e-15);
  EXPECT_NEAR(w.wc[0], 7.0 / 3, 1e-15);
}

TEST(Weights, StandardConventionDiffersInZerothTermOnly) {
  auto p = params(2, 1.0, 0.0, 1.0);
  p.convention = WeightConvention::kStandard;
  const auto w = compute_weights(p);
  EXPECT_NEAR(w.wc[0], 1.0 / 3 + (1 - 1 + 0), 1e-15);
  for (int i = 1; i < 5; ++i) EXPECT_EQ(w.wc[i], w.wm[i]);
}

TEST(Weights, FifteenStateDefaults) {
  const auto w = compute_weights(params(15, 1e-3, 2.0, 0.0));
  EXPECT_NEAR(w.lambda, 1e-6 * 15 - 15, 1e-12);
  EXPECT_NEAR(w.wm.sum(), 1.0, 1e-9 * std::abs(w.wm[0]));
  EXPECT_EQ(w.wm.size(), 31);
}

TEST(Weights, IdentityHoldsForManyParameters) {
  Philox4x32 rng(17);
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(rng.below(20));
    const auto p = params(n, rng.uniform(0.1, 2.0), rng.uniform(0, 3), rng.uniform(0, 3));
    const auto w = compute_weights(p);
    EXPECT_NEAR(w.wm.sum(), 1.0, 1e-12);
    for (int i = 1; i < w.wm.size(); ++i) EXPECT_EQ(w.wm[i], w.wc[i]);
    EXPECT_NEAR(w.wc[0], w.wm[0] + 1 + p.alpha_ut * p.alpha_ut + p.beta_ut, 1e-14 * (std::abs(w.wm[0]) + 10));
  }
}

TEST(Weights, RejectsDegenerateScaling) {
  EXPECT_THROW(compute_weights(params(2, 1.0, 2.0, -2.0)), std::invalid_argument);
  EXPECT_THROW(compute_weights(params(0, 1.0, 2.0, 0.0)), std::invalid_argument);
  EXPECT_THROW(compute_weights(params(2, 0.0, 2.0, 0.0)), std::invalid_argument);
}

TEST(SigmaPoints, HandExample) {
  const auto w = compute_weights(params(2, 1.0, 0.0, 1.0));
  const auto pts = generate_sigma_points({VectorXd::Zero(2), MatrixXd::Identity(2, 2)}, w);
  const double r3 = std::sqrt(3.0);
  MatrixXd expect(2, 5);
  expect << 0, r3, 0, -r3, 0, 0, 0, r3, 0, -r3;
  EXPECT_LT((pts.points - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(SigmaPoints, ZeroCovarianceCollapsesToMean) {
  const auto w = compute_weights(params(3, 1.0, 2.0, 0.0));
  VectorXd mu(3);
  mu << 1, -2, 3;
  const auto pts = generate_sigma_points({mu, MatrixXd::Zero(3, 3)}, w);
  for (int i = 0; i < pts.points.cols(); ++i) EXPECT_LT((pts.points.col(i) - mu).norm(), 1e-4);
}

TEST(SigmaPoints, RecombineToMean) {
  Philox4x32 rng(3);
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + static_cast<int>(rng.below(15));
    const auto w = compute_weights(params(n, 1e-3, 2.0, 0.0));
    const VectorXd mu = random_matrix(rng, n, 1);
    const auto pts = generate_sigma_points({mu, random_spd(rng, n)}, w);
    const double tol = 1e-14 * w.wm.cwiseAbs().sum() * std::max(1.0, pts.points.cwiseAbs().maxCoeff());
    EXPECT_LT((pts.points * w.wm - mu).cwiseAbs().maxCoeff(), tol);
  }
}

TEST(SigmaPoints, IndefiniteCovarianceReported) {
  const auto w = compute_weights(params(2, 1.0, 2.0, 0.0));
  MatrixXd c(2, 2);
  c << 1, 0, 0, -1;
  EXPECT_THROW(generate_sigma_points({VectorXd::Zero(2), c}, w), NonPositiveDefinite);
}

TEST(SigmaPoints, NearlySingularRecoveredByJitter) {
  const auto w = compute_weights(params(2, 1.0, 2.0, 0.0));
  MatrixXd c(2, 2);
  c << 1, 1, 1, 1;
  EXPECT_NO_THROW(generate_sigma_points({VectorXd::Zero(2), c}, w));
}

TEST(UnscentedTransform, IdentityReturnsInput) {
  Philox4x32 rng(9);
  const auto w = compute_weights(params(4, 1.0, 2.0, 0.0));
  const GaussianState s{random_matrix(rng, 4, 1), random_spd(rng, 4)};
  const auto out = unscented_transform(generate_sigma_points(s, w), w, kIdentity, MatrixXd::Zero(4, 4));
  EXPECT_LT((out.mean - s.mean).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((out.cov - s.cov).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(UnscentedTransform, LinearMapExact) {
  Philox4x32 rng(10);
  for (int t = 0; t < 10; ++t) {
    const int n = 2 + static_cast<int>(rng.below(8));
    const int m = 1 + static_cast<int>(rng.below(6));
    const MatrixXd A = random_matrix(rng, m, n);
    const MatrixXd add = random_spd(rng, m);
    const auto w = compute_weights(params(n, 1e-3, 2.0, 0.0));
    const GaussianState s{random_matrix(rng, n, 1), random_spd(rng, n)};
    const auto out = unscented_transform(generate_sigma_points(s, w), w,
                                         [&](const VectorXd& x) -> VectorXd { return A * x; }, add);
    const MatrixXd cov = A * s.cov * A.transpose() + add;
    // Cancellation error grows with the weight magnitude (about 1/alpha^2).
    EXPECT_LT((out.mean - A * s.mean).cwiseAbs().maxCoeff(), 1e-14 * w.wm.cwiseAbs().sum() * 10);
    EXPECT_LT((out.cov - cov).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, cov.cwiseAbs().maxCoeff()));
  }
}

TEST(UnscentedTransform, SquareAgainstMonteCarlo) {
  // Standard convention with alpha=1, beta=0, kappa=2 recovers E[x^2]=1, Var[x^2]=2 for x ~ N(0,1).
  auto p = params(1, 1.0, 0.0, 2.0);
  p.convention = WeightConvention::kStandard;
  const auto w = compute_weights(p);
  const auto sq = [](const VectorXd& x) -> VectorXd { return VectorXd::Constant(1, x[0] * x[0]); };
  const auto out = unscented_transform(generate_sigma_points({VectorXd::Zero(1), MatrixXd::Identity(1, 1)}, w), w, sq,
                                       MatrixXd::Zero(1, 1));
  Philox4x32 rng(21);
  const int n = 1000000;
  double s1 = 0.0;
  double s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    s1 += x * x;
    s2 += x * x * x * x;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  const double se_mean = std::sqrt(var / n);
  EXPECT_NEAR(out.mean[0], mean, 3 * se_mean);
  // Standard error of the variance estimate: sqrt((mu4 - sigma^4) / n) with mu4 = 60, sigma^4 = 4 for chi2_1.
  EXPECT_NEAR(out.cov(0, 0), var, 3 * std::sqrt(56.0 / n) + 1e-12);
}

TEST(UnscentedTransform, DimensionMismatchRejected) {
  const auto w = compute_weights(params(2, 1.0, 2.0, 0.0));
  const auto pts = generate_sigma_points({VectorXd::Zero(2), MatrixXd::Identity(2, 2)}, w);
  EXPECT_THROW(unscented_transform(pts, w, kIdentity, MatrixXd::Zero(3, 3)), std::invalid_argument);
}

TEST(Update, ScalarExample) {
  const auto w = compute_weights(params(1, 1.0, 2.0, 0.0));
  const auto r = update({VectorXd::Zero(1), MatrixXd::Identity(1, 1)}, kIdentity, VectorXd::Constant(1, 2.0),
                        MatrixXd::Identity(1, 1), w);
  EXPECT_NEAR(r.posterior.mean[0], 1.0, 1e-12);
  EXPECT_NEAR(r.posterior.cov(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(r.innovation[0], 2.0, 1e-12);
  EXPECT_NEAR(r.S(0, 0), 2.0, 1e-12);
  EXPECT_NEAR(r.S_minus(0, 0), 1.0, 1e-12);
  EXPECT_FALSE(r.degenerate);
}

TEST(Update, MeasurementAtMeanLeavesMeanMatchesLinearKf) {
  Philox4x32 rng(12);
  const int n = 5;
  const auto w = compute_weights(params(n, 1e-3, 2.0, 0.0));
  const VectorXd mu = random_matrix(rng, n, 1);
  const MatrixXd P = random_spd(rng, n);
  const MatrixXd R = random_spd(rng, n);
  const auto r = update({mu, P}, kIdentity, mu, R, w);
  const MatrixXd K = P * (P + R).inverse();
  EXPECT_LT((r.posterior.mean - mu).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((r.posterior.cov - (P - K * (P + R) * K.transpose())).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Update, HugeRIsUninformative) {
  const int n = 3;
  const auto w = compute_weights(params(n, 1e-3, 2.0, 0.0));
  VectorXd mu(3);
  mu << 10, -20, 5;
  const auto r = update({mu, MatrixXd::Identity(3, 3)}, kIdentity, VectorXd::Zero(3), 1e12 * MatrixXd::Identity(3, 3), w);
  EXPECT_LT((r.posterior.mean - mu).norm(), 1e-6 * mu.norm() * 10);
}

TEST(Update, SingularSUsesPseudoInverse) {
  const auto w = compute_weights(params(2, 1.0, 2.0, 0.0));
  MatrixXd P(2, 2);
  P << 1, 0, 0, 1;
  // Both measurement rows observe the same state and R = 0: S is rank one.
  const auto h = [](const VectorXd& x) -> VectorXd { return VectorXd::Constant(2, x[0]); };
  const auto r = update({VectorXd::Zero(2), P}, h, VectorXd::Constant(2, 1.0), MatrixXd::Zero(2, 2), w);
  EXPECT_TRUE(r.degenerate);
  EXPECT_TRUE(r.posterior.mean.allFinite());
  EXPECT_NEAR(r.posterior.mean[0], 1.0, 1e-9);
}

TEST(Properties, SymmetryAndMeasuredSubspaceShrinks) {
  Philox4x32 rng(13);
  for (int t = 0; t < 30; ++t) {
    const int n = 2 + static_cast<int>(rng.below(13));
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const auto w = compute_weights(params(n, 1e-3, 2.0, 0.0));
    const MatrixXd H = random_matrix(rng, m, n);
    const GaussianState prior{random_matrix(rng, n, 1), random_spd(rng, n)};
    const auto pred = predict(prior, kIdentity, random_spd(rng, n) * 0.1, w);
    const auto r = update(pred, [&](const VectorXd& x) -> VectorXd { return H * x; }, random_matrix(rng, m, 1),
                          random_spd(rng, m), w);
    EXPECT_LT((pred.cov - pred.cov.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((r.posterior.cov - r.posterior.cov.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    for (int i = 0; i < m; ++i) {
      const VectorXd v = H.row(i).transpose();
      EXPECT_LE(v.dot(r.posterior.cov * v), v.dot(pred.cov * v) + 1e-9);
    }
  }
}

TEST(Properties, PredictUpdateMatchesLinearKalmanFilter) {
  Philox4x32 rng(14);
  for (int t = 0; t < 25; ++t) {
    const int n = 1 + static_cast<int>(rng.below(15));
    const int m = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    const MatrixXd A = random_matrix(rng, n, n) / std::sqrt(n);
    const MatrixXd H = random_matrix(rng, m, n);
    const MatrixXd P = random_spd(rng, n);
    const MatrixXd Q = random_spd(rng, n) * 0.1;
    const MatrixXd R = random_spd(rng, m);
    const VectorXd x = random_matrix(rng, n, 1);
    const VectorXd z = random_matrix(rng, m, 1);
    const auto w = compute_weights(params(n, 1e-3, 2.0, 0.0));
    const auto pred = predict({x, P}, [&](const VectorXd& v) -> VectorXd { return A * v; }, Q, w);
    const auto r = update(pred, [&](const VectorXd& v) -> VectorXd { return H * v; }, z, R, w);

    const MatrixXd Pp = A * P * A.transpose() + Q;
    const MatrixXd S = H * Pp * H.transpose() + R;
    const MatrixXd K = Pp * H.transpose() * S.inverse();
    const VectorXd xu = A * x + K * (z - H * A * x);
    const MatrixXd Pu = Pp - K * S * K.transpose();
    const double scale = std::max(1.0, Pu.cwiseAbs().maxCoeff());
    EXPECT_LT((r.posterior.mean - xu).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, xu.cwiseAbs().maxCoeff()));
    EXPECT_LT((r.posterior.cov - Pu).cwiseAbs().maxCoeff(), 1e-8 * scale);
  }
}
