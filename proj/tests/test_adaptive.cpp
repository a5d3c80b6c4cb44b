#include "anpmn/adaptive_noise.hpp"
#include "anpmn/random.hpp"

#include <gtest/gtest.h>

using namespace anpmn;
using namespace anpmn::adaptive;

namespace {

Vec3 rand3(Philox4x32& r) { return {r.normal(), r.normal(), r.normal()}; }

double min_eig(const MatrixXd& m) { return Eigen::SelfAdjointEigenSolver<MatrixXd>(m).eigenvalues().minCoeff(); }

MatrixXd random_psd(Philox4x32& r, int n) {
  MatrixXd a(n, n);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = r.normal();
  return a * a.transpose();
}

}  // namespace

TEST(InnovationWindow, EmptyWindowSignalsWarmUp) {
  InnovationWindow w(5);
  EXPECT_TRUE(w.empty());
  EXPECT_THROW(innovation_covariance(w), WindowWarmingUp);
  EXPECT_THROW(InnovationWindow(0), std::invalid_argument);
}

TEST(InnovationWindow, SingleEntry) {
  InnovationWindow w(10);
  w.push(Vec3(1, 0, 0));
  Mat3 expect = Mat3::Zero();
  expect(0, 0) = 1;
  EXPECT_EQ(innovation_covariance(w), expect);
}

TEST(InnovationWindow, OppositePairGivesAllOnes) {
  InnovationWindow w(10);
  w.push(Vec3(1, 1, 1));
  w.push(Vec3(-1, -1, -1));
  EXPECT_EQ(innovation_covariance(w), Mat3::Ones());
}

TEST(InnovationWindow, OnlyLastEtaEntriesCount) {
  Philox4x32 rng(1);
  const std::size_t eta = 7;
  InnovationWindow w(eta);
  std::vector<Vec3> all;
  for (int m = 1; m <= 40; ++m) {
    all.push_back(rand3(rng));
    w.push(all.back());
    EXPECT_LE(w.size(), eta);
    const std::size_t k = std::min<std::size_t>(all.size(), eta);
    Mat3 brute = Mat3::Zero();
    for (std::size_t i = all.size() - k; i < all.size(); ++i) brute += all[i] * all[i].transpose();
    brute /= static_cast<double>(k);
    EXPECT_LT((innovation_covariance(w) - brute).cwiseAbs().maxCoeff(), 1e-13);
  }
  EXPECT_TRUE(w.full());
  EXPECT_EQ(w.entries().front(), all[all.size() - eta]);
}

TEST(InnovationWindow, SampleCovarianceConvergesToTruth) {
  Philox4x32 rng(2);
  Mat3 L;
  L << 1.0, 0, 0, 0.5, 2.0, 0, -0.3, 0.2, 0.7;
  const Mat3 sigma = L * L.transpose();
  InnovationWindow w(500);
  for (int i = 0; i < 500; ++i) w.push(L * rand3(rng));
  const Mat3 C = innovation_covariance(w);
  // Var of a sample second moment: (S_ii S_jj + S_ij^2) / N.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double sd = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / 500.0);
      EXPECT_LT(std::abs(C(i, j) - sigma(i, j)), 3 * sd) << i << "," << j;
    }
  }
}

TEST(AdaptQ, ZeroGain) {
  EXPECT_TRUE(adapt_Q(Mat3::Identity(), MatrixXd::Zero(15, 3)).isZero());
}

TEST(AdaptQ, SingleColumnGain) {
  MatrixXd K = MatrixXd::Zero(15, 3);
  K(0, 0) = 1.0;
  MatrixXd expect = MatrixXd::Zero(15, 15);
  expect(0, 0) = 1.0;
  EXPECT_EQ(adapt_Q(Mat3::Identity(), K), expect);
}

TEST(AdaptQ, SymmetricPsdForRandomInputs) {
  Philox4x32 rng(3);
  for (int t = 0; t < 50; ++t) {
    MatrixXd K(15, 3);
    for (int i = 0; i < K.size(); ++i) K.data()[i] = rng.normal();
    const Mat3 C = random_psd(rng, 3);
    const MatrixXd Q = adapt_Q(C, K);
    EXPECT_EQ(Q, Q.transpose());
    EXPECT_GE(min_eig(Q), -1e-12 * Q.norm());
  }
}

TEST(AdaptR, EqualMatricesClipToFloor) {
  const Mat3 S = 3.0 * Mat3::Identity();
  EXPECT_LT((adapt_R(S, S) - kDefaultRFloor * Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AdaptR, DirectSubtraction) {
  EXPECT_LT((adapt_R(2.0 * Mat3::Identity(), Mat3::Identity()) - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AdaptR, NegativeDifferenceClipped) {
  EXPECT_LT((adapt_R(Mat3::Identity(), 2.0 * Mat3::Identity()) - kDefaultRFloor * Mat3::Identity()).cwiseAbs().maxCoeff(),
            1e-15);
}

TEST(AdaptR, ProjectionKeepsEigenvectors) {
  Philox4x32 rng(4);
  for (int t = 0; t < 50; ++t) {
    const Mat3 C = random_psd(rng, 3);
    const Mat3 S = random_psd(rng, 3);
    const Mat3 R = adapt_R(C, S, 0.01);
    EXPECT_LT((R - R.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> raw(C - S);
    const Vec3 clipped = raw.eigenvalues().cwiseMax(0.01);
    const Mat3 expect = raw.eigenvectors() * clipped.asDiagonal() * raw.eigenvectors().transpose();
    EXPECT_LT((R - expect).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, expect.norm()));
    EXPECT_GE(min_eig(R), 0.01 - 1e-10);
  }
}

// Linear-Gaussian loop: random-walk state observed directly, with the
// measurement covariance replaced by the adapted estimate once the window fills.
// Returns the mean adapted R diagonal over the last 200 of 1000 steps.
Vec3 closed_loop_average(std::uint64_t seed, const Vec3& r_true) {
  Philox4x32 rng(seed);
  const double q = 1e-4;
  Vec3 x = Vec3::Zero(), xh = Vec3::Zero();
  Mat3 P = Mat3::Identity(), R = Mat3::Identity();
  InnovationWindow w(100);
  Vec3 avg = Vec3::Zero();
  for (int k = 0; k < 1000; ++k) {
    x += std::sqrt(q) * rand3(rng);
    P += q * Mat3::Identity();
    const Vec3 z = x + r_true.cwiseSqrt().cwiseProduct(rand3(rng));
    const Vec3 nu = z - xh;
    const Mat3 S_minus = P;
    const Mat3 K = P * (P + R).inverse();
    xh += K * nu;
    P = (Mat3::Identity() - K) * P;
    w.push(nu);
    if (w.full()) R = adapt_R(innovation_covariance(w), S_minus);
    if (k >= 800) avg += R.diagonal() / 200.0;
  }
  return avg;
}

// A single run has roughly 9% spread per axis, so the 25% band is checked over
// many seeds together with the bias of the pooled mean.
TEST(AdaptR, ConvergesInClosedLoop) {
  const Vec3 r_true(0.5, 1.0, 3.0);
  const int runs = 20;
  int within = 0;
  Vec3 pooled = Vec3::Zero();
  for (int s = 0; s < runs; ++s) {
    const Vec3 ratio = closed_loop_average(500 + s, r_true).cwiseQuotient(r_true);
    pooled += ratio / runs;
    if ((ratio.array() - 1.0).abs().maxCoeff() < 0.25) ++within;
  }
  EXPECT_GE(within, 18);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(pooled[i], 1.0, 0.05);
}

TEST(Blend, Endpoints) {
  Philox4x32 rng(6);
  BlendConfig cfg;
  cfg.q_const = random_psd(rng, 15);
  cfg.r_const = random_psd(rng, 3);
  const MatrixXd qn = random_psd(rng, 15);
  const Mat3 rn = random_psd(rng, 3);
  cfg.alpha_blend = 0.0;
  cfg.beta_blend = 0.0;
  EXPECT_EQ(blend_Q(qn, cfg), cfg.q_const);
  EXPECT_EQ(blend_R(rn, cfg), cfg.r_const);
  cfg.alpha_blend = 1.0;
  cfg.beta_blend = 1.0;
  EXPECT_EQ(blend_Q(qn, cfg), qn);
  EXPECT_EQ(blend_R(rn, cfg), rn);
}

TEST(Blend, DefaultWeights) {
  BlendConfig cfg;
  EXPECT_EQ(cfg.alpha_blend, 0.5);
  EXPECT_EQ(cfg.beta_blend, 0.7);
  cfg.q_const = MatrixXd::Identity(15, 15) * 0.2;
  cfg.r_const = Mat3::Identity() * 2.0;
  EXPECT_LT((blend_Q(2.0 * cfg.q_const, cfg) - 1.5 * cfg.q_const).cwiseAbs().maxCoeff(), 1e-15);
  // 0.7 * 4 + 0.3 * 2 = 3.4
  EXPECT_LT((blend_R(Mat3::Identity() * 4.0, cfg) - Mat3::Identity() * 3.4).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Blend, ResultStaysPsd) {
  Philox4x32 rng(7);
  for (int t = 0; t < 20; ++t) {
    const MatrixXd a = random_psd(rng, 15), c = random_psd(rng, 15);
    const MatrixXd b = blend(a, c, rng.uniform());
    EXPECT_GE(min_eig(b), -1e-10);
  }
}

TEST(Blend, ValidatesWeightsAndShapes) {
  BlendConfig cfg;
  cfg.q_const = MatrixXd::Identity(15, 15);
  cfg.alpha_blend = 1.2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.alpha_blend = 0.5;
  cfg.beta_blend = -0.1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_THROW(blend(MatrixXd::Identity(3, 3), MatrixXd::Identity(4, 4), 0.5), std::invalid_argument);
}
