#include "anpmn/ins.hpp"
#include "anpmn/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace anpmn;
using namespace anpmn::ins;

namespace {

constexpr double kDeg = M_PI / 180.0;

NavState level_state() {
  NavState n;
  n.lat = 32.0 * kDeg;
  n.lon = 35.0 * kDeg;
  n.height = 100.0;
  return n;
}

Vec3 rand3(Philox4x32& r, double s) { return {s * r.normal(), s * r.normal(), s * r.normal()}; }

struct Truth {
  NavState nav;
  Biases biases;
};

/// true = nominal (+) err, using the same conventions as the filter.
Truth apply_error(const NavState& nom, const Biases& b, const ErrorState& e, const LocalFrame& frame) {
  const Corrected c = inject_and_reset(nom, b, e, frame);
  return {c.nav, c.biases};
}

/// err = true (-) nominal.
Vec15 error_between(const Truth& t, const NavState& nom, const Biases& b, const LocalFrame& frame) {
  ErrorState e;
  e.dp = frame.to_ned(t.nav.position()) - frame.to_ned(nom.position());
  e.dv = t.nav.vel_ned - nom.vel_ned;
  e.dpsi = quat_to_rotvec(t.nav.att * nom.att.conjugate());
  e.ba = t.biases.ba - b.ba;
  e.bg = t.biases.bg - b.bg;
  return e.flat();
}

}  // namespace

TEST(Gravity, EquatorAndPole) {
  EXPECT_NEAR(gravity_ned(0.0, 0.0).z(), 9.7803, 1e-3);
  EXPECT_NEAR(gravity_ned(M_PI / 2, 0.0).z(), 9.8322, 1e-3);
  EXPECT_EQ(gravity_ned(0.3, 10.0).x(), 0.0);
  EXPECT_EQ(gravity_ned(0.3, 10.0).y(), 0.0);
}

TEST(Gravity, DecreasesWithHeight) {
  for (double lat = -1.5; lat <= 1.5; lat += 0.25) {
    EXPECT_LT(gravity_ned(lat, 1000.0).z(), gravity_ned(lat, 0.0).z());
  }
}

TEST(Mechanize, StationaryBalance) {
  NavState n = level_state();
  n.att = rotvec_to_quat(Vec3(0.01, -0.02, 0.7));
  const Vec3 f = -(n.R_nb().transpose() * gravity_ned(n.lat, n.height));
  const NavState out = mechanize(n, {0.0, f, Vec3::Zero()}, {}, 0.01);
  EXPECT_LT(out.vel_ned.norm(), 1e-6);
  EXPECT_LT(LocalFrame(n.position()).to_ned(out.position()).norm(), 1e-6);
}

TEST(Mechanize, FreeFall) {
  const NavState n = level_state();
  const double dt = 0.01;
  const NavState out = mechanize(n, {0.0, Vec3::Zero(), Vec3::Zero()}, {}, dt);
  EXPECT_NEAR(out.vel_ned.z(), gravity_ned(n.lat, n.height).z() * dt, 1e-9);
}

TEST(Mechanize, PureYawRotation) {
  NavState n = level_state();
  const Vec3 w(0, 0, M_PI / 2);
  const Vec3 f = -gravity_ned(n.lat, n.height);
  for (int k = 0; k < 100; ++k) n = mechanize(n, {k * 0.01, f, w}, {}, 0.01);
  EXPECT_NEAR(heading(n.att) / kDeg, 90.0, 0.01);
}

TEST(Mechanize, TrapezoidPureYaw) {
  NavState n = level_state();
  const Vec3 w(0, 0, M_PI / 2);
  const Vec3 f = -gravity_ned(n.lat, n.height);
  for (int k = 0; k < 100; ++k) n = mechanize(n, {k * 0.01, f, w}, {(k + 1) * 0.01, f, w}, {});
  EXPECT_NEAR(heading(n.att) / kDeg, 90.0, 0.01);
}

TEST(Mechanize, RejectsBadStep) {
  const NavState n = level_state();
  EXPECT_THROW(mechanize(n, {}, {}, 0.0), std::invalid_argument);
  EXPECT_THROW(mechanize(n, {}, {}, 0.2), std::invalid_argument);
  EXPECT_THROW(mechanize(n, {1.0, {}, {}}, {0.5, {}, {}}, {}), std::invalid_argument);
}

TEST(Mechanize, QuaternionNormStaysUnit) {
  Philox4x32 rng(4);
  NavState n = level_state();
  const Vec3 f = -gravity_ned(n.lat, n.height);
  for (int k = 0; k < 100000; ++k) {
    n = mechanize(n, {0.0, f + rand3(rng, 0.01), rand3(rng, 0.3)}, {}, 0.01);
    n.vel_ned.setZero();  // keep the position bounded; only attitude matters here
    n.lat = 32.0 * kDeg;
    n.lon = 35.0 * kDeg;
    n.height = 100.0;
  }
  EXPECT_NEAR(n.att.norm(), 1.0, 1e-9);
}

TEST(BuildF, LevelGravityExample) {
  const NavState n = level_state();
  const Mat15 F = build_F(n, Vec3(0, 0, -9.8));
  Mat3 expect;
  expect << 0, -9.8, 0, 9.8, 0, 0, 0, 0, 0;
  EXPECT_LT((F.block<3, 3>(kVel, kAtt) - expect).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(Mat3(F.block<3, 3>(kPos, kVel)), Mat3::Identity());
  EXPECT_EQ(Mat3(F.block<3, 3>(kVel, kBa)), Mat3(-Mat3::Identity()));
  EXPECT_EQ(Mat3(F.block<3, 3>(kAtt, kBg)), Mat3(-Mat3::Identity()));
}

TEST(BuildF, ZeroForceAndBiasRows) {
  Philox4x32 rng(5);
  for (int t = 0; t < 10; ++t) {
    NavState n = level_state();
    n.att = rotvec_to_quat(rand3(rng, 1.0));
    EXPECT_TRUE((build_F(n, Vec3::Zero()).block<3, 3>(kVel, kAtt).isZero()));
    EXPECT_TRUE(build_F(n, rand3(rng, 10.0)).bottomRows<6>().isZero());
  }
}

// One mechanization step, differentiated numerically with respect to the
// error state and converted to continuous time, against build_F.
TEST(BuildF, MatchesFiniteDifferenceOfMechanization) {
  Philox4x32 rng(6);
  const double dt = 1e-3;
  const double eps[5] = {1.0, 1.0, 1e-3, 1e-2, 1e-3};  // dp, dv, dpsi, ba, bg
  for (int trial = 0; trial < 20; ++trial) {
    NavState nom = level_state();
    nom.lat += 0.1 * rng.normal();
    nom.vel_ned = rand3(rng, 10.0);
    nom.att = rotvec_to_quat(rand3(rng, 1.0));
    Biases b{rand3(rng, 0.01), rand3(rng, 1e-3)};
    const ImuSample imu{0.0, Vec3(0.5, -0.3, -9.8) + rand3(rng, 0.5), rand3(rng, 0.03)};
    const LocalFrame frame0(nom.position());

    const NavState nom1 = mechanize(nom, imu, b, dt);
    Mat15 phi;
    for (int j = 0; j < 15; ++j) {
      Vec15 col;
      for (int sign : {1, -1}) {
        Vec15 dx = Vec15::Zero();
        dx[j] = sign * eps[j / 3];
        const Truth t0 = apply_error(nom, b, ErrorState::from_flat(dx), frame0);
        const Truth t1{mechanize(t0.nav, imu, t0.biases, dt), t0.biases};
        const Vec15 e1 = error_between(t1, nom1, b, frame0);
        col = sign > 0 ? e1 : Vec15((col - e1) / (2 * eps[j / 3]));
      }
      phi.col(j) = col;
    }
    const Mat15 F_fd = (phi - Mat15::Identity()) / dt;
    const Mat15 F = build_F(nom, imu.f_b - b.ba);
    const int blocks[4][2] = {{kPos, kVel}, {kVel, kAtt}, {kVel, kBa}, {kAtt, kBg}};
    for (const auto& blk : blocks) {
      const Mat3 a = F.block<3, 3>(blk[0], blk[1]);
      const Mat3 n = F_fd.block<3, 3>(blk[0], blk[1]);
      EXPECT_LT((a - n).norm() / a.norm(), 1e-4) << "block (" << blk[0] << "," << blk[1] << ") trial " << trial;
    }
  }
}

TEST(BuildG, Structure) {
  NavState n = level_state();
  const Mat15x12 G = build_G(n);
  EXPECT_EQ(G.rows(), 15);
  EXPECT_EQ(G.cols(), 12);
  EXPECT_EQ(Mat3(G.block<3, 3>(kVel, 0)), Mat3::Identity());
  EXPECT_TRUE(G.topRows<3>().isZero());
  Philox4x32 rng(7);
  n.att = rotvec_to_quat(rand3(rng, 1.0));
  const Mat15x12 G2 = build_G(n);
  for (auto [r, c] : {std::pair{kVel, 0}, std::pair{kAtt, 3}, std::pair{kBa, 6}, std::pair{kBg, 9}}) {
    const Mat3 blk = G2.block<3, 3>(r, c);
    EXPECT_LT((blk * blk.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(DiscretizeQ, IdentityCase) {
  Mat15x12 G = Mat15x12::Zero();
  G.bottomRows<12>() = Mat12::Identity();
  const Mat15 Q = discretize_Q(G, Mat12::Identity(), 0.01);
  for (int i = 0; i < 15; ++i) EXPECT_DOUBLE_EQ(Q(i, i), i < 3 ? 0.0 : 0.01);
}

TEST(DiscretizeQ, HandComputedTwoState) {
  Mat15x12 G = Mat15x12::Zero();
  G(3, 0) = 2.0;
  G(4, 0) = 1.0;
  G(4, 1) = 3.0;
  Mat12 Qc = Mat12::Zero();
  Qc(0, 0) = 0.5;
  Qc(1, 1) = 0.25;
  const Mat15 Q = discretize_Q(G, Qc, 0.1);
  EXPECT_NEAR(Q(3, 3), 4 * 0.5 * 0.1, 1e-15);
  EXPECT_NEAR(Q(3, 4), 2 * 0.5 * 0.1, 1e-15);
  EXPECT_NEAR(Q(4, 3), 2 * 0.5 * 0.1, 1e-15);
  EXPECT_NEAR(Q(4, 4), (0.5 + 9 * 0.25) * 0.1, 1e-15);
}

TEST(DiscretizeQ, SymmetricPsdAndValidated) {
  Philox4x32 rng(8);
  for (int t = 0; t < 20; ++t) {
    Mat15x12 G;
    for (int i = 0; i < G.size(); ++i) G.data()[i] = rng.normal();
    Mat12 Qc = Mat12::Zero();
    for (int i = 0; i < 12; ++i) Qc(i, i) = rng.uniform();
    const Mat15 Q = discretize_Q(G, Qc, 0.01);
    EXPECT_EQ(Q, Q.transpose());
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<Mat15>(Q).eigenvalues().minCoeff(), -1e-12);
  }
  EXPECT_THROW(discretize_Q(Mat15x12::Zero(), Mat12::Identity(), -0.01), std::invalid_argument);
  EXPECT_THROW(discretize_Q(Mat15x12::Zero(), -Mat12::Identity(), 0.01), std::invalid_argument);
}

TEST(ProcessNoise, ContinuousDensities) {
  ProcessNoiseSpec s{Vec3::Constant(0.1), Vec3::Constant(0.2), Vec3::Constant(0.3), Vec3::Constant(0.4)};
  const Mat12 q = s.continuous(0.01);
  EXPECT_NEAR(q(0, 0), 0.01 * 0.01, 1e-18);
  EXPECT_NEAR(q(3, 3), 0.04 * 0.01, 1e-18);
  EXPECT_NEAR(q(6, 6), 0.09, 1e-15);
  EXPECT_NEAR(q(9, 9), 0.16, 1e-15);
}

TEST(GnssH, AdditivePosition) {
  NavState n = level_state();
  const LocalFrame frame(Geodetic{n.lat - 1e-4, n.lon + 2e-4, 90.0});
  ErrorState e;
  EXPECT_EQ(gnss_h(e, n, frame), frame.to_ned(n.position()));
  e.dp = Vec3(1, 2, 3);
  EXPECT_LT((gnss_h(e, n, frame) - frame.to_ned(n.position()) - Vec3(1, 2, 3)).norm(), 1e-12);
}

TEST(LocalFrame, RoundTrip) {
  const Geodetic o{32.0 * kDeg, 35.0 * kDeg, 100.0};
  const LocalFrame f(o);
  EXPECT_LT(f.to_ned(o).norm(), 1e-12);
  const Geodetic back = f.to_geodetic(f.to_ned(o));
  EXPECT_LT(std::abs(back.lat - o.lat) * 6.4e6 + std::abs(back.lon - o.lon) * 6.4e6 + std::abs(back.height - o.height),
            1e-6);
  const Vec3 p(1234.5, -678.9, 12.0);
  EXPECT_LT((f.to_ned(f.to_geodetic(p)) - p).norm(), 1e-6);
}

TEST(LocalFrame, MetresMatchEarthRadii) {
  const Geodetic o{0.5, 0.6, 0.0};
  const LocalFrame f(o);
  const Vec3 d = f.to_ned(Geodetic{o.lat + 1e-6, o.lon + 1e-6, -1.0});
  EXPECT_NEAR(d.x(), meridian_radius(o.lat) * 1e-6, 1e-9);
  EXPECT_NEAR(d.y(), prime_vertical_radius(o.lat) * std::cos(o.lat) * 1e-6, 1e-9);
  EXPECT_DOUBLE_EQ(d.z(), 1.0);
}

TEST(ErrorState, FlatteningOrder) {
  Vec15 x;
  for (int i = 0; i < 15; ++i) x[i] = i;
  const ErrorState e = ErrorState::from_flat(x);
  EXPECT_EQ(e.dp, Vec3(0, 1, 2));
  EXPECT_EQ(e.dv, Vec3(3, 4, 5));
  EXPECT_EQ(e.dpsi, Vec3(6, 7, 8));
  EXPECT_EQ(e.ba, Vec3(9, 10, 11));
  EXPECT_EQ(e.bg, Vec3(12, 13, 14));
  EXPECT_EQ(e.flat(), x);
  EXPECT_THROW(ErrorState::from_flat(Eigen::VectorXd::Zero(14)), std::invalid_argument);
}

TEST(Rotation, RotvecRoundTripAndSkew) {
  Philox4x32 rng(9);
  for (int t = 0; t < 50; ++t) {
    const Vec3 phi = rand3(rng, 0.8);
    EXPECT_LT((quat_to_rotvec(rotvec_to_quat(phi)) - phi).norm(), 1e-12);
    const Vec3 a = rand3(rng, 1.0);
    EXPECT_LT((skew(phi) * a - phi.cross(a)).norm(), 1e-14);
  }
}

TEST(InjectAndReset, ZeroErrorIsIdentity) {
  NavState n = level_state();
  n.vel_ned = Vec3(1, 2, 3);
  n.att = rotvec_to_quat(Vec3(0.1, 0.2, 0.3));
  const Biases b{Vec3(1e-3, 0, 0), Vec3(0, 1e-4, 0)};
  const Corrected c = inject_and_reset(n, b, {}, LocalFrame(n.position()));
  EXPECT_EQ(c.nav.lat, n.lat);
  EXPECT_EQ(c.nav.lon, n.lon);
  EXPECT_EQ(c.nav.height, n.height);
  EXPECT_EQ(c.nav.vel_ned, n.vel_ned);
  EXPECT_LT((c.nav.att.coeffs() - n.att.coeffs()).norm(), 1e-15);
  EXPECT_EQ(c.biases.ba, b.ba);
  EXPECT_EQ(c.biases.bg, b.bg);
}

TEST(InjectAndReset, SmallYawCorrection) {
  NavState n = level_state();
  n.att = rotvec_to_quat(Vec3(0, 0, 0.4));
  ErrorState e;
  e.dpsi = Vec3(0, 0, 1e-3);
  const Corrected c = inject_and_reset(n, {}, e, LocalFrame(n.position()));
  EXPECT_NEAR(heading(c.nav.att) - heading(n.att), 1e-3, 1e-9);
}

TEST(InjectAndReset, CorrectedStateMechanizesLikeTruth) {
  Philox4x32 rng(10);
  NavState truth = level_state();
  truth.vel_ned = Vec3(8, -3, 0.1);
  truth.att = rotvec_to_quat(Vec3(0.02, -0.01, 1.1));
  const Biases tb{Vec3(0.01, -0.02, 0.005), Vec3(1e-4, -2e-4, 5e-5)};
  const LocalFrame frame(truth.position());

  ErrorState e;
  e.dp = Vec3(2.0, -1.5, 0.5);
  e.dv = Vec3(0.1, 0.2, -0.05);
  e.dpsi = Vec3(1e-3, -2e-3, 5e-3);
  e.ba = Vec3(0.01, 0.0, -0.01);
  e.bg = Vec3(1e-4, 0.0, 1e-4);
  // Nominal = truth (-) err.
  NavState nom = truth;
  const Geodetic g = frame.displace(truth.position(), -e.dp);
  nom.lat = g.lat;
  nom.lon = g.lon;
  nom.height = g.height;
  nom.vel_ned -= e.dv;
  nom.att = (rotvec_to_quat(-e.dpsi) * truth.att).normalized();
  const Biases nb{tb.ba - e.ba, tb.bg - e.bg};

  Corrected c = inject_and_reset(nom, nb, e, frame);
  NavState t = truth;
  for (int k = 0; k < 100; ++k) {
    const ImuSample imu{k * 0.01, Vec3(0.3, 0.1, -9.79) + rand3(rng, 0.1), rand3(rng, 0.05)};
    c.nav = mechanize(c.nav, imu, c.biases, 0.01);
    t = mechanize(t, imu, tb, 0.01);
  }
  EXPECT_LT((frame.to_ned(c.nav.position()) - frame.to_ned(t.position())).norm(), 1e-6);
  EXPECT_LT((c.nav.vel_ned - t.vel_ned).norm(), 1e-6);
  EXPECT_LT(quat_to_rotvec(c.nav.att * t.att.conjugate()).norm(), 1e-6);
}
