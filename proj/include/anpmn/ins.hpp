// Strapdown INS: nominal-state mechanization, 15-state error dynamics and the
// GNSS position measurement model.
//
// Error-state layout (flattened order):
//
//   rows  0..2   dp    position error, local NED [m]
//   rows  3..5   dv    velocity error, NED [m/s]
//   rows  6..8   dpsi  misalignment, nav frame [rad]; R_true = exp([dpsi]x) R_nominal
//   rows  9..11  ba    accelerometer residual bias, body [m/s^2]
//   rows 12..14  bg    gyro residual bias, body [rad/s]
//
// Continuous-time F (nonzero blocks only):
//
//   F[dp, dv]   = I
//   F[dv, dpsi] = -[R_nb f_b]x
//   F[dv, ba]   = -R_nb
//   F[dpsi, bg] = -R_nb
//
// G maps [n_a, n_g, n_ab, n_gb] (12) into the state:
//
//   G[dv, n_a] = R_nb,  G[dpsi, n_g] = -R_nb,  G[ba, n_ab] = I,  G[bg, n_gb] = I
//
// Earth rotation and transport rate are neglected (low-speed ground vehicles
// over short horizons).
#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace anpmn::ins {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;
using Mat15x12 = Eigen::Matrix<double, 15, 12>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Mat15x3 = Eigen::Matrix<double, 15, 3>;

inline constexpr int kStateDim = 15;
inline constexpr int kNoiseDim = 12;
inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kAtt = 6;
inline constexpr int kBa = 9;
inline constexpr int kBg = 12;

namespace wgs84 {
inline constexpr double kA = 6378137.0;
inline constexpr double kF = 1.0 / 298.257223563;
inline constexpr double kE2 = kF * (2.0 - kF);
inline constexpr double kGammaEquator = 9.7803253359;
inline constexpr double kGammaPole = 9.8321849378;
inline constexpr double kOmega = 7.292115e-5;
inline constexpr double kGM = 3.986004418e14;
}  // namespace wgs84

struct Geodetic {
  double lat = 0.0;  ///< rad
  double lon = 0.0;  ///< rad
  double height = 0.0;  ///< m
};

struct NavState {
  double lat = 0.0;
  double lon = 0.0;
  double height = 0.0;
  Vec3 vel_ned = Vec3::Zero();
  Eigen::Quaterniond att = Eigen::Quaterniond::Identity();  ///< body -> NED

  Geodetic position() const { return {lat, lon, height}; }
  Mat3 R_nb() const { return att.toRotationMatrix(); }
};

struct Biases {
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
};

struct ErrorState {
  Vec3 dp = Vec3::Zero();
  Vec3 dv = Vec3::Zero();
  Vec3 dpsi = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();

  Vec15 flat() const;
  static ErrorState from_flat(const Eigen::Ref<const Eigen::VectorXd>& x);
};

struct ImuSample {
  double t = 0.0;
  Vec3 f_b = Vec3::Zero();
  Vec3 w_b = Vec3::Zero();
};

struct GnssFix {
  double t = 0.0;
  double lat = 0.0;
  double lon = 0.0;
  double height = 0.0;
};

/// Noise densities for the 12-dim process noise [n_a, n_g, n_ab, n_gb].
/// sig_a / sig_g are per-sample standard deviations at the IMU rate;
/// sig_ab / sig_gb are random-walk densities (per sqrt(s)).
struct ProcessNoiseSpec {
  Vec3 sig_a = Vec3::Zero();
  Vec3 sig_g = Vec3::Zero();
  Vec3 sig_ab = Vec3::Zero();
  Vec3 sig_gb = Vec3::Zero();

  /// Diagonal Qc. White-noise std s at sample period dt becomes density s^2 dt.
  Mat12 continuous(double imu_dt) const;
};

double meridian_radius(double lat);
double prime_vertical_radius(double lat);

/// Somigliana normal gravity with the WGS-84 free-air height correction.
Vec3 gravity_ned(double lat, double h);

/// Curvilinear tangent-frame mapping with the radii frozen at the origin.
/// Exactly invertible; distortion is ~1e-6 relative over kilometre scales.
class LocalFrame {
 public:
  LocalFrame() = default;
  explicit LocalFrame(const Geodetic& origin);

  const Geodetic& origin() const { return origin_; }
  Vec3 to_ned(const Geodetic& g) const;
  Vec3 to_ned(double lat, double lon, double h) const { return to_ned(Geodetic{lat, lon, h}); }
  Geodetic to_geodetic(const Vec3& ned) const;
  /// Moves a point by a NED displacement (metres).
  Geodetic displace(const Geodetic& g, const Vec3& d_ned) const;

 private:
  Geodetic origin_{};
  double north_scale_ = wgs84::kA;  ///< m per rad of latitude
  double east_scale_ = wgs84::kA;   ///< m per rad of longitude
};

Mat3 skew(const Vec3& v);
Eigen::Quaterniond rotvec_to_quat(const Vec3& phi);
Vec3 quat_to_rotvec(const Eigen::Quaterniond& q);

/// Heading (yaw) of a body->NED attitude, rad in (-pi, pi].
double heading(const Eigen::Quaterniond& att);

/// One strapdown step holding the sample constant over [t, t + dt].
NavState mechanize(const NavState& nav, const ImuSample& imu, const Biases& biases, double dt);

/// One strapdown step from prev.t to cur.t with trapezoidal integration of
/// the two samples bracketing the interval.
NavState mechanize(const NavState& nav, const ImuSample& prev, const ImuSample& cur, const Biases& biases);

Mat15 build_F(const NavState& nav, const Vec3& f_b);
Mat15x12 build_G(const NavState& nav);

/// Q_d = G Qc G^T dt.
Mat15 discretize_Q(const Mat15x12& G, const Mat12& Qc, double dt);

/// Predicted GNSS position in local NED metres: nominal position + dp.
Vec3 gnss_h(const ErrorState& err, const NavState& nav, const LocalFrame& frame);

struct Corrected {
  NavState nav;
  Biases biases;
};

/// Closed-loop correction. The error state for the next cycle is all zero.
Corrected inject_and_reset(const NavState& nav, const Biases& biases, const ErrorState& err, const LocalFrame& frame);

}  // namespace anpmn::ins
