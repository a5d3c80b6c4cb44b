#include "anpmn/ins.hpp"

#include <cmath>
#include <stdexcept>

namespace anpmn::ins {

Vec15 ErrorState::flat() const {
  Vec15 x;
  x << dp, dv, dpsi, ba, bg;
  return x;
}

ErrorState ErrorState::from_flat(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != kStateDim) throw std::invalid_argument("ErrorState: expected 15 entries");
  ErrorState e;
  e.dp = x.segment<3>(kPos);
  e.dv = x.segment<3>(kVel);
  e.dpsi = x.segment<3>(kAtt);
  e.ba = x.segment<3>(kBa);
  e.bg = x.segment<3>(kBg);
  return e;
}

Mat12 ProcessNoiseSpec::continuous(double imu_dt) const {
  if (!(imu_dt > 0.0)) throw std::invalid_argument("ProcessNoiseSpec: imu_dt must be positive");
  Eigen::Matrix<double, 12, 1> d;
  d << sig_a.array().square() * imu_dt, sig_g.array().square() * imu_dt, sig_ab.array().square(),
      sig_gb.array().square();
  if ((d.array() < 0.0).any() || !d.allFinite()) throw std::invalid_argument("ProcessNoiseSpec: invalid entry");
  return d.asDiagonal();
}

double meridian_radius(double lat) {
  const double s = std::sin(lat);
  const double den = 1.0 - wgs84::kE2 * s * s;
  return wgs84::kA * (1.0 - wgs84::kE2) / (den * std::sqrt(den));
}

double prime_vertical_radius(double lat) {
  const double s = std::sin(lat);
  return wgs84::kA / std::sqrt(1.0 - wgs84::kE2 * s * s);
}

Vec3 gravity_ned(double lat, double h) {
  using namespace wgs84;
  const double b = kA * (1.0 - kF);
  const double k = (b * kGammaPole) / (kA * kGammaEquator) - 1.0;
  const double s2 = std::sin(lat) * std::sin(lat);
  const double gamma = kGammaEquator * (1.0 + k * s2) / std::sqrt(1.0 - kE2 * s2);
  const double m = kOmega * kOmega * kA * kA * b / kGM;
  const double g = gamma * (1.0 - 2.0 / kA * (1.0 + kF + m - 2.0 * kF * s2) * h + 3.0 * h * h / (kA * kA));
  return {0.0, 0.0, g};
}

LocalFrame::LocalFrame(const Geodetic& origin)
    : origin_(origin),
      north_scale_(meridian_radius(origin.lat) + origin.height),
      east_scale_((prime_vertical_radius(origin.lat) + origin.height) * std::cos(origin.lat)) {}

Vec3 LocalFrame::to_ned(const Geodetic& g) const {
  return {(g.lat - origin_.lat) * north_scale_, (g.lon - origin_.lon) * east_scale_, origin_.height - g.height};
}

Geodetic LocalFrame::to_geodetic(const Vec3& ned) const {
  return {origin_.lat + ned.x() / north_scale_, origin_.lon + ned.y() / east_scale_, origin_.height - ned.z()};
}

Geodetic LocalFrame::displace(const Geodetic& g, const Vec3& d_ned) const {
  return {g.lat + d_ned.x() / north_scale_, g.lon + d_ned.y() / east_scale_, g.height - d_ned.z()};
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond rotvec_to_quat(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < 1e-12) {
    Eigen::Quaterniond q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return q.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(angle, phi / angle));
}

Vec3 quat_to_rotvec(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double vn = q.vec().norm();
  if (vn < 1e-12) return 2.0 * q.vec();
  return 2.0 * std::atan2(vn, q.w()) * q.vec() / vn;
}

double heading(const Eigen::Quaterniond& att) {
  const Mat3 r = att.toRotationMatrix();
  return std::atan2(r(1, 0), r(0, 0));
}

namespace {

void check_dt(double dt) {
  if (!(dt > 0.0) || dt > 0.1) throw std::invalid_argument("mechanize: dt must be in (0, 0.1] s");
}

void integrate_position(NavState& out, const NavState& nav, double dt) {
  const Vec3 v_avg = 0.5 * (nav.vel_ned + out.vel_ned);
  const double rm = meridian_radius(nav.lat) + nav.height;
  const double rn = prime_vertical_radius(nav.lat) + nav.height;
  out.lat = nav.lat + v_avg.x() / rm * dt;
  out.lon = nav.lon + v_avg.y() / (rn * std::cos(nav.lat)) * dt;
  out.height = nav.height - v_avg.z() * dt;
}

}  // namespace

NavState mechanize(const NavState& nav, const ImuSample& imu, const Biases& biases, double dt) {
  check_dt(dt);
  const Vec3 w = imu.w_b - biases.bg;
  const Vec3 f = imu.f_b - biases.ba;

  NavState out = nav;
  const Eigen::Quaterniond q_mid = nav.att * rotvec_to_quat(0.5 * dt * w);
  out.att = (nav.att * rotvec_to_quat(dt * w)).normalized();
  const Vec3 a = q_mid.normalized() * f + gravity_ned(nav.lat, nav.height);
  out.vel_ned = nav.vel_ned + a * dt;
  integrate_position(out, nav, dt);
  return out;
}

NavState mechanize(const NavState& nav, const ImuSample& prev, const ImuSample& cur, const Biases& biases) {
  const double dt = cur.t - prev.t;
  check_dt(dt);
  const Vec3 w = 0.5 * (prev.w_b + cur.w_b) - biases.bg;

  NavState out = nav;
  out.att = (nav.att * rotvec_to_quat(dt * w)).normalized();
  const Vec3 a_prev = nav.att * (prev.f_b - biases.ba);
  const Vec3 a_cur = out.att * (cur.f_b - biases.ba);
  const Vec3 a = 0.5 * (a_prev + a_cur) + gravity_ned(nav.lat, nav.height);
  out.vel_ned = nav.vel_ned + a * dt;
  integrate_position(out, nav, dt);
  return out;
}

Mat15 build_F(const NavState& nav, const Vec3& f_b) {
  const Mat3 r = nav.R_nb();
  Mat15 F = Mat15::Zero();
  F.block<3, 3>(kPos, kVel) = Mat3::Identity();
  F.block<3, 3>(kVel, kAtt) = -skew(r * f_b);
  F.block<3, 3>(kVel, kBa) = -r;
  F.block<3, 3>(kAtt, kBg) = -r;
  return F;
}

Mat15x12 build_G(const NavState& nav) {
  const Mat3 r = nav.R_nb();
  Mat15x12 G = Mat15x12::Zero();
  G.block<3, 3>(kVel, 0) = r;
  G.block<3, 3>(kAtt, 3) = -r;
  G.block<3, 3>(kBa, 6) = Mat3::Identity();
  G.block<3, 3>(kBg, 9) = Mat3::Identity();
  return G;
}

Mat15 discretize_Q(const Mat15x12& G, const Mat12& Qc, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("discretize_Q: dt must be positive");
  if ((Qc.diagonal().array() < 0.0).any()) throw std::invalid_argument("discretize_Q: negative noise density");
  Mat15 q = G * Qc * G.transpose() * dt;
  return 0.5 * (q + q.transpose());
}

Vec3 gnss_h(const ErrorState& err, const NavState& nav, const LocalFrame& frame) {
  return frame.to_ned(nav.position()) + err.dp;
}

Corrected inject_and_reset(const NavState& nav, const Biases& biases, const ErrorState& err, const LocalFrame& frame) {
  Corrected c{nav, biases};
  const Geodetic g = frame.displace(nav.position(), err.dp);
  c.nav.lat = g.lat;
  c.nav.lon = g.lon;
  c.nav.height = g.height;
  c.nav.vel_ned += err.dv;
  c.nav.att = (rotvec_to_quat(err.dpsi) * nav.att).normalized();
  c.biases.ba += err.ba;
  c.biases.bg += err.bg;
  return c;
}

}  // namespace anpmn::ins
