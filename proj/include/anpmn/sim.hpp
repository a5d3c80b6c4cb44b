// Simulated trajectories, ideal IMU/position synthesis and graded white-noise
// corruption for building labeled training sets and benchmark streams.
#pragma once

#include "anpmn/ins.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace anpmn::sim {

using ins::Geodetic;
using ins::Vec3;

inline constexpr double kImuRateHz = 100.0;

enum class TrajectoryKind { kStraight, kRectangle, kCircle, kSine };

std::string to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(const std::string& s);

/// Planar ground-vehicle path starting at the origin. Geometry fields are
/// only read by the kinds that use them.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kStraight;
  double duration = 100.0;  ///< s, within [100, 500]
  double speed = 10.0;      ///< m/s (along-track speed for the sine path)
  double heading0 = 0.0;    ///< initial heading, rad
  double radius = 50.0;     ///< circle radius, m
  double amplitude = 10.0;  ///< sine cross-track amplitude, m
  double wavelength = 200.0;  ///< sine wavelength, m
  double leg_length = 300.0;  ///< rectangle long side, m
  double leg_width = 150.0;   ///< rectangle short side, m
  double turn_time = 5.0;     ///< rectangle corner duration, s
  Geodetic origin{0.5585053606381855, 0.6108652381980153, 100.0};  // 32 deg N, 35 deg E

  void validate() const;
};

/// The default set of five baseline paths: straight, rectangle, circle, sine
/// and a second straight line at a different speed.
std::vector<TrajectorySpec> default_trajectories(double duration = 100.0);

struct IdealRecord {
  double t = 0.0;
  Vec3 f_b = Vec3::Zero();
  Vec3 w_b = Vec3::Zero();
  Vec3 p_ned = Vec3::Zero();
  Vec3 v_ned = Vec3::Zero();
  Vec3 a_ned = Vec3::Zero();
  Eigen::Quaterniond att = Eigen::Quaterniond::Identity();

  ins::NavState nav(const ins::LocalFrame& frame) const;
};

std::vector<IdealRecord> generate_ideal(const TrajectorySpec& spec, double rate_hz = kImuRateHz);

struct NoiseRange {
  double lo = 0.0;
  double hi = 0.0;
};

struct NoiseGridConfig {
  int levels = 25;
  NoiseRange sigma_a{0.001, 0.02};
  NoiseRange sigma_g{0.001, 0.02};
  NoiseRange sigma_p{1.5, 3.0};
};

struct NoiseLevel {
  int k = 1;  ///< 1-based level index
  double sigma_a = 0.0;
  double sigma_g = 0.0;
  double sigma_p = 0.0;
};

/// level k = lo + (k-1)(hi-lo)/(K-1), k = 1..K.
std::vector<NoiseLevel> make_noise_grid(const NoiseGridConfig& cfg);

struct NoisyRecord {
  double t = 0.0;
  Vec3 f_b = Vec3::Zero();
  Vec3 w_b = Vec3::Zero();
  Vec3 p_ned = Vec3::Zero();   ///< noisy position, local NED
  Vec3 gt_ned = Vec3::Zero();  ///< ideal position
};

/// Noise applies from `t_start` onward until the next segment.
struct NoiseSegment {
  double t_start = 0.0;
  NoiseLevel level;
};

struct NoisyStream {
  int traj_id = 0;
  NoiseLevel level;  ///< label (first segment for scheduled noise)
  std::vector<NoisyRecord> records;
};

/// Adds i.i.d. N(0, sigma^2) noise per sample to the six inertial axes and
/// the three NED position axes. The realization depends only on
/// (seed, traj_id, level.k).
NoisyStream corrupt(const std::vector<IdealRecord>& ideal, const NoiseLevel& level, std::uint64_t seed,
                    int traj_id = 0);

/// As corrupt(), with the noise level switching at the segment start times.
NoisyStream corrupt(const std::vector<IdealRecord>& ideal, const std::vector<NoiseSegment>& schedule,
                    std::uint64_t seed, int traj_id = 0);

}  // namespace anpmn::sim
