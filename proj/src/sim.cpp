#include "anpmn/sim.hpp"

#include "anpmn/random.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace anpmn::sim {

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kStraight: return "straight";
    case TrajectoryKind::kRectangle: return "rectangle";
    case TrajectoryKind::kCircle: return "circle";
    case TrajectoryKind::kSine: return "sine";
  }
  return "unknown";
}

TrajectoryKind trajectory_kind_from_string(const std::string& s) {
  if (s == "straight") return TrajectoryKind::kStraight;
  if (s == "rectangle") return TrajectoryKind::kRectangle;
  if (s == "circle") return TrajectoryKind::kCircle;
  if (s == "sine") return TrajectoryKind::kSine;
  throw std::invalid_argument("unknown trajectory kind '" + s + "'");
}

namespace {

// Rectangle corners turn right by 90 degrees over arc length L with curvature
// k(u) = (pi / 2L) (1 - cos(2 pi u / L)), which rises from and returns to zero
// so the lateral acceleration is continuous.
double corner_curvature(double L, double u) {
  return std::numbers::pi / (2.0 * L) * (1.0 - std::cos(2.0 * std::numbers::pi * u / L));
}

double corner_heading(double L, double u) {
  return std::numbers::pi / (2.0 * L) * (u - L / (2.0 * std::numbers::pi) * std::sin(2.0 * std::numbers::pi * u / L));
}

// Displacement after arc length s into a corner, in the frame of the entry
// heading (x forward, y to the right). Composite 5-point Gauss-Legendre.
Vec3 corner_offset(double L, double s) {
  static constexpr double kNodes[5] = {0.0, -0.5384693101056831, 0.5384693101056831, -0.9061798459386640,
                                       0.9061798459386640};
  static constexpr double kWeights[5] = {0.5688888888888889, 0.4786286704993665, 0.4786286704993665,
                                         0.2369268850561891, 0.2369268850561891};
  constexpr int kPieces = 8;
  const double h = s / kPieces;
  Vec3 d = Vec3::Zero();
  for (int j = 0; j < kPieces; ++j) {
    const double mid = (j + 0.5) * h;
    for (int q = 0; q < 5; ++q) {
      const double phi = corner_heading(L, mid + 0.5 * h * kNodes[q]);
      d += 0.5 * h * kWeights[q] * Vec3(std::cos(phi), std::sin(phi), 0.0);
    }
  }
  return d;
}

// Distance from a corner's start to the vertex of the two legs it joins.
double corner_cut(double L) { return corner_offset(L, L).x(); }

}  // namespace

void TrajectorySpec::validate() const {
  if (!(duration >= 100.0 && duration <= 500.0)) throw std::invalid_argument("trajectory duration must be in [100, 500] s");
  if (!(speed > 0.0)) throw std::invalid_argument("trajectory speed must be positive");
  switch (kind) {
    case TrajectoryKind::kStraight: break;
    case TrajectoryKind::kCircle:
      if (!(radius > 0.0)) throw std::invalid_argument("circle radius must be positive");
      break;
    case TrajectoryKind::kSine:
      if (!(amplitude > 0.0) || !(wavelength > 0.0)) {
        throw std::invalid_argument("sine amplitude and wavelength must be positive");
      }
      break;
    case TrajectoryKind::kRectangle: {
      if (!(leg_length > 0.0) || !(leg_width > 0.0) || !(turn_time > 0.0)) {
        throw std::invalid_argument("rectangle legs and turn time must be positive");
      }
      const double cut = corner_cut(speed * turn_time);
      if (leg_width <= 2.0 * cut || leg_length <= 2.0 * cut) {
        throw std::invalid_argument("rectangle legs too short for the corner turns");
      }
      break;
    }
  }
}

std::vector<TrajectorySpec> default_trajectories(double duration) {
  std::vector<TrajectorySpec> out(5);
  out[0].kind = TrajectoryKind::kStraight;
  out[0].speed = 10.0;
  out[1].kind = TrajectoryKind::kRectangle;
  out[1].speed = 8.0;
  out[2].kind = TrajectoryKind::kCircle;
  out[2].speed = 10.0;
  out[2].radius = 50.0;
  out[3].kind = TrajectoryKind::kSine;
  out[3].speed = 10.0;
  out[4].kind = TrajectoryKind::kStraight;
  out[4].speed = 4.0;
  out[4].heading0 = std::numbers::pi / 4.0;
  for (auto& s : out) s.duration = duration;
  return out;
}

ins::NavState IdealRecord::nav(const ins::LocalFrame& frame) const {
  ins::NavState n;
  const Geodetic g = frame.to_geodetic(p_ned);
  n.lat = g.lat;
  n.lon = g.lon;
  n.height = g.height;
  n.vel_ned = v_ned;
  n.att = att;
  return n;
}

namespace {

// Kinematic state along a planar path.
struct PathPoint {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double yaw = 0.0;
  double yaw_rate = 0.0;
};

// Constant-curvature segment; curvature > 0 turns right (heading increases).
struct Arc {
  Vec3 p0 = Vec3::Zero();
  double yaw0 = 0.0;
  double curvature = 0.0;
  double length = 0.0;
};

PathPoint on_arc(const Arc& arc, double s, double speed) {
  PathPoint pt;
  const double k = arc.curvature;
  if (k == 0.0) {
    pt.yaw = arc.yaw0;
    pt.p = arc.p0 + s * Vec3(std::cos(arc.yaw0), std::sin(arc.yaw0), 0.0);
  } else {
    pt.yaw = arc.yaw0 + k * s;
    pt.p = arc.p0 + Vec3(std::sin(pt.yaw) - std::sin(arc.yaw0), std::cos(arc.yaw0) - std::cos(pt.yaw), 0.0) / k;
  }
  const Vec3 tangent(std::cos(pt.yaw), std::sin(pt.yaw), 0.0);
  const Vec3 normal(-std::sin(pt.yaw), std::cos(pt.yaw), 0.0);
  pt.v = speed * tangent;
  pt.a = speed * speed * k * normal;
  pt.yaw_rate = speed * k;
  return pt;
}

PathPoint on_corner(const Vec3& p0, double yaw0, double L, double s, double speed) {
  PathPoint pt;
  const Vec3 d = corner_offset(L, s);
  pt.p = p0 + Vec3(std::cos(yaw0) * d.x() - std::sin(yaw0) * d.y(), std::sin(yaw0) * d.x() + std::cos(yaw0) * d.y(), 0.0);
  pt.yaw = yaw0 + corner_heading(L, s);
  const double k = corner_curvature(L, s);
  const Vec3 tangent(std::cos(pt.yaw), std::sin(pt.yaw), 0.0);
  const Vec3 normal(-std::sin(pt.yaw), std::cos(pt.yaw), 0.0);
  pt.v = speed * tangent;
  pt.a = speed * speed * k * normal;
  pt.yaw_rate = speed * k;
  return pt;
}

PathPoint on_rectangle(const TrajectorySpec& spec, double t) {
  const double L = spec.speed * spec.turn_time;
  const double cut = corner_cut(L);
  const double sides[2] = {spec.leg_length - 2.0 * cut, spec.leg_width - 2.0 * cut};
  const double perimeter = 2.0 * (sides[0] + sides[1]) + 4.0 * L;

  double s = std::fmod(spec.speed * t, perimeter);
  Vec3 p0 = Vec3::Zero();
  double yaw0 = spec.heading0;
  for (int i = 0; i < 8; ++i) {
    const bool turn = (i % 2 == 1);
    const double len = turn ? L : sides[(i / 2) % 2];
    if (s <= len || i == 7) {
      s = std::min(s, len);
      return turn ? on_corner(p0, yaw0, L, s, spec.speed)
                  : on_arc(Arc{p0, yaw0, 0.0, len}, s, spec.speed);
    }
    if (turn) {
      const Vec3 d = corner_offset(L, L);
      p0 += Vec3(std::cos(yaw0) * d.x() - std::sin(yaw0) * d.y(), std::sin(yaw0) * d.x() + std::cos(yaw0) * d.y(), 0.0);
      yaw0 += std::numbers::pi / 2.0;
    } else {
      p0 += len * Vec3(std::cos(yaw0), std::sin(yaw0), 0.0);
    }
    s -= len;
  }
  return {};
}

PathPoint on_sine(const TrajectorySpec& spec, double t) {
  const double u = spec.speed;
  const double k = 2.0 * std::numbers::pi / spec.wavelength;
  const double A = spec.amplitude;
  const double s = u * t;
  const Vec3 along(std::cos(spec.heading0), std::sin(spec.heading0), 0.0);
  const Vec3 cross(-std::sin(spec.heading0), std::cos(spec.heading0), 0.0);

  PathPoint pt;
  pt.p = s * along + A * std::sin(k * s) * cross;
  pt.v = u * along + A * k * u * std::cos(k * s) * cross;
  pt.a = -A * k * k * u * u * std::sin(k * s) * cross;
  const double slope = A * k * std::cos(k * s);
  const double slope_rate = -A * k * k * u * std::sin(k * s);
  pt.yaw = spec.heading0 + std::atan(slope);
  pt.yaw_rate = slope_rate / (1.0 + slope * slope);
  return pt;
}

PathPoint evaluate(const TrajectorySpec& spec, double t) {
  switch (spec.kind) {
    case TrajectoryKind::kStraight:
      return on_arc(Arc{Vec3::Zero(), spec.heading0, 0.0, 0.0}, spec.speed * t, spec.speed);
    case TrajectoryKind::kCircle:
      return on_arc(Arc{Vec3::Zero(), spec.heading0, 1.0 / spec.radius, 0.0}, spec.speed * t, spec.speed);
    case TrajectoryKind::kSine: return on_sine(spec, t);
    case TrajectoryKind::kRectangle: return on_rectangle(spec, t);
  }
  return {};
}

}  // namespace

std::vector<IdealRecord> generate_ideal(const TrajectorySpec& spec, double rate_hz) {
  spec.validate();
  if (!(rate_hz > 0.0)) throw std::invalid_argument("generate_ideal: rate must be positive");
  const ins::LocalFrame frame(spec.origin);
  const auto count = static_cast<std::size_t>(std::llround(spec.duration * rate_hz));
  std::vector<IdealRecord> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / rate_hz;
    const PathPoint pt = evaluate(spec, t);
    IdealRecord& r = out[i];
    r.t = t;
    r.p_ned = pt.p;
    r.v_ned = pt.v;
    r.a_ned = pt.a;
    // Body x along the velocity, z down, no bank: attitude is a pure yaw.
    r.att = Eigen::Quaterniond(Eigen::AngleAxisd(pt.yaw, Vec3::UnitZ()));
    r.w_b = Vec3(0.0, 0.0, pt.yaw_rate);
    const Geodetic g = frame.to_geodetic(pt.p);
    r.f_b = r.att.conjugate() * (pt.a - ins::gravity_ned(g.lat, g.height));
  }
  return out;
}

std::vector<NoiseLevel> make_noise_grid(const NoiseGridConfig& cfg) {
  if (cfg.levels < 2) throw std::invalid_argument("noise grid needs at least 2 levels");
  for (const NoiseRange* r : {&cfg.sigma_a, &cfg.sigma_g, &cfg.sigma_p}) {
    if (!(r->lo >= 0.0) || !(r->hi >= r->lo)) throw std::invalid_argument("noise grid range must satisfy 0 <= lo <= hi");
  }
  const int K = cfg.levels;
  auto at = [K](const NoiseRange& r, int k) {
    if (k == K) return r.hi;
    return r.lo + (k - 1) * (r.hi - r.lo) / (K - 1);
  };
  std::vector<NoiseLevel> out;
  out.reserve(K);
  for (int k = 1; k <= K; ++k) out.push_back({k, at(cfg.sigma_a, k), at(cfg.sigma_g, k), at(cfg.sigma_p, k)});
  return out;
}

NoisyStream corrupt(const std::vector<IdealRecord>& ideal, const NoiseLevel& level, std::uint64_t seed, int traj_id) {
  return corrupt(ideal, std::vector<NoiseSegment>{{0.0, level}}, seed, traj_id);
}

NoisyStream corrupt(const std::vector<IdealRecord>& ideal, const std::vector<NoiseSegment>& schedule,
                    std::uint64_t seed, int traj_id) {
  if (schedule.empty()) throw std::invalid_argument("corrupt: empty noise schedule");
  for (const auto& seg : schedule) {
    if (!(seg.level.sigma_a >= 0.0 && seg.level.sigma_g >= 0.0 && seg.level.sigma_p >= 0.0)) {
      throw std::invalid_argument("corrupt: noise std must be non-negative");
    }
  }
  NoisyStream out;
  out.traj_id = traj_id;
  out.level = schedule.front().level;
  out.records.resize(ideal.size());

  Philox4x32 rng(stream_key({seed, static_cast<std::uint64_t>(traj_id), static_cast<std::uint64_t>(out.level.k)}));
  std::size_t seg = 0;
  for (std::size_t i = 0; i < ideal.size(); ++i) {
    const IdealRecord& src = ideal[i];
    while (seg + 1 < schedule.size() && src.t >= schedule[seg + 1].t_start) ++seg;
    const NoiseLevel& lv = schedule[seg].level;
    NoisyRecord& r = out.records[i];
    r.t = src.t;
    r.gt_ned = src.p_ned;
    for (int a = 0; a < 3; ++a) r.f_b[a] = src.f_b[a] + lv.sigma_a * rng.normal();
    for (int a = 0; a < 3; ++a) r.w_b[a] = src.w_b[a] + lv.sigma_g * rng.normal();
    for (int a = 0; a < 3; ++a) r.p_ned[a] = src.p_ned[a] + lv.sigma_p * rng.normal();
  }
  return out;
}

}  // namespace anpmn::sim
