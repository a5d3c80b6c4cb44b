// Trajectory logs, labeled datasets, window extraction and their CSV forms.
//
// Trajectory-log CSV (one row per IMU epoch, SI units, radians):
//
//   t,fx,fy,fz,wx,wy,wz,lat,lon,h,gt_n,gt_e,gt_d
//
// lat/lon/h are empty on epochs without a GNSS fix. gt_* is the ideal position
// in local NED metres relative to the stream origin.
//
// A dataset directory holds one log per (trajectory, level), a labels sidecar
// `labels.csv` with header `traj_id,level_k,sigma_a,sigma_g,sigma_p`, and
// `dataset.json` listing the stream files with their origins.
#pragma once

#include "anpmn/noise_net.hpp"
#include "anpmn/sim.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace anpmn::sim {

struct LogRow {
  double t = 0.0;
  Vec3 f_b = Vec3::Zero();
  Vec3 w_b = Vec3::Zero();
  std::optional<Geodetic> fix;
  Vec3 gt_ned = Vec3::Zero();

  ins::ImuSample imu() const { return {t, f_b, w_b}; }
  bool operator==(const LogRow& o) const;
};

struct TrajectoryLog {
  Geodetic origin;  ///< frame of gt_ned; not part of the CSV
  std::vector<LogRow> rows;

  bool operator==(const TrajectoryLog& o) const;
};

/// Converts a corrupted stream to a log; a fix is kept on every `fix_every`-th epoch.
TrajectoryLog to_log(const NoisyStream& s, const Geodetic& origin, int fix_every = 1);

struct StreamLabel {
  int traj_id = 0;
  int level_k = 0;
  double sigma_a = 0.0;
  double sigma_g = 0.0;
  double sigma_p = 0.0;

  bool operator==(const StreamLabel&) const = default;
};

struct Dataset {
  std::vector<StreamLabel> labels;     ///< labels[i] describes streams[i]
  std::vector<TrajectoryLog> streams;

  bool operator==(const Dataset& o) const { return labels == o.labels && streams == o.streams; }
};

/// Every (trajectory j, level k) combination, in j-major order; each stream
/// carries the trajectory's T x 100 epochs with a fix on every epoch.
Dataset build_dataset(const std::vector<TrajectorySpec>& specs, const std::vector<NoiseLevel>& grid,
                      std::uint64_t seed);

enum class WindowKind { kImu, kPosition };

struct WindowRef {
  std::size_t stream = 0;
  std::size_t start = 0;
  std::size_t index = 0;  ///< window index within its stream

  bool operator==(const WindowRef&) const = default;
};

struct WindowSplit {
  std::vector<WindowRef> train;
  std::vector<WindowRef> val;
};

/// Deterministic split. Each stream is cut into consecutive blocks of `len`
/// samples and a block goes to validation when the hash of (trajectory,
/// level, block index) falls below `val_fraction`. Training windows start
/// every `stride` samples and never overlap a validation block, so
/// stride == len gives the plain non-overlapping split.
WindowSplit split_windows(const Dataset& d, std::size_t len = 100, std::size_t stride = 100,
                          double val_fraction = 0.2);

/// IMU windows are 6 x len [f; w] with labels [sa sa sa sg sg sg]; position
/// windows are 3 x len of (noisy - ideal) NED position with labels [sp sp sp].
std::vector<net::LabeledWindow> make_windows(const Dataset& d, const std::vector<WindowRef>& refs, WindowKind kind,
                                             std::size_t len = 100);

// CSV I/O. Doubles are written in shortest round-trip form.
inline constexpr const char* kLogHeader = "t,fx,fy,fz,wx,wy,wz,lat,lon,h,gt_n,gt_e,gt_d";
inline constexpr const char* kLabelsHeader = "traj_id,level_k,sigma_a,sigma_g,sigma_p";

void write_log(const TrajectoryLog& log, std::ostream& os);
TrajectoryLog read_log(std::istream& is, const Geodetic& origin = {});
void write_log_file(const TrajectoryLog& log, const std::string& path);
TrajectoryLog read_log_file(const std::string& path, const Geodetic& origin = {});

std::string stream_file_name(const StreamLabel& label);

/// Writes logs, labels.csv and dataset.json into `dir` (created if missing).
/// Returns the paths written.
std::vector<std::string> write_dataset(const Dataset& d, const std::string& dir);
Dataset read_dataset(const std::string& dir);

/// Origin recorded for a stream file in its directory's dataset.json, if any.
std::optional<Geodetic> lookup_origin(const std::string& stream_path);

std::string format_double(double v);

}  // namespace anpmn::sim
