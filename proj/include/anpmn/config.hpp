// Tool configuration: one JSON document whose keys are dotted paths, written
// either nested ({"blend": {"alpha": 0.5}}) or flat ({"blend.alpha": 0.5}).
//
// Recognized keys (defaults in parentheses):
//
//   seed                         master seed (42)
//   sim.duration                 trajectory length, s (100)
//   sim.trajectories             number of default paths used, 1..5 (5)
//   sim.levels                   noise grid size K (25)
//   sim.sigma_a.lo / .hi         accelerometer std range, m/s^2 (0.001 / 0.02)
//   sim.sigma_g.lo / .hi         gyro std range, rad/s (0.001 / 0.02)
//   sim.sigma_p.lo / .hi         position std range, m (1.5 / 3.0)
//   sim.origin.lat_deg / .lon_deg / .h   trajectory origin (32 / 35 / 100)
//   filter.gnss_rate_hz          GNSS fixes used per second (1)
//   filter.p0                    15 initial variances
//   filter.trace_ceiling         divergence threshold on trace(P) (1e10)
//   filter.gap_threshold         IMU gap flagged above this many seconds (1)
//   filter.ut.alpha / .beta / .kappa     (1e-3 / 2 / 0)
//   filter.ut.convention         "as-published" | "standard"
//   noise.q_const.sigma_a / .sigma_g     per-sample white-noise stds (0.003 / 0.003)
//   noise.q_const.sigma_ab / .sigma_gb   bias random-walk densities (1e-4 / 1e-5)
//   noise.r_const.sigma_p        GNSS position std, m (1.5)
//   adaptive.window              innovation window length (100)
//   adaptive.window_min          entries needed before adapting (100)
//   adaptive.adapt_q / .adapt_r  (true / true)
//   adaptive.diag_only           keep only the diagonal of K C K^T (false)
//   adaptive.r_floor             eigenvalue floor for R, m^2 (1e-4)
//   blend.alpha / blend.beta     (0.5 / 0.7)
//   train.lr / .batch / .epochs  (1e-3 / 64 / 200)
//   train.stride                 window stride in samples (100)
//   train.val_fraction           (0.2)
//   net.activation               "relu" | "silu" | "tanh" ("silu")
//   net.q.input_norm / net.r.input_norm  "none" | "mean" | "diff1" | "diff2" ("mean")
//   net.q.input_scale / .output_scale    (100 / 0.01)
//   net.r.input_scale / .output_scale    (0.5 / 2)
//
// sigma_* values under noise.* accept a scalar or a 3-element array.
#pragma once

#include "anpmn/noise_net.hpp"
#include "anpmn/pipeline.hpp"
#include "anpmn/sim.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

namespace anpmn::config {

struct ConstNoise {
  ins::Vec3 sigma_a = ins::Vec3::Constant(0.003);
  ins::Vec3 sigma_g = ins::Vec3::Constant(0.003);
  ins::Vec3 sigma_ab = ins::Vec3::Constant(1e-4);
  ins::Vec3 sigma_gb = ins::Vec3::Constant(1e-5);
  ins::Vec3 sigma_p = ins::Vec3::Constant(1.5);
};

struct AppConfig {
  std::uint64_t seed = 42;

  double duration = 100.0;
  int trajectories = 5;
  sim::NoiseGridConfig grid;
  double origin_lat_deg = 32.0;
  double origin_lon_deg = 35.0;
  double origin_h = 100.0;

  ConstNoise noise;
  pipeline::RunConfig run;  ///< qc_diag / r_diag are derived from `noise`

  net::TrainConfig train;
  std::size_t train_stride = 100;
  double val_fraction = 0.2;
  net::NetConfig net_q = net::NetConfig::sigma_q();
  net::NetConfig net_r = net::NetConfig::sigma_r();

  void validate() const;
  /// Recomputes run.qc_diag and run.r_diag from `noise`.
  void sync_noise();
  sim::Geodetic origin() const;
  std::vector<sim::TrajectorySpec> trajectory_specs() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nested objects are flattened into dotted keys; arrays are leaves.
nlohmann::json flatten(const nlohmann::json& j);

AppConfig from_json(const nlohmann::json& j);
AppConfig load(const std::string& path);
/// Effective configuration as flat dotted keys (re-loadable with from_json).
nlohmann::json to_json(const AppConfig& c);

}  // namespace anpmn::config
