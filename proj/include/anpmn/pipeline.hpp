// Closed-loop error-state UKF over a trajectory log, for the four filter
// variants, plus PRMSE and the multi-run benchmark.
//
// Per IMU epoch the nominal state is mechanized and the transition matrix
// Phi and process covariance Q are accumulated. Per selected GNSS fix the
// 15-state UKF predicts with (Phi, Q), updates with the fix, and the error
// estimate is injected into the nominal state and reset to zero.
#pragma once

#include "anpmn/adaptive_noise.hpp"
#include "anpmn/dataset.hpp"
#include "anpmn/ins.hpp"
#include "anpmn/noise_net.hpp"
#include "anpmn/ukf.hpp"

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace anpmn::pipeline {

using Eigen::MatrixXd;
using ins::Vec3;

enum class FilterVariant { kUkf, kMbAukf, kAnpnUkf, kAnpmnUkf };

std::string to_string(FilterVariant v);
FilterVariant variant_from_string(const std::string& s);
inline bool needs_sigma_q(FilterVariant v) { return v == FilterVariant::kAnpnUkf || v == FilterVariant::kAnpmnUkf; }
inline bool needs_sigma_r(FilterVariant v) { return v == FilterVariant::kAnpmnUkf; }
const std::vector<FilterVariant>& all_variants();

using Vec12 = Eigen::Matrix<double, 12, 1>;

struct RunConfig {
  ukf::UtParams ut{1e-3, 2.0, 0.0, ins::kStateDim, ukf::WeightConvention::kAsPublished};

  /// Continuous noise densities [n_a(3), n_g(3), n_ab(3), n_gb(3)].
  Vec12 qc_diag = ins::ProcessNoiseSpec{Vec3::Constant(0.003), Vec3::Constant(0.003), Vec3::Constant(1e-4),
                                        Vec3::Constant(1e-5)}
                      .continuous(0.01)
                      .diagonal();
  Vec3 r_diag = Vec3::Constant(1.5 * 1.5);
  ins::Vec15 p0_diag = default_p0();

  std::size_t window = 100;       ///< innovation window length (GNSS epochs)
  std::size_t window_min = 100;   ///< entries required before adapting
  bool adapt_q = true;
  bool adapt_r = true;
  bool adapt_q_diag_only = false;
  double r_floor = adaptive::kDefaultRFloor;

  double alpha_blend = 0.5;
  double beta_blend = 0.7;
  std::size_t net_window = 100;   ///< samples per network input window

  double gnss_rate_hz = 1.0;
  double imu_rate_hz = 100.0;
  double trace_ceiling = 1e10;    ///< divergence threshold on trace(P)
  double gap_threshold = 1.0;     ///< s; larger IMU gaps are flagged

  bool record_states = false;     ///< keep the post-update nav state and P at each fix

  static ins::Vec15 default_p0();
  void validate() const;
  /// IMU epochs between used GNSS fixes.
  int fix_stride() const;
};

struct Nets {
  std::shared_ptr<const net::NetParams> sigma_q;
  std::shared_ptr<const net::NetParams> sigma_r;
};

/// Post-update snapshot at one GNSS epoch.
struct FixState {
  std::size_t row = 0;
  double t = 0.0;
  ins::NavState nav;
  ins::Biases biases;
  ins::Mat15 P;
};

struct RunResult {
  FilterVariant variant = FilterVariant::kUkf;
  std::vector<Vec3> est_ned;       ///< one per log row, in the log's frame
  std::vector<double> t;
  double prmse_m = 0.0;
  double runtime_s = 0.0;
  std::vector<double> fix_t;
  std::vector<Vec3> innovations;   ///< z - h(x) at each used fix
  std::vector<double> trace_p;     ///< trace of P after each update
  std::vector<Vec3> sigma_r;       ///< R diagonal used at each fix
  std::vector<double> gaps;        ///< times where an IMU gap exceeded the threshold
  std::size_t degenerate_updates = 0;
  std::vector<FixState> states;    ///< filled when RunConfig::record_states
};

class FilterDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Initial nominal state at `row`: position from the fix, velocity and
/// heading/pitch from the reference track, zero roll.
ins::NavState initial_state(const sim::TrajectoryLog& log, std::size_t row);

RunResult run_filter(const sim::TrajectoryLog& log, FilterVariant variant, const RunConfig& cfg, const Nets& nets = {});

/// Same, starting from an explicit nominal state at the first row.
RunResult run_filter(const sim::TrajectoryLog& log, FilterVariant variant, const RunConfig& cfg, const Nets& nets,
                     const ins::NavState& init);

/// sqrt(mean ||p_k - p_hat_k||^2).
double prmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt);

/// (baseline - ours) / baseline * 100.
double improvement_percent(double baseline, double ours);

struct BenchInput {
  std::string dataset;
  std::string traj;
  std::shared_ptr<const sim::TrajectoryLog> log;
};

struct BenchRow {
  std::string dataset;
  std::string traj;
  FilterVariant variant = FilterVariant::kUkf;
  double prmse_m = 0.0;
  double runtime_s = 0.0;
  std::string error;  ///< non-empty when the run failed
};

struct VariantSummary {
  FilterVariant variant = FilterVariant::kUkf;
  double mean_prmse = 0.0;
  double runtime_mean = 0.0;
  double runtime_min = 0.0;
  double runtime_max = 0.0;
  std::size_t runs = 0;
  std::size_t failures = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;  ///< input-major, variant-minor
  std::vector<VariantSummary> summary;
  /// Improvement of ANPMN-UKF mean PRMSE over each other variant (percent).
  std::vector<std::pair<FilterVariant, double>> improvement;
};

BenchReport benchmark(const std::vector<BenchInput>& inputs, const std::vector<FilterVariant>& variants,
                      const RunConfig& cfg, const Nets& nets, int jobs = 1);

void write_results_csv(const std::vector<BenchRow>& rows, const std::string& path);
void write_summary_csv(const BenchReport& r, const std::string& path);
/// t, estimated and reference NED position, and the error norm per epoch.
void write_epoch_csv(const RunResult& r, const sim::TrajectoryLog& log, const std::string& path);

}  // namespace anpmn::pipeline
