#include "anpmn/pipeline.hpp"

#include "anpmn/log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace anpmn::pipeline {

using ins::Mat15;
using ins::Mat12;
using ins::Vec15;

std::string to_string(FilterVariant v) {
  switch (v) {
    case FilterVariant::kUkf: return "UKF";
    case FilterVariant::kMbAukf: return "MB-AUKF";
    case FilterVariant::kAnpnUkf: return "ANPN-UKF";
    case FilterVariant::kAnpmnUkf: return "ANPMN-UKF";
  }
  return "?";
}

FilterVariant variant_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "UKF") return FilterVariant::kUkf;
  if (u == "MB-AUKF" || u == "MBAUKF" || u == "MB") return FilterVariant::kMbAukf;
  if (u == "ANPN-UKF" || u == "ANPN") return FilterVariant::kAnpnUkf;
  if (u == "ANPMN-UKF" || u == "ANPMN") return FilterVariant::kAnpmnUkf;
  throw std::invalid_argument("unknown filter variant '" + s + "' (expected UKF, MB-AUKF, ANPN-UKF or ANPMN-UKF)");
}

const std::vector<FilterVariant>& all_variants() {
  static const std::vector<FilterVariant> v{FilterVariant::kUkf, FilterVariant::kMbAukf, FilterVariant::kAnpnUkf,
                                            FilterVariant::kAnpmnUkf};
  return v;
}

Vec15 RunConfig::default_p0() {
  constexpr double deg = M_PI / 180.0;
  Vec15 p;
  p << 10, 10, 10, 0.1, 0.1, 0.1, deg * deg, deg * deg, 4 * deg * deg, 1e-4, 1e-4, 1e-4, 1e-8, 1e-8, 1e-8;
  return p;
}

void RunConfig::validate() const {
  if ((qc_diag.array() < 0.0).any() || !qc_diag.allFinite()) throw std::invalid_argument("Q_c entries must be >= 0");
  if ((r_diag.array() < 0.0).any() || !r_diag.allFinite()) throw std::invalid_argument("R entries must be >= 0");
  if ((p0_diag.array() < 0.0).any() || !p0_diag.allFinite()) throw std::invalid_argument("P0 entries must be >= 0");
  if (window == 0) throw std::invalid_argument("adaptive window must be positive");
  if (window_min == 0 || window_min > window) throw std::invalid_argument("adaptive window_min must be in [1, window]");
  if (!(alpha_blend >= 0.0 && alpha_blend <= 1.0)) throw std::invalid_argument("blend alpha must be in [0, 1]");
  if (!(beta_blend >= 0.0 && beta_blend <= 1.0)) throw std::invalid_argument("blend beta must be in [0, 1]");
  if (net_window < 3) throw std::invalid_argument("network window must hold at least 3 samples");
  if (!(imu_rate_hz > 0.0) || !(gnss_rate_hz > 0.0) || gnss_rate_hz > imu_rate_hz) {
    throw std::invalid_argument("rates must satisfy 0 < gnss_rate <= imu_rate");
  }
  const double ratio = imu_rate_hz / gnss_rate_hz;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) throw std::invalid_argument("GNSS rate must divide the IMU rate");
  if (!(trace_ceiling > 0.0)) throw std::invalid_argument("trace ceiling must be positive");
  if (!(r_floor >= 0.0)) throw std::invalid_argument("R floor must be >= 0");
  ukf::compute_weights(ut);
  if (ut.n != ins::kStateDim) throw std::invalid_argument("UT state dimension must be 15");
}

int RunConfig::fix_stride() const { return static_cast<int>(std::lround(imu_rate_hz / gnss_rate_hz)); }

namespace {

std::size_t first_fix_row(const sim::TrajectoryLog& log) {
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    if (log.rows[i].fix) return i;
  }
  throw std::invalid_argument("trajectory log has no GNSS fix");
}

Eigen::Quaterniond attitude_from_velocity(const Vec3& v) {
  const double horiz = std::hypot(v.x(), v.y());
  if (v.norm() < 0.1) return Eigen::Quaterniond::Identity();
  const double yaw = std::atan2(v.y(), v.x());
  const double pitch = std::atan2(-v.z(), horiz);
  return Eigen::Quaterniond(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitY()));
}

void check_sorted(const sim::TrajectoryLog& log) {
  for (std::size_t i = 1; i < log.rows.size(); ++i) {
    if (!(log.rows[i].t > log.rows[i - 1].t)) {
      throw std::invalid_argument("trajectory log timestamps must be strictly increasing (row " + std::to_string(i) + ")");
    }
  }
}

/// Fixed-capacity FIFO of column vectors that can be read back as a matrix.
class SampleBuffer {
 public:
  SampleBuffer(int channels, std::size_t capacity) : channels_(channels), capacity_(capacity) {}

  void push(const Eigen::VectorXd& v) {
    if (data_.size() == capacity_) data_.pop_front();
    data_.push_back(v);
  }
  bool full() const { return data_.size() == capacity_; }
  void shift_all(const Eigen::VectorXd& d) {
    for (auto& v : data_) v -= d;
  }
  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(channels_, static_cast<Eigen::Index>(data_.size()));
    for (std::size_t i = 0; i < data_.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = data_[i];
    return m;
  }

 private:
  int channels_;
  std::size_t capacity_;
  std::deque<Eigen::VectorXd> data_;
};

class FilterRun {
 public:
  FilterRun(const sim::TrajectoryLog& log, FilterVariant variant, const RunConfig& cfg, const Nets& nets)
      : log_(log),
        variant_(variant),
        cfg_(cfg),
        nets_(nets),
        weights_(ukf::compute_weights(cfg.ut)),
        ds_frame_(log.origin),
        innovations_(cfg.window),
        imu_buf_(6, cfg.net_window),
        pos_buf_(3, cfg.net_window) {
    cfg_.validate();
    if (needs_sigma_q(variant) && !nets.sigma_q) {
      throw std::invalid_argument(to_string(variant) + " requires sigma-Q network weights");
    }
    if (needs_sigma_r(variant) && !nets.sigma_r) {
      throw std::invalid_argument(to_string(variant) + " requires sigma-R network weights");
    }
    if (needs_sigma_q(variant) && nets.sigma_q->config.window_len != static_cast<int>(cfg.net_window)) {
      throw std::invalid_argument("sigma-Q network window length does not match the run configuration");
    }
    if (needs_sigma_r(variant) && nets.sigma_r->config.window_len != static_cast<int>(cfg.net_window)) {
      throw std::invalid_argument("sigma-R network window length does not match the run configuration");
    }
    qc_const_ = cfg.qc_diag.asDiagonal();
    qc_ = qc_const_;
    r_const_ = cfg.r_diag.asDiagonal();
  }

  RunResult run(const ins::NavState& init, std::size_t start) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& rows = log_.rows;
    RunResult res;
    res.variant = variant_;
    res.est_ned.reserve(rows.size());
    res.t.reserve(rows.size());

    frame_ = ins::LocalFrame(*rows[start].fix);
    nav_ = init;
    biases_ = {};
    P_ = cfg_.p0_diag.asDiagonal();
    reset_accumulators();

    const Vec3 init_ned = ds_frame_.to_ned(nav_.position());
    for (std::size_t i = 0; i < start; ++i) {
      res.t.push_back(rows[i].t);
      res.est_ned.push_back(init_ned);
    }
    observe_row(start);
    res.t.push_back(rows[start].t);
    res.est_ned.push_back(init_ned);

    const int stride = cfg_.fix_stride();
    for (std::size_t i = start + 1; i < rows.size(); ++i) {
      propagate(i, res);
      observe_row(i);
      const bool use_fix = rows[i].fix && (i - start) % static_cast<std::size_t>(stride) == 0;
      if (use_fix) correct(i, res);
      res.t.push_back(rows[i].t);
      res.est_ned.push_back(ds_frame_.to_ned(nav_.position()));
    }

    std::vector<Vec3> gt;
    gt.reserve(rows.size());
    for (const auto& r : rows) gt.push_back(r.gt_ned);
    res.prmse_m = prmse(res.est_ned, gt);
    res.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

 private:
  void reset_accumulators() {
    phi_.setIdentity();
    q_acc_.setZero();
  }

  /// Network inputs and sigma-Q refresh; both only see data up to row i.
  void observe_row(std::size_t i) {
    const auto& row = log_.rows[i];
    if (needs_sigma_q(variant_)) {
      Eigen::VectorXd s(6);
      s << row.f_b, row.w_b;
      imu_buf_.push(s);
      ++imu_count_;
      if (imu_buf_.full() && imu_count_ % cfg_.net_window == 0) refresh_sigma_q();
    }
    if (needs_sigma_r(variant_) && row.fix) {
      pos_buf_.push(frame_.to_ned(*row.fix) - frame_.to_ned(nav_.position()));
    }
  }

  void refresh_sigma_q() {
    const Eigen::VectorXd sig = net::infer_sigma_q(*nets_.sigma_q, imu_buf_.matrix());
    const double dt = 1.0 / cfg_.imu_rate_hz;
    Mat12 qn = qc_const_;
    for (int a = 0; a < 6; ++a) qn(a, a) = sig[a] * sig[a] * dt;
    qc_ = adaptive::blend(qn, qc_const_, cfg_.alpha_blend);
  }

  void accumulate(const ins::NavState& nav_before, const Vec3& f_b, double dt) {
    const Mat15 F = ins::build_F(nav_before, f_b - biases_.ba);
    const Mat15 step = Mat15::Identity() + F * dt;
    phi_ = step * phi_;
    q_acc_ = step * q_acc_ * step.transpose() + ins::discretize_Q(ins::build_G(nav_before), qc_, dt);
  }

  void propagate(std::size_t i, RunResult& res) {
    const auto& prev = log_.rows[i - 1];
    const auto& cur = log_.rows[i];
    const double dt = cur.t - prev.t;
    if (dt > cfg_.gap_threshold) {
      res.gaps.push_back(cur.t);
      log::warn("IMU gap of " + std::to_string(dt) + " s before t=" + std::to_string(cur.t));
    }
    const double nominal = 1.0 / cfg_.imu_rate_hz;
    if (dt <= 0.1) {
      accumulate(nav_, 0.5 * (prev.f_b + cur.f_b), dt);
      nav_ = ins::mechanize(nav_, prev.imu(), cur.imu(), biases_);
      return;
    }
    const int n = static_cast<int>(std::ceil(dt / nominal - 1e-9));
    const double h = dt / n;
    for (int k = 0; k < n; ++k) {
      accumulate(nav_, cur.f_b, h);
      nav_ = ins::mechanize(nav_, cur.imu(), biases_, h);
    }
  }

  void correct(std::size_t i, RunResult& res) {
    const auto& row = log_.rows[i];
    const Vec3 z = frame_.to_ned(*row.fix);
    const Vec3 p_nom = frame_.to_ned(nav_.position());

    Mat15 Q = q_acc_;
    if (variant_ == FilterVariant::kMbAukf && q_hat_) {
      Q.setZero();
      Q.block<9, 9>(0, 0) = q_hat_->block<9, 9>(0, 0);
      Q.block<6, 6>(9, 9) = q_acc_.block<6, 6>(9, 9);
    }

    Eigen::Matrix3d R = r_const_;
    if (variant_ == FilterVariant::kMbAukf && r_hat_) R = *r_hat_;
    if (variant_ == FilterVariant::kAnpmnUkf && pos_buf_.full()) {
      const Eigen::VectorXd sig = net::infer_sigma_r(*nets_.sigma_r, pos_buf_.matrix());
      const Eigen::Matrix3d r_net = sig.array().square().matrix().asDiagonal();
      R = adaptive::blend(r_net, r_const_, cfg_.beta_blend);
    }

    const ukf::GaussianState prior{Eigen::VectorXd::Zero(ins::kStateDim), P_};
    const Mat15 phi = phi_;
    const auto f = [&phi](const Eigen::VectorXd& x) -> Eigen::VectorXd { return phi * x; };
    const auto h = [&p_nom](const Eigen::VectorXd& x) -> Eigen::VectorXd { return p_nom + x.head<3>(); };

    const ukf::GaussianState pred = ukf::predict(prior, f, Q, weights_);
    const ukf::UpdateResult up = ukf::update(pred, h, z, R, weights_);
    if (up.degenerate) ++res.degenerate_updates;

    const Vec3 nu = up.innovation;
    if (variant_ == FilterVariant::kMbAukf) adapt(nu, up);

    const ins::ErrorState err = ins::ErrorState::from_flat(up.posterior.mean);
    const ins::Corrected c = ins::inject_and_reset(nav_, biases_, err, frame_);
    nav_ = c.nav;
    biases_ = c.biases;
    P_ = up.posterior.cov;
    reset_accumulators();
    if (needs_sigma_r(variant_)) pos_buf_.shift_all(err.dp);

    const double tr = P_.trace();
    if (!std::isfinite(tr) || tr > cfg_.trace_ceiling || !nav_.vel_ned.allFinite()) {
      std::ostringstream os;
      os << to_string(variant_) << " diverged at t=" << row.t << " s (row " << i << "): trace(P)=" << tr
         << " exceeds ceiling " << cfg_.trace_ceiling;
      throw FilterDiverged(os.str());
    }

    res.fix_t.push_back(row.t);
    res.innovations.push_back(nu);
    res.trace_p.push_back(tr);
    res.sigma_r.push_back(R.diagonal().cwiseSqrt());
    if (cfg_.record_states) res.states.push_back({i, row.t, nav_, biases_, P_});
  }

  void adapt(const Vec3& nu, const ukf::UpdateResult& up) {
    innovations_.push(nu);
    if (innovations_.size() < cfg_.window_min) return;
    const Eigen::Matrix3d C = adaptive::innovation_covariance(innovations_);
    if (cfg_.adapt_q) {
      Eigen::MatrixXd q = adaptive::adapt_Q(C, up.K);
      if (cfg_.adapt_q_diag_only) q = Eigen::MatrixXd(q.diagonal().asDiagonal());
      q_hat_ = Mat15(q);
    }
    if (cfg_.adapt_r) r_hat_ = adaptive::adapt_R(C, up.S_minus, cfg_.r_floor);
  }

  const sim::TrajectoryLog& log_;
  FilterVariant variant_;
  RunConfig cfg_;
  Nets nets_;
  ukf::SigmaWeights weights_;
  ins::LocalFrame ds_frame_;
  ins::LocalFrame frame_;

  ins::NavState nav_;
  ins::Biases biases_;
  Mat15 P_ = Mat15::Zero();
  Mat15 phi_ = Mat15::Identity();
  Mat15 q_acc_ = Mat15::Zero();

  Mat12 qc_const_ = Mat12::Zero();
  Mat12 qc_ = Mat12::Zero();
  Eigen::Matrix3d r_const_ = Eigen::Matrix3d::Identity();

  adaptive::InnovationWindow innovations_;
  std::optional<Mat15> q_hat_;
  std::optional<Eigen::Matrix3d> r_hat_;

  SampleBuffer imu_buf_;
  SampleBuffer pos_buf_;
  std::size_t imu_count_ = 0;
};

}  // namespace

ins::NavState initial_state(const sim::TrajectoryLog& log, std::size_t row) {
  const auto& rows = log.rows;
  if (row >= rows.size() || !rows[row].fix) throw std::invalid_argument("initial_state: row has no GNSS fix");
  if (rows.size() < 2) throw std::invalid_argument("initial_state: need at least two rows");
  const std::size_t a = row == 0 ? 0 : row - 1;
  const std::size_t b = row + 1 < rows.size() ? row + 1 : row;
  const Vec3 v = (rows[b].gt_ned - rows[a].gt_ned) / (rows[b].t - rows[a].t);

  ins::NavState nav;
  nav.lat = rows[row].fix->lat;
  nav.lon = rows[row].fix->lon;
  nav.height = rows[row].fix->height;
  nav.vel_ned = v;
  nav.att = attitude_from_velocity(v);
  return nav;
}

RunResult run_filter(const sim::TrajectoryLog& log, FilterVariant variant, const RunConfig& cfg, const Nets& nets) {
  check_sorted(log);
  const std::size_t start = first_fix_row(log);
  return run_filter(log, variant, cfg, nets, initial_state(log, start));
}

RunResult run_filter(const sim::TrajectoryLog& log, FilterVariant variant, const RunConfig& cfg, const Nets& nets,
                     const ins::NavState& init) {
  check_sorted(log);
  const std::size_t start = first_fix_row(log);
  FilterRun run(log, variant, cfg, nets);
  return run.run(init, start);
}

double prmse(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  if (est.size() != gt.size()) throw std::invalid_argument("prmse: estimate and reference lengths differ");
  if (est.empty()) throw std::invalid_argument("prmse: no epochs");
  double sum = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) sum += (est[k] - gt[k]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(est.size()));
}

double improvement_percent(double baseline, double ours) {
  if (!(baseline > 0.0)) throw std::invalid_argument("improvement_percent: baseline must be positive");
  return (baseline - ours) / baseline * 100.0;
}

BenchReport benchmark(const std::vector<BenchInput>& inputs, const std::vector<FilterVariant>& variants,
                      const RunConfig& cfg, const Nets& nets, int jobs) {
  BenchReport rep;
  const std::size_t nv = variants.size();
  rep.rows.resize(inputs.size() * nv);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t v = 0; v < nv; ++v) {
      auto& r = rep.rows[i * nv + v];
      r.dataset = inputs[i].dataset;
      r.traj = inputs[i].traj;
      r.variant = variants[v];
    }
  }

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t k = next++; k < rep.rows.size(); k = next++) {
      auto& r = rep.rows[k];
      try {
        const RunResult res = run_filter(*inputs[k / nv].log, r.variant, cfg, nets);
        r.prmse_m = res.prmse_m;
        r.runtime_s = res.runtime_s;
      } catch (const std::exception& e) {
        r.error = e.what();
        r.prmse_m = std::numeric_limits<double>::quiet_NaN();
        r.runtime_s = std::numeric_limits<double>::quiet_NaN();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(rep.rows.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (std::size_t v = 0; v < nv; ++v) {
    VariantSummary s;
    s.variant = variants[v];
    std::vector<double> rt;
    double sum = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto& r = rep.rows[i * nv + v];
      if (!r.error.empty()) {
        ++s.failures;
        continue;
      }
      sum += r.prmse_m;
      rt.push_back(r.runtime_s);
    }
    s.runs = rt.size();
    if (!rt.empty()) {
      s.mean_prmse = sum / static_cast<double>(rt.size());
      s.runtime_mean = std::accumulate(rt.begin(), rt.end(), 0.0) / static_cast<double>(rt.size());
      s.runtime_min = *std::min_element(rt.begin(), rt.end());
      s.runtime_max = *std::max_element(rt.begin(), rt.end());
    } else {
      s.mean_prmse = s.runtime_mean = s.runtime_min = s.runtime_max = std::numeric_limits<double>::quiet_NaN();
    }
    rep.summary.push_back(s);
  }

  const auto ours = std::find_if(rep.summary.begin(), rep.summary.end(),
                                 [](const VariantSummary& s) { return s.variant == FilterVariant::kAnpmnUkf; });
  if (ours != rep.summary.end() && ours->runs > 0) {
    for (const auto& s : rep.summary) {
      if (s.variant == FilterVariant::kAnpmnUkf || s.runs == 0) continue;
      rep.improvement.emplace_back(s.variant, improvement_percent(s.mean_prmse, ours->mean_prmse));
    }
  }
  return rep;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void write_results_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  auto out = open_out(path);
  out << "dataset,traj,variant,prmse_m,runtime_s\n";
  for (const auto& r : rows) {
    out << r.dataset << ',' << r.traj << ',' << to_string(r.variant) << ',' << sim::format_double(r.prmse_m) << ','
        << sim::format_double(r.runtime_s) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void write_summary_csv(const BenchReport& r, const std::string& path) {
  auto out = open_out(path);
  out << "variant,runs,failures,mean_prmse_m,runtime_mean_s,runtime_min_s,runtime_max_s,anpmn_improvement_pct\n";
  for (const auto& s : r.summary) {
    std::string imp;
    for (const auto& [v, pct] : r.improvement) {
      if (v == s.variant) imp = sim::format_double(pct);
    }
    out << to_string(s.variant) << ',' << s.runs << ',' << s.failures << ',' << sim::format_double(s.mean_prmse) << ','
        << sim::format_double(s.runtime_mean) << ',' << sim::format_double(s.runtime_min) << ','
        << sim::format_double(s.runtime_max) << ',' << imp << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

void write_epoch_csv(const RunResult& r, const sim::TrajectoryLog& log, const std::string& path) {
  if (r.est_ned.size() != log.rows.size()) throw std::invalid_argument("write_epoch_csv: result does not match log");
  auto out = open_out(path);
  out << "t,est_n,est_e,est_d,gt_n,gt_e,gt_d,err_m\n";
  for (std::size_t k = 0; k < r.est_ned.size(); ++k) {
    const Vec3& e = r.est_ned[k];
    const Vec3& g = log.rows[k].gt_ned;
    out << sim::format_double(r.t[k]);
    for (int a = 0; a < 3; ++a) out << ',' << sim::format_double(e[a]);
    for (int a = 0; a < 3; ++a) out << ',' << sim::format_double(g[a]);
    out << ',' << sim::format_double((e - g).norm()) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace anpmn::pipeline
