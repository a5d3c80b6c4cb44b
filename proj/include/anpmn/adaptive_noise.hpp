// Innovation-based covariance matching and blending of network-regressed
// covariances with constant ones.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <deque>
#include <stdexcept>

namespace anpmn::adaptive {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Eigen::MatrixXd;

/// Raised while the innovation window has no entries yet.
class WindowWarmingUp : public std::runtime_error {
 public:
  WindowWarmingUp() : std::runtime_error("innovation window is empty") {}
};

/// FIFO of the last `capacity` innovations.
class InnovationWindow {
 public:
  explicit InnovationWindow(std::size_t capacity);

  void push(const Vec3& nu);
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool full() const { return entries_.size() == capacity_; }
  bool empty() const { return entries_.empty(); }
  const std::deque<Vec3>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<Vec3> entries_;
};

/// C = (1/count) * sum nu nu^T over the stored innovations.
Mat3 innovation_covariance(const InnovationWindow& w);

/// Q_hat = K C K^T.
MatrixXd adapt_Q(const Mat3& C, const MatrixXd& K);

inline constexpr double kDefaultRFloor = 1e-4;  // m^2

/// R_hat = C - S^-, projected onto {R : R >= floor * I} by eigenvalue clipping.
Mat3 adapt_R(const Mat3& C, const Mat3& S_minus, double floor = kDefaultRFloor);

struct BlendConfig {
  double alpha_blend = 0.5;
  double beta_blend = 0.7;
  MatrixXd q_const;
  Mat3 r_const = Mat3::Identity();

  void validate() const;
};

/// alpha * Q_net + (1 - alpha) * Q_const
MatrixXd blend_Q(const MatrixXd& q_net, const BlendConfig& cfg);
/// beta * R_net + (1 - beta) * R_const
Mat3 blend_R(const Mat3& r_net, const BlendConfig& cfg);

/// Same blends with explicit constant matrices (used when the constant part
/// changes per prediction interval).
MatrixXd blend(const MatrixXd& adaptive, const MatrixXd& constant, double weight);

}  // namespace anpmn::adaptive
