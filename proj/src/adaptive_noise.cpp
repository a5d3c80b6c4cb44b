#include "anpmn/adaptive_noise.hpp"

#include <Eigen/Eigenvalues>

namespace anpmn::adaptive {

InnovationWindow::InnovationWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("InnovationWindow: capacity must be positive");
}

void InnovationWindow::push(const Vec3& nu) {
  entries_.push_back(nu);
  if (entries_.size() > capacity_) entries_.pop_front();
}

Mat3 innovation_covariance(const InnovationWindow& w) {
  if (w.empty()) throw WindowWarmingUp();
  Mat3 c = Mat3::Zero();
  for (const auto& nu : w.entries()) c += nu * nu.transpose();
  c /= static_cast<double>(w.size());
  return 0.5 * (c + c.transpose());
}

MatrixXd adapt_Q(const Mat3& C, const MatrixXd& K) {
  if (K.cols() != 3) throw std::invalid_argument("adapt_Q: gain must have 3 columns");
  MatrixXd q = K * C * K.transpose();
  return 0.5 * (q + q.transpose());
}

Mat3 adapt_R(const Mat3& C, const Mat3& S_minus, double floor) {
  Mat3 raw = C - S_minus;
  raw = 0.5 * (raw + raw.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(raw);
  const Vec3 clipped = eig.eigenvalues().cwiseMax(floor);
  Mat3 r = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (r + r.transpose());
}

void BlendConfig::validate() const {
  if (!(alpha_blend >= 0.0 && alpha_blend <= 1.0)) throw std::invalid_argument("blend.alpha must lie in [0, 1]");
  if (!(beta_blend >= 0.0 && beta_blend <= 1.0)) throw std::invalid_argument("blend.beta must lie in [0, 1]");
}

MatrixXd blend(const MatrixXd& adaptive, const MatrixXd& constant, double weight) {
  if (adaptive.rows() != constant.rows() || adaptive.cols() != constant.cols()) {
    throw std::invalid_argument("blend: shape mismatch");
  }
  return weight * adaptive + (1.0 - weight) * constant;
}

MatrixXd blend_Q(const MatrixXd& q_net, const BlendConfig& cfg) {
  cfg.validate();
  return blend(q_net, cfg.q_const, cfg.alpha_blend);
}

Mat3 blend_R(const Mat3& r_net, const BlendConfig& cfg) {
  cfg.validate();
  return blend(r_net, cfg.r_const, cfg.beta_blend);
}

}  // namespace anpmn::adaptive
