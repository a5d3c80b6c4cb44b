#include "anpmn/ukf.hpp"

#include "anpmn/log.hpp"

#include <cmath>
#include <string>

namespace anpmn::ukf {

SigmaWeights compute_weights(const UtParams& p) {
  if (p.n < 1) throw std::invalid_argument("UtParams: state dimension must be >= 1");
  if (!(p.alpha_ut > 0.0)) throw std::invalid_argument("UtParams: alpha_ut must be > 0");
  const double lambda = p.lambda();
  const double scale = p.n + lambda;
  if (!(scale > 0.0)) {
    throw std::invalid_argument("UtParams: n + lambda = " + std::to_string(scale) + " is not positive");
  }
  const int count = 2 * p.n + 1;
  SigmaWeights w;
  w.lambda = lambda;
  w.wm = VectorXd::Constant(count, 1.0 / (2.0 * scale));
  w.wc = w.wm;
  w.wm(0) = lambda / scale;
  const double a2 = p.alpha_ut * p.alpha_ut;
  const double extra = p.convention == WeightConvention::kAsPublished ? (1.0 + a2 + p.beta_ut)
                                                                       : (1.0 - a2 + p.beta_ut);
  w.wc(0) = w.wm(0) + extra;
  return w;
}

namespace {

bool try_cholesky(const MatrixXd& a, MatrixXd& lower) {
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  return lower.allFinite();
}

}  // namespace

SigmaPointSet generate_sigma_points(const GaussianState& s, const SigmaWeights& w) {
  const int n = s.dim();
  if (n != w.state_dim() || s.cov.rows() != n || s.cov.cols() != n) {
    throw std::invalid_argument("generate_sigma_points: dimension mismatch");
  }
  const double scale = n + w.lambda;
  MatrixXd cov = s.cov;
  symmetrize(cov);

  MatrixXd lower;
  if (!try_cholesky(scale * cov, lower)) {
    double eps = 1e-9 * cov.trace() / n;
    if (!(eps > 0.0)) eps = 1e-12;
    cov.diagonal().array() += eps;
    if (!try_cholesky(scale * cov, lower)) {
      throw NonPositiveDefinite("generate_sigma_points: covariance is not positive definite");
    }
  }

  SigmaPointSet out;
  out.points.resize(n, 2 * n + 1);
  out.points.col(0) = s.mean;
  for (int i = 0; i < n; ++i) {
    out.points.col(1 + i) = s.mean + lower.col(i);
    out.points.col(1 + n + i) = s.mean - lower.col(i);
  }
  return out;
}

namespace {

MatrixXd propagate(const SigmaPointSet& pts, const VectorFn& g) {
  const auto count = pts.points.cols();
  VectorXd first = g(pts.points.col(0));
  MatrixXd out(first.size(), count);
  out.col(0) = first;
  for (Eigen::Index i = 1; i < count; ++i) {
    VectorXd yi = g(pts.points.col(i));
    if (yi.size() != first.size()) throw std::invalid_argument("unscented_transform: inconsistent output size");
    out.col(i) = yi;
  }
  return out;
}

VectorXd weighted_mean(const MatrixXd& cols, const VectorXd& wm) { return cols * wm; }

MatrixXd weighted_cross(const MatrixXd& a, const VectorXd& ma, const MatrixXd& b, const VectorXd& mb,
                        const VectorXd& wc) {
  const MatrixXd da = a.colwise() - ma;
  const MatrixXd db = b.colwise() - mb;
  return da * wc.asDiagonal() * db.transpose();
}

}  // namespace

GaussianState unscented_transform(const SigmaPointSet& pts, const SigmaWeights& w, const VectorFn& g,
                                  const MatrixXd& additive_cov) {
  if (pts.points.cols() != w.wm.size()) throw std::invalid_argument("unscented_transform: weight count mismatch");
  const MatrixXd ys = propagate(pts, g);
  const auto m = ys.rows();
  if (additive_cov.rows() != m || additive_cov.cols() != m) {
    throw std::invalid_argument("unscented_transform: additive covariance must be " + std::to_string(m) + "x" +
                                std::to_string(m));
  }
  GaussianState out;
  out.mean = weighted_mean(ys, w.wm);
  out.cov = weighted_cross(ys, out.mean, ys, out.mean, w.wc) + additive_cov;
  symmetrize(out.cov);
  return out;
}

GaussianState predict(const GaussianState& s, const VectorFn& f, const MatrixXd& Q, const SigmaWeights& w) {
  return unscented_transform(generate_sigma_points(s, w), w, f, Q);
}

UpdateResult update(const GaussianState& pred, const VectorFn& h, const VectorXd& z, const MatrixXd& R,
                    const SigmaWeights& w) {
  const SigmaPointSet pts = generate_sigma_points(pred, w);
  const MatrixXd zs = propagate(pts, h);
  const auto m = zs.rows();
  if (z.size() != m || R.rows() != m || R.cols() != m) throw std::invalid_argument("update: dimension mismatch");

  UpdateResult r;
  const VectorXd z_hat = weighted_mean(zs, w.wm);
  r.S_minus = weighted_cross(zs, z_hat, zs, z_hat, w.wc);
  symmetrize(r.S_minus);
  r.S = r.S_minus + R;
  symmetrize(r.S);
  const MatrixXd pxz = weighted_cross(pts.points, pred.mean, zs, z_hat, w.wc);

  // K = Pxz S^-1, solved as S K^T = Pxz^T (S symmetric).
  Eigen::LLT<MatrixXd> llt(r.S);
  if (llt.info() == Eigen::Success) {
    r.K = llt.solve(pxz.transpose()).transpose();
  } else {
    r.degenerate = true;
    log::warn("ukf update: innovation covariance singular, using pseudo-inverse");
    r.K = pxz * r.S.completeOrthogonalDecomposition().pseudoInverse();
  }

  r.innovation = z - z_hat;
  r.posterior.mean = pred.mean + r.K * r.innovation;
  r.posterior.cov = pred.cov - r.K * r.S * r.K.transpose();
  symmetrize(r.posterior.cov);
  return r;
}

}  // namespace anpmn::ukf
