// Scaled unscented transform and the UKF predict/update steps for arbitrary
// state and measurement dimensions.
#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>

namespace anpmn::ukf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Which constant enters the zeroth covariance weight.
///   kAsPublished: wc0 = lambda/(n+lambda) + (1 + alpha^2 + beta)
///   kStandard:    wc0 = lambda/(n+lambda) + (1 - alpha^2 + beta)  (Wan & van der Merwe)
enum class WeightConvention { kAsPublished, kStandard };

struct UtParams {
  double alpha_ut = 1e-3;
  double beta_ut = 2.0;
  double kappa_ut = 0.0;
  int n = 1;
  WeightConvention convention = WeightConvention::kAsPublished;

  double lambda() const { return alpha_ut * alpha_ut * (n + kappa_ut) - n; }
};

struct SigmaWeights {
  VectorXd wm;
  VectorXd wc;
  double lambda = 0.0;

  int state_dim() const { return static_cast<int>((wm.size() - 1) / 2); }
};

struct GaussianState {
  VectorXd mean;
  MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Columns are the 2n+1 sigma points: [x, x + S_1..S_n, x - S_1..S_n].
struct SigmaPointSet {
  MatrixXd points;
};

using VectorFn = std::function<VectorXd(const VectorXd&)>;

class NonPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

SigmaWeights compute_weights(const UtParams& p);

/// Cholesky-based sigma points. A failed factorization is retried once with
/// eps*I added, eps = 1e-9 * trace(P) / n (floored for an all-zero P).
SigmaPointSet generate_sigma_points(const GaussianState& s, const SigmaWeights& w);

GaussianState unscented_transform(const SigmaPointSet& pts, const SigmaWeights& w, const VectorFn& g,
                                  const MatrixXd& additive_cov);

GaussianState predict(const GaussianState& s, const VectorFn& f, const MatrixXd& Q, const SigmaWeights& w);

struct UpdateResult {
  GaussianState posterior;
  VectorXd innovation;  ///< z - z_hat
  MatrixXd S;           ///< innovation covariance including R
  MatrixXd S_minus;     ///< spread of the predicted measurements only (S - R)
  MatrixXd K;
  bool degenerate = false;  ///< S was singular; pseudo-inverse used
};

UpdateResult update(const GaussianState& pred, const VectorFn& h, const VectorXd& z, const MatrixXd& R,
                    const SigmaWeights& w);

/// C <- (C + C^T) / 2
inline void symmetrize(MatrixXd& c) { c = 0.5 * (c + c.transpose()).eval(); }

}  // namespace anpmn::ukf
