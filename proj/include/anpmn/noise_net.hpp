// Dual-use 1D-convolutional noise regressor.
//
// One backbone serves both estimators: the inertial one (6 channels in, six
// per-axis stds out) and the position one (3 in, 3 out). The layer stack is
//
//   normalize -> [conv1d -> act] x B -> flatten -> fc -> layernorm -> act
//             -> [fc -> act] ... -> fc(out_dim) -> softplus * output_scale
//
// All parameters live in one flat vector, laid out tensor by tensor in
// declaration order (see NetLayout), which is also the on-disk order.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace anpmn::net {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation : std::uint32_t { kRelu = 0, kSilu = 1, kTanh = 2 };

/// Per-channel preprocessing applied to each window before the first conv.
enum class InputNorm : std::uint32_t {
  kNone = 0,
  kMean = 1,   ///< subtract the channel mean
  kDiff1 = 2,  ///< first difference (length L-1)
  kDiff2 = 3,  ///< second difference (length L-2)
};

std::string to_string(Activation a);
std::string to_string(InputNorm n);
Activation activation_from_string(const std::string& s);
InputNorm input_norm_from_string(const std::string& s);

struct ConvBlock {
  int out_channels = 16;
  int kernel = 5;
  int stride = 2;
};

struct NetConfig {
  int in_channels = 6;
  int window_len = 100;
  std::vector<ConvBlock> conv_blocks{{16, 5, 2}, {32, 5, 2}};
  std::vector<int> fc_widths{128, 64};
  int out_dim = 6;
  Activation activation = Activation::kSilu;
  InputNorm input_norm = InputNorm::kMean;
  double input_scale = 1.0;   ///< multiplies the normalized input
  double output_scale = 1.0;  ///< multiplies the softplus head
  bool layer_norm = true;     ///< layer norm after the first fully-connected layer

  /// Inertial estimator: 6 -> 6.
  static NetConfig sigma_q();
  /// Position estimator: 3 -> 3.
  static NetConfig sigma_r();

  void validate() const;
  int normalized_len() const;
  /// Sequence length after each conv block.
  std::vector<int> conv_lengths() const;
};

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Offsets of every tensor inside the flat parameter vector.
std::vector<TensorInfo> layout(const NetConfig& cfg);
std::size_t param_count(const NetConfig& cfg);

struct NetParams {
  NetConfig config;
  std::vector<double> values;

  NetParams() = default;
  explicit NetParams(NetConfig cfg);

  bool all_finite() const;
};

/// Fan-in scaled uniform init for weights, zero biases, unit layer-norm gain.
NetParams init_params(const NetConfig& cfg, std::uint64_t seed);

struct LabeledWindow {
  MatrixXd x;  ///< in_channels x window_len
  VectorXd y;  ///< out_dim ground-truth stds
};

MatrixXd normalize_input(const NetConfig& cfg, const MatrixXd& x);

VectorXd forward(const NetParams& p, const MatrixXd& x);

double mse_loss(const VectorXd& y_hat, const VectorXd& y);

struct Gradient {
  double loss = 0.0;
  std::vector<double> values;  ///< same layout as NetParams::values
};

/// Exact gradient of mse_loss(forward(p, x), y) with respect to every parameter.
Gradient backward(const NetParams& p, const MatrixXd& x, const VectorXd& y);

/// Accumulating variant used by training; returns the sample loss.
double accumulate_gradient(const NetParams& p, const MatrixXd& x, const VectorXd& y, std::span<double> grad);

struct TrainConfig {
  double lr = 1e-3;
  int batch = 64;
  int epochs = 200;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct TrainResult {
  NetParams params;  ///< parameters at the best validation epoch
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

/// Mini-batch Adam on the MSE loss. Selection uses the validation loss when a
/// validation set is given, otherwise the training loss.
TrainResult train(const std::vector<LabeledWindow>& train_set, const std::vector<LabeledWindow>& val_set,
                  const TrainConfig& cfg, const NetConfig& net_cfg, const EpochCallback& on_epoch = {});

double evaluate_loss(const NetParams& p, const std::vector<LabeledWindow>& data);

VectorXd infer_sigma_q(const NetParams& p, const MatrixXd& imu_window);
VectorXd infer_sigma_r(const NetParams& p, const MatrixXd& pos_window);

// Weights file: "ANPM", u32 version, config block, u64 count, f64 values;
// everything little-endian.
inline constexpr std::uint32_t kWeightsVersion = 1;
void save_params(const NetParams& p, const std::string& path);
NetParams load_params(const std::string& path);
std::vector<std::uint8_t> serialize_params(const NetParams& p);
NetParams deserialize_params(std::span<const std::uint8_t> bytes);

}  // namespace anpmn::net
