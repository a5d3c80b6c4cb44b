#include "anpmn/noise_net.hpp"

#include "anpmn/log.hpp"
#include "anpmn/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace anpmn::net {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const VectorXd>;
using VecMap = Eigen::Map<VectorXd>;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kSilu: return "silu";
    case Activation::kTanh: return "tanh";
  }
  return "unknown";
}

std::string to_string(InputNorm n) {
  switch (n) {
    case InputNorm::kNone: return "none";
    case InputNorm::kMean: return "mean";
    case InputNorm::kDiff1: return "diff1";
    case InputNorm::kDiff2: return "diff2";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "silu") return Activation::kSilu;
  if (s == "tanh") return Activation::kTanh;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

InputNorm input_norm_from_string(const std::string& s) {
  if (s == "none") return InputNorm::kNone;
  if (s == "mean") return InputNorm::kMean;
  if (s == "diff1") return InputNorm::kDiff1;
  if (s == "diff2") return InputNorm::kDiff2;
  throw std::invalid_argument("unknown input normalization '" + s + "'");
}

NetConfig NetConfig::sigma_q() {
  NetConfig c;
  c.in_channels = 6;
  c.out_dim = 6;
  c.input_scale = 100.0;
  c.output_scale = 0.01;
  return c;
}

NetConfig NetConfig::sigma_r() {
  NetConfig c;
  c.in_channels = 3;
  c.out_dim = 3;
  c.input_scale = 0.5;
  c.output_scale = 2.0;
  return c;
}

int NetConfig::normalized_len() const {
  switch (input_norm) {
    case InputNorm::kDiff1: return window_len - 1;
    case InputNorm::kDiff2: return window_len - 2;
    default: return window_len;
  }
}

std::vector<int> NetConfig::conv_lengths() const {
  std::vector<int> out;
  int len = normalized_len();
  for (const auto& b : conv_blocks) {
    len = (len - b.kernel) / b.stride + 1;
    out.push_back(len);
  }
  return out;
}

void NetConfig::validate() const {
  if (in_channels < 1 || out_dim < 1) throw std::invalid_argument("NetConfig: channel counts must be positive");
  if (out_dim != in_channels) throw std::invalid_argument("NetConfig: out_dim must equal in_channels");
  if (window_len < 3) throw std::invalid_argument("NetConfig: window too short");
  if (!(input_scale > 0.0) || !(output_scale > 0.0)) throw std::invalid_argument("NetConfig: scales must be positive");
  int len = normalized_len();
  for (const auto& b : conv_blocks) {
    if (b.out_channels < 1 || b.kernel < 1 || b.stride < 1) throw std::invalid_argument("NetConfig: bad conv block");
    if (len < b.kernel) throw std::invalid_argument("NetConfig: conv kernel longer than its input");
    len = (len - b.kernel) / b.stride + 1;
  }
  for (int w : fc_widths) {
    if (w < 1) throw std::invalid_argument("NetConfig: fc widths must be positive");
  }
  if (layer_norm && fc_widths.empty()) throw std::invalid_argument("NetConfig: layer norm needs a hidden fc layer");
}

namespace {

// Flattened feature count entering the first fully-connected layer.
int flat_size(const NetConfig& cfg) {
  if (cfg.conv_blocks.empty()) return cfg.in_channels * cfg.normalized_len();
  return cfg.conv_blocks.back().out_channels * cfg.conv_lengths().back();
}

}  // namespace

std::vector<TensorInfo> layout(const NetConfig& cfg) {
  cfg.validate();
  std::vector<TensorInfo> out;
  std::size_t off = 0;
  auto add = [&](std::string name, std::size_t n) {
    out.push_back({std::move(name), off, n});
    off += n;
  };
  int c_in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    const auto& b = cfg.conv_blocks[i];
    add("conv" + std::to_string(i) + ".weight", static_cast<std::size_t>(b.out_channels * c_in * b.kernel));
    add("conv" + std::to_string(i) + ".bias", static_cast<std::size_t>(b.out_channels));
    c_in = b.out_channels;
  }
  int in = flat_size(cfg);
  for (std::size_t j = 0; j < cfg.fc_widths.size(); ++j) {
    const int w = cfg.fc_widths[j];
    add("fc" + std::to_string(j) + ".weight", static_cast<std::size_t>(w * in));
    add("fc" + std::to_string(j) + ".bias", static_cast<std::size_t>(w));
    if (j == 0 && cfg.layer_norm) {
      add("ln.gain", static_cast<std::size_t>(w));
      add("ln.shift", static_cast<std::size_t>(w));
    }
    in = w;
  }
  add("head.weight", static_cast<std::size_t>(cfg.out_dim * in));
  add("head.bias", static_cast<std::size_t>(cfg.out_dim));
  return out;
}

std::size_t param_count(const NetConfig& cfg) {
  const auto l = layout(cfg);
  return l.back().offset + l.back().size;
}

NetParams::NetParams(NetConfig cfg) : config(std::move(cfg)), values(param_count(config), 0.0) {}

bool NetParams::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

NetParams init_params(const NetConfig& cfg, std::uint64_t seed) {
  NetParams p(cfg);
  Philox4x32 rng(stream_key({seed, 0x1A17ULL}));
  const double gain = cfg.activation == Activation::kTanh ? 1.0 : std::sqrt(2.0);
  const auto tensors = layout(cfg);

  int c_in = cfg.in_channels;
  std::size_t t = 0;
  auto fill_uniform = [&](const TensorInfo& ti, double bound) {
    for (std::size_t i = 0; i < ti.size; ++i) p.values[ti.offset + i] = rng.uniform(-bound, bound);
  };
  for (const auto& b : cfg.conv_blocks) {
    fill_uniform(tensors[t++], gain * std::sqrt(3.0 / (c_in * b.kernel)));
    ++t;  // bias stays zero
    c_in = b.out_channels;
  }
  int in = flat_size(cfg);
  for (std::size_t j = 0; j < cfg.fc_widths.size(); ++j) {
    fill_uniform(tensors[t++], gain * std::sqrt(3.0 / in));
    ++t;
    if (j == 0 && cfg.layer_norm) {
      const auto& g = tensors[t++];
      std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(g.offset), g.size, 1.0);
      ++t;
    }
    in = cfg.fc_widths[j];
  }
  fill_uniform(tensors[t++], std::sqrt(3.0 / in));
  return p;
}

MatrixXd normalize_input(const NetConfig& cfg, const MatrixXd& x) {
  if (x.rows() != cfg.in_channels || x.cols() != cfg.window_len) {
    std::ostringstream os;
    os << "noise net input must be " << cfg.in_channels << "x" << cfg.window_len << ", got " << x.rows() << "x"
       << x.cols();
    throw std::invalid_argument(os.str());
  }
  if (!x.allFinite()) throw std::invalid_argument("noise net input contains non-finite values");
  const auto L = x.cols();
  MatrixXd out;
  switch (cfg.input_norm) {
    case InputNorm::kNone: out = x; break;
    case InputNorm::kMean: out = x.colwise() - x.rowwise().mean(); break;
    case InputNorm::kDiff1: out = x.rightCols(L - 1) - x.leftCols(L - 1); break;
    case InputNorm::kDiff2: out = x.rightCols(L - 2) - 2.0 * x.middleCols(1, L - 2) + x.leftCols(L - 2); break;
  }
  return out * cfg.input_scale;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double act(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kSilu: return z * sigmoid(z);
    case Activation::kTanh: return std::tanh(z);
  }
  return z;
}

double act_grad(Activation a, double z) {
  switch (a) {
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kSilu: {
      const double s = sigmoid(z);
      return s * (1.0 + z * (1.0 - s));
    }
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

constexpr double kLayerNormEps = 1e-5;

// (C*K) x Lout patch matrix; row c*K + k, column t holds x(c, t*stride + k).
MatrixXd im2col(const MatrixXd& x, int kernel, int stride, int out_len) {
  const auto C = x.rows();
  MatrixXd p(C * kernel, out_len);
  for (int t = 0; t < out_len; ++t) {
    for (Eigen::Index c = 0; c < C; ++c) {
      p.block(c * kernel, t, kernel, 1) = x.row(c).segment(static_cast<Eigen::Index>(t) * stride, kernel).transpose();
    }
  }
  return p;
}

void col2im_add(const MatrixXd& dp, int kernel, int stride, MatrixXd& dx) {
  const auto C = dx.rows();
  for (Eigen::Index t = 0; t < dp.cols(); ++t) {
    for (Eigen::Index c = 0; c < C; ++c) {
      dx.row(c).segment(t * stride, kernel) += dp.block(c * kernel, t, kernel, 1).transpose();
    }
  }
}

struct Trace {
  std::vector<MatrixXd> patches;
  std::vector<MatrixXd> conv_pre;
  std::vector<MatrixXd> conv_out;
  std::vector<VectorXd> fc_in;   // input of each hidden fc layer
  std::vector<VectorXd> fc_pre;  // W h + b
  std::vector<VectorXd> fc_act_in;  // argument of the activation (after layer norm when present)
  VectorXd ln_hat;
  double ln_inv_std = 0.0;
  VectorXd head_in;
  VectorXd head_pre;
  VectorXd out;
};

class View {
 public:
  explicit View(const NetParams& p) : cfg_(p.config), tensors_(layout(p.config)), data_(p.values.data()) {
    if (p.values.size() != tensors_.back().offset + tensors_.back().size) {
      throw std::invalid_argument("NetParams: value count does not match configuration");
    }
  }
  const double* at(std::size_t i) const { return data_ + tensors_[i].offset; }
  const TensorInfo& info(std::size_t i) const { return tensors_[i]; }
  const NetConfig& cfg() const { return cfg_; }

 private:
  const NetConfig& cfg_;
  std::vector<TensorInfo> tensors_;
  const double* data_;
};

Trace run_forward(const View& v, const MatrixXd& x_raw) {
  const NetConfig& cfg = v.cfg();
  Trace tr;
  MatrixXd x = normalize_input(cfg, x_raw);
  const auto lengths = cfg.conv_lengths();

  std::size_t t = 0;
  int c_in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    const auto& b = cfg.conv_blocks[i];
    ConstRowMap W(v.at(t), b.out_channels, static_cast<Eigen::Index>(c_in) * b.kernel);
    ConstVecMap bias(v.at(t + 1), b.out_channels);
    t += 2;
    tr.patches.push_back(im2col(x, b.kernel, b.stride, lengths[i]));
    MatrixXd z = W * tr.patches.back();
    z.colwise() += bias;
    tr.conv_pre.push_back(z);
    x = z.unaryExpr([&](double s) { return act(cfg.activation, s); });
    tr.conv_out.push_back(x);
    c_in = b.out_channels;
  }

  VectorXd h(x.size());
  RowMap(h.data(), x.rows(), x.cols()) = x;

  for (std::size_t j = 0; j < cfg.fc_widths.size(); ++j) {
    const int w = cfg.fc_widths[j];
    ConstRowMap W(v.at(t), w, h.size());
    ConstVecMap bias(v.at(t + 1), w);
    t += 2;
    tr.fc_in.push_back(h);
    VectorXd z = W * h + bias;
    tr.fc_pre.push_back(z);
    VectorXd u = z;
    if (j == 0 && cfg.layer_norm) {
      ConstVecMap gain(v.at(t), w);
      ConstVecMap shift(v.at(t + 1), w);
      t += 2;
      const double mu = z.mean();
      const double var = (z.array() - mu).square().mean();
      tr.ln_inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      tr.ln_hat = (z.array() - mu) * tr.ln_inv_std;
      u = gain.cwiseProduct(tr.ln_hat) + shift;
    }
    tr.fc_act_in.push_back(u);
    h = u.unaryExpr([&](double s) { return act(cfg.activation, s); });
  }

  ConstRowMap W(v.at(t), cfg.out_dim, h.size());
  ConstVecMap bias(v.at(t + 1), cfg.out_dim);
  tr.head_in = h;
  tr.head_pre = W * h + bias;
  // softplus underflows to exactly zero for very negative inputs; keep the
  // output a strictly positive standard deviation.
  tr.out = (tr.head_pre.unaryExpr([](double s) { return softplus(s); }) * cfg.output_scale)
               .cwiseMax(std::numeric_limits<double>::min());
  return tr;
}

}  // namespace

VectorXd forward(const NetParams& p, const MatrixXd& x) { return run_forward(View(p), x).out; }

double mse_loss(const VectorXd& y_hat, const VectorXd& y) {
  if (y_hat.size() != y.size() || y.size() == 0) throw std::invalid_argument("mse_loss: size mismatch");
  return (y_hat - y).squaredNorm() / static_cast<double>(y.size());
}

double accumulate_gradient(const NetParams& p, const MatrixXd& x, const VectorXd& y, std::span<double> grad) {
  const View v(p);
  const NetConfig& cfg = p.config;
  if (grad.size() != p.values.size()) throw std::invalid_argument("accumulate_gradient: gradient size mismatch");
  if (y.size() != cfg.out_dim) throw std::invalid_argument("accumulate_gradient: label size mismatch");

  const Trace tr = run_forward(v, x);
  const double loss = mse_loss(tr.out, y);

  const std::size_t n_conv = cfg.conv_blocks.size();
  const std::size_t n_fc = cfg.fc_widths.size();
  // Tensor index of the head weight.
  std::size_t t = 2 * n_conv + 2 * n_fc + (cfg.layer_norm ? 2 : 0);
  auto grad_at = [&](std::size_t i) { return grad.data() + v.info(i).offset; };

  // Head: out = s * softplus(z); d out / d z = s * sigmoid(z).
  VectorXd d_out = 2.0 * (tr.out - y) / static_cast<double>(cfg.out_dim);
  VectorXd dz = d_out.cwiseProduct(tr.head_pre.unaryExpr([](double s) { return sigmoid(s); })) * cfg.output_scale;
  {
    ConstRowMap W(v.at(t), cfg.out_dim, tr.head_in.size());
    RowMap(grad_at(t), cfg.out_dim, tr.head_in.size()) += dz * tr.head_in.transpose();
    VecMap(grad_at(t + 1), cfg.out_dim) += dz;
    dz = W.transpose() * dz;  // now d loss / d h (input of head)
  }

  for (std::size_t jj = n_fc; jj-- > 0;) {
    const int w = cfg.fc_widths[jj];
    const bool ln = (jj == 0 && cfg.layer_norm);
    // Step back to this layer's tensors.
    t -= ln ? 4 : 2;
    const VectorXd& u = tr.fc_act_in[jj];
    VectorXd du = dz.cwiseProduct(u.unaryExpr([&](double s) { return act_grad(cfg.activation, s); }));
    VectorXd dpre = du;
    if (ln) {
      ConstVecMap gain(v.at(t + 2), w);
      VecMap(grad_at(t + 2), w) += du.cwiseProduct(tr.ln_hat);
      VecMap(grad_at(t + 3), w) += du;
      const VectorXd dhat = du.cwiseProduct(gain);
      const double mean_d = dhat.mean();
      const double mean_dh = dhat.cwiseProduct(tr.ln_hat).mean();
      dpre = tr.ln_inv_std * (dhat.array() - mean_d - tr.ln_hat.array() * mean_dh).matrix();
    }
    const VectorXd& h = tr.fc_in[jj];
    ConstRowMap W(v.at(t), w, h.size());
    RowMap(grad_at(t), w, h.size()) += dpre * h.transpose();
    VecMap(grad_at(t + 1), w) += dpre;
    dz = W.transpose() * dpre;
  }

  if (n_conv == 0) return loss;

  // Unflatten into the last conv output shape.
  const MatrixXd& last = tr.conv_out.back();
  MatrixXd dx = RowMap(dz.data(), last.rows(), last.cols());
  for (std::size_t i = n_conv; i-- > 0;) {
    const auto& b = cfg.conv_blocks[i];
    t -= 2;
    const int c_in = i == 0 ? cfg.in_channels : cfg.conv_blocks[i - 1].out_channels;
    const MatrixXd dzc = dx.cwiseProduct(tr.conv_pre[i].unaryExpr([&](double s) { return act_grad(cfg.activation, s); }));
    ConstRowMap W(v.at(t), b.out_channels, static_cast<Eigen::Index>(c_in) * b.kernel);
    RowMap(grad_at(t), b.out_channels, static_cast<Eigen::Index>(c_in) * b.kernel) += dzc * tr.patches[i].transpose();
    VecMap(grad_at(t + 1), b.out_channels) += dzc.rowwise().sum();
    if (i == 0) break;
    const MatrixXd dpatch = W.transpose() * dzc;
    MatrixXd dprev = MatrixXd::Zero(c_in, tr.conv_out[i - 1].cols());
    col2im_add(dpatch, b.kernel, b.stride, dprev);
    dx = std::move(dprev);
  }
  return loss;
}

Gradient backward(const NetParams& p, const MatrixXd& x, const VectorXd& y) {
  Gradient g;
  g.values.assign(p.values.size(), 0.0);
  g.loss = accumulate_gradient(p, x, y, g.values);
  return g;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
}

double evaluate_loss(const NetParams& p, const std::vector<LabeledWindow>& data) {
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& w : data) sum += mse_loss(forward(p, w.x), w.y);
  return sum / static_cast<double>(data.size());
}

TrainResult train(const std::vector<LabeledWindow>& train_set, const std::vector<LabeledWindow>& val_set,
                  const TrainConfig& cfg, const NetConfig& net_cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  net_cfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");

  TrainResult result;
  NetParams params = init_params(net_cfg, cfg.seed);
  const std::size_t n_params = params.values.size();
  std::vector<double> grad(n_params), m(n_params, 0.0), vel(n_params, 0.0);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best = std::numeric_limits<double>::infinity();
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Philox4x32 shuffle_rng(stream_key({cfg.seed, static_cast<std::uint64_t>(epoch), 0x5EEDULL}));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < end; ++k) {
        const auto& w = train_set[order[k]];
        epoch_loss += accumulate_gradient(params, w.x, w.y, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < n_params; ++i) {
        const double g = grad[i] * inv;
        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
        vel[i] = cfg.adam_beta2 * vel[i] + (1.0 - cfg.adam_beta2) * g * g;
        params.values[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(vel[i] / c2) + cfg.adam_eps);
      }
    }
    const double train_loss = epoch_loss / static_cast<double>(train_set.size());
    const double val_loss = val_set.empty() ? train_loss : evaluate_loss(params, val_set);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss) || !params.all_finite()) {
      std::ostringstream os;
      os << "training diverged at epoch " << epoch << " (train loss " << train_loss << ", val loss " << val_loss
         << ")";
      throw std::runtime_error(os.str());
    }
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);
    if (val_loss < best) {
      best = val_loss;
      result.params = params;
      result.best_epoch = epoch;
    }
    log::debug("epoch ", epoch, " train ", train_loss, " val ", val_loss);
    if (on_epoch) on_epoch(epoch, train_loss, val_loss);
  }
  return result;
}

VectorXd infer_sigma_q(const NetParams& p, const MatrixXd& imu_window) {
  if (p.config.in_channels != 6) throw std::invalid_argument("infer_sigma_q: expects a 6-channel network");
  return forward(p, imu_window);
}

VectorXd infer_sigma_r(const NetParams& p, const MatrixXd& pos_window) {
  if (p.config.in_channels != 3) throw std::invalid_argument("infer_sigma_r: expects a 3-channel network");
  return forward(p, pos_window);
}

}  // namespace anpmn::net
