#include "anpmn/noise_net.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace anpmn::net {

namespace {

constexpr char kMagic[4] = {'A', 'N', 'P', 'M'};
constexpr std::uint32_t kMaxDim = 1u << 20;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_++]} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_++]} << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::uint32_t dim() {
    const auto v = u32();
    if (v > kMaxDim) throw std::runtime_error("weights file: implausible dimension");
    return v;
  }
  void expect_magic() {
    need(4);
    if (std::memcmp(b_.data(), kMagic, 4) != 0) throw std::runtime_error("weights file: bad magic (expected ANPM)");
    pos_ += 4;
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw std::runtime_error("weights file: truncated");
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_params(const NetParams& p) {
  const NetConfig& c = p.config;
  c.validate();
  if (p.values.size() != param_count(c)) throw std::invalid_argument("serialize_params: value count mismatch");
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(c.in_channels));
  w.u32(static_cast<std::uint32_t>(c.window_len));
  w.u32(static_cast<std::uint32_t>(c.conv_blocks.size()));
  for (const auto& b : c.conv_blocks) {
    w.u32(static_cast<std::uint32_t>(b.out_channels));
    w.u32(static_cast<std::uint32_t>(b.kernel));
    w.u32(static_cast<std::uint32_t>(b.stride));
  }
  w.u32(static_cast<std::uint32_t>(c.fc_widths.size()));
  for (int fw : c.fc_widths) w.u32(static_cast<std::uint32_t>(fw));
  w.u32(static_cast<std::uint32_t>(c.out_dim));
  w.u32(static_cast<std::uint32_t>(c.activation));
  w.u32(static_cast<std::uint32_t>(c.input_norm));
  w.u32(c.layer_norm ? 1u : 0u);
  w.f64(c.input_scale);
  w.f64(c.output_scale);
  w.u64(p.values.size());
  for (double v : p.values) w.f64(v);
  return w.take();
}

NetParams deserialize_params(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.expect_magic();
  const auto version = r.u32();
  if (version != kWeightsVersion) throw std::runtime_error("weights file: unsupported version " + std::to_string(version));
  NetConfig c;
  c.in_channels = static_cast<int>(r.dim());
  c.window_len = static_cast<int>(r.dim());
  c.conv_blocks.resize(r.dim());
  for (auto& b : c.conv_blocks) {
    b.out_channels = static_cast<int>(r.dim());
    b.kernel = static_cast<int>(r.dim());
    b.stride = static_cast<int>(r.dim());
  }
  c.fc_widths.resize(r.dim());
  for (auto& fw : c.fc_widths) fw = static_cast<int>(r.dim());
  c.out_dim = static_cast<int>(r.dim());
  const auto act = r.u32();
  const auto norm = r.u32();
  if (act > 2 || norm > 3) throw std::runtime_error("weights file: unknown activation or normalization code");
  c.activation = static_cast<Activation>(act);
  c.input_norm = static_cast<InputNorm>(norm);
  c.layer_norm = r.u32() != 0;
  c.input_scale = r.f64();
  c.output_scale = r.f64();
  c.validate();
  const auto count = r.u64();
  if (count != param_count(c)) throw std::runtime_error("weights file: parameter count does not match configuration");
  NetParams p(c);
  for (auto& v : p.values) v = r.f64();
  if (!r.at_end()) throw std::runtime_error("weights file: trailing bytes");
  if (!p.all_finite()) throw std::runtime_error("weights file: non-finite parameter");
  return p;
}

void save_params(const NetParams& p, const std::string& path) {
  const auto bytes = serialize_params(p);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

NetParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_params(bytes);
}

}  // namespace anpmn::net
