#include "anpmn/dataset.hpp"

#include "anpmn/random.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace anpmn::sim {

namespace fs = std::filesystem;

bool LogRow::operator==(const LogRow& o) const {
  const bool fix_eq = fix.has_value() == o.fix.has_value() &&
                      (!fix || (fix->lat == o.fix->lat && fix->lon == o.fix->lon && fix->height == o.fix->height));
  return t == o.t && f_b == o.f_b && w_b == o.w_b && gt_ned == o.gt_ned && fix_eq;
}

bool TrajectoryLog::operator==(const TrajectoryLog& o) const {
  return origin.lat == o.origin.lat && origin.lon == o.origin.lon && origin.height == o.origin.height &&
         rows == o.rows;
}

TrajectoryLog to_log(const NoisyStream& s, const Geodetic& origin, int fix_every) {
  if (fix_every < 1) throw std::invalid_argument("to_log: fix_every must be >= 1");
  const ins::LocalFrame frame(origin);
  TrajectoryLog log;
  log.origin = origin;
  log.rows.reserve(s.records.size());
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& r = s.records[i];
    LogRow row;
    row.t = r.t;
    row.f_b = r.f_b;
    row.w_b = r.w_b;
    row.gt_ned = r.gt_ned;
    if (i % static_cast<std::size_t>(fix_every) == 0) row.fix = frame.to_geodetic(r.p_ned);
    log.rows.push_back(row);
  }
  return log;
}

Dataset build_dataset(const std::vector<TrajectorySpec>& specs, const std::vector<NoiseLevel>& grid,
                      std::uint64_t seed) {
  Dataset d;
  for (std::size_t j = 0; j < specs.size(); ++j) {
    const auto ideal = generate_ideal(specs[j]);
    for (const auto& level : grid) {
      const NoisyStream noisy = corrupt(ideal, level, seed, static_cast<int>(j));
      d.labels.push_back({static_cast<int>(j), level.k, level.sigma_a, level.sigma_g, level.sigma_p});
      d.streams.push_back(to_log(noisy, specs[j].origin));
    }
  }
  return d;
}

WindowSplit split_windows(const Dataset& d, std::size_t len, std::size_t stride, double val_fraction) {
  if (len == 0 || stride == 0) throw std::invalid_argument("split_windows: len and stride must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("split_windows: bad val fraction");
  const auto threshold = static_cast<std::uint64_t>(val_fraction * 10000.0);
  WindowSplit out;
  for (std::size_t s = 0; s < d.streams.size(); ++s) {
    const auto n = d.streams[s].rows.size();
    const std::size_t blocks = n / len;
    std::vector<bool> is_val(blocks, false);
    for (std::size_t b = 0; b < blocks; ++b) {
      const auto h = stream_key({static_cast<std::uint64_t>(d.labels[s].traj_id),
                                 static_cast<std::uint64_t>(d.labels[s].level_k), b, 0x5B117ULL});
      is_val[b] = h % 10000 < threshold;
      if (is_val[b]) out.val.push_back({s, b * len, b});
    }
    // Training windows may overlap each other but never a validation block.
    std::size_t idx = 0;
    for (std::size_t start = 0; start + len <= n; start += stride, ++idx) {
      const std::size_t first = start / len;
      const std::size_t last = (start + len - 1) / len;
      bool clean = true;
      for (std::size_t b = first; b <= last && b < blocks; ++b) clean = clean && !is_val[b];
      if (clean) out.train.push_back({s, start, idx});
    }
  }
  return out;
}

std::vector<net::LabeledWindow> make_windows(const Dataset& d, const std::vector<WindowRef>& refs, WindowKind kind,
                                             std::size_t len) {
  std::vector<net::LabeledWindow> out;
  out.reserve(refs.size());
  const auto L = static_cast<Eigen::Index>(len);
  for (const auto& ref : refs) {
    const TrajectoryLog& log = d.streams.at(ref.stream);
    const StreamLabel& label = d.labels.at(ref.stream);
    if (ref.start + len > log.rows.size()) throw std::out_of_range("make_windows: window past end of stream");
    net::LabeledWindow w;
    if (kind == WindowKind::kImu) {
      w.x.resize(6, L);
      for (Eigen::Index i = 0; i < L; ++i) {
        const auto& row = log.rows[ref.start + static_cast<std::size_t>(i)];
        w.x.block<3, 1>(0, i) = row.f_b;
        w.x.block<3, 1>(3, i) = row.w_b;
      }
      w.y.resize(6);
      w.y << label.sigma_a, label.sigma_a, label.sigma_a, label.sigma_g, label.sigma_g, label.sigma_g;
    } else {
      const ins::LocalFrame frame(log.origin);
      w.x.resize(3, L);
      for (Eigen::Index i = 0; i < L; ++i) {
        const auto& row = log.rows[ref.start + static_cast<std::size_t>(i)];
        if (!row.fix) throw std::invalid_argument("make_windows: position window needs a fix on every epoch");
        w.x.col(i) = frame.to_ned(*row.fix) - row.gt_ned;
      }
      w.y = Eigen::Vector3d::Constant(label.sigma_p);
    }
    out.push_back(std::move(w));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw std::runtime_error("line " + std::to_string(line) + ": invalid number '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

void write_log(const TrajectoryLog& log, std::ostream& os) {
  os << kLogHeader << '\n';
  for (const auto& r : log.rows) {
    os << format_double(r.t);
    for (int a = 0; a < 3; ++a) os << ',' << format_double(r.f_b[a]);
    for (int a = 0; a < 3; ++a) os << ',' << format_double(r.w_b[a]);
    if (r.fix) {
      os << ',' << format_double(r.fix->lat) << ',' << format_double(r.fix->lon) << ',' << format_double(r.fix->height);
    } else {
      os << ",,,";
    }
    for (int a = 0; a < 3; ++a) os << ',' << format_double(r.gt_ned[a]);
    os << '\n';
  }
}

TrajectoryLog read_log(std::istream& is, const Geodetic& origin) {
  TrajectoryLog log;
  log.origin = origin;
  std::string line;
  if (!std::getline(is, line) || trim_cr(line) != kLogHeader) {
    throw std::runtime_error("trajectory log: header must be '" + std::string(kLogHeader) + "'");
  }
  std::size_t lineno = 1;
  double last_t = -std::numeric_limits<double>::infinity();
  while (std::getline(is, line)) {
    ++lineno;
    const auto view = trim_cr(line);
    if (view.empty()) continue;
    const auto f = split_csv(view);
    if (f.size() != 13) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": expected 13 fields, got " + std::to_string(f.size()));
    }
    LogRow r;
    r.t = parse_double(f[0], lineno);
    if (!(r.t > last_t)) throw std::runtime_error("line " + std::to_string(lineno) + ": timestamps must increase");
    last_t = r.t;
    for (int a = 0; a < 3; ++a) r.f_b[a] = parse_double(f[1 + a], lineno);
    for (int a = 0; a < 3; ++a) r.w_b[a] = parse_double(f[4 + a], lineno);
    const int empties = static_cast<int>(f[7].empty()) + static_cast<int>(f[8].empty()) + static_cast<int>(f[9].empty());
    if (empties == 0) {
      r.fix = Geodetic{parse_double(f[7], lineno), parse_double(f[8], lineno), parse_double(f[9], lineno)};
    } else if (empties != 3) {
      throw std::runtime_error("line " + std::to_string(lineno) + ": GNSS columns must be all empty or all set");
    }
    for (int a = 0; a < 3; ++a) r.gt_ned[a] = parse_double(f[10 + a], lineno);
    log.rows.push_back(r);
  }
  return log;
}

void write_log_file(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_log(log, out);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

TrajectoryLog read_log_file(const std::string& path, const Geodetic& origin) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory log '" + path + "'");
  try {
    return read_log(in, origin);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::string stream_file_name(const StreamLabel& label) {
  return "traj" + std::to_string(label.traj_id) + "_level" + std::to_string(label.level_k) + ".csv";
}

namespace {

nlohmann::json origin_json(const Geodetic& g) { return {{"lat", g.lat}, {"lon", g.lon}, {"h", g.height}}; }

Geodetic origin_from_json(const nlohmann::json& j) {
  return {j.at("lat").get<double>(), j.at("lon").get<double>(), j.at("h").get<double>()};
}

}  // namespace

std::vector<std::string> write_dataset(const Dataset& d, const std::string& dir) {
  if (d.labels.size() != d.streams.size()) throw std::invalid_argument("write_dataset: labels/streams mismatch");
  fs::create_directories(dir);
  std::vector<std::string> written;

  nlohmann::json meta;
  meta["format"] = "anpmn-dataset";
  meta["version"] = 1;
  meta["streams"] = nlohmann::json::array();

  std::ofstream labels(fs::path(dir) / "labels.csv", std::ios::trunc);
  if (!labels) throw std::runtime_error("cannot write labels.csv in '" + dir + "'");
  labels << kLabelsHeader << '\n';
  for (std::size_t i = 0; i < d.streams.size(); ++i) {
    const auto& l = d.labels[i];
    labels << l.traj_id << ',' << l.level_k << ',' << format_double(l.sigma_a) << ',' << format_double(l.sigma_g) << ','
           << format_double(l.sigma_p) << '\n';
    const std::string name = stream_file_name(l);
    const std::string path = (fs::path(dir) / name).string();
    write_log_file(d.streams[i], path);
    written.push_back(path);
    meta["streams"].push_back({{"file", name}, {"traj_id", l.traj_id}, {"level_k", l.level_k},
                               {"origin", origin_json(d.streams[i].origin)}});
  }
  labels.close();
  written.push_back((fs::path(dir) / "labels.csv").string());

  const std::string meta_path = (fs::path(dir) / "dataset.json").string();
  std::ofstream mo(meta_path, std::ios::trunc);
  mo << meta.dump(2) << '\n';
  if (!mo) throw std::runtime_error("failed writing '" + meta_path + "'");
  written.push_back(meta_path);
  return written;
}

Dataset read_dataset(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream lf(base / "labels.csv");
  if (!lf) throw std::runtime_error("dataset '" + dir + "': missing labels.csv");
  std::string line;
  if (!std::getline(lf, line) || trim_cr(line) != kLabelsHeader) {
    throw std::runtime_error("labels.csv: header must be '" + std::string(kLabelsHeader) + "'");
  }

  std::ifstream mf(base / "dataset.json");
  if (!mf) throw std::runtime_error("dataset '" + dir + "': missing dataset.json");
  const nlohmann::json meta = nlohmann::json::parse(mf);

  Dataset d;
  std::size_t lineno = 1;
  while (std::getline(lf, line)) {
    ++lineno;
    const auto view = trim_cr(line);
    if (view.empty()) continue;
    const auto f = split_csv(view);
    if (f.size() != 5) throw std::runtime_error("labels.csv line " + std::to_string(lineno) + ": expected 5 fields");
    StreamLabel l;
    l.traj_id = static_cast<int>(parse_double(f[0], lineno));
    l.level_k = static_cast<int>(parse_double(f[1], lineno));
    l.sigma_a = parse_double(f[2], lineno);
    l.sigma_g = parse_double(f[3], lineno);
    l.sigma_p = parse_double(f[4], lineno);
    d.labels.push_back(l);
  }

  const auto& streams = meta.at("streams");
  if (streams.size() != d.labels.size()) throw std::runtime_error("dataset.json and labels.csv disagree on stream count");
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    const auto& s = streams[i];
    if (s.at("traj_id").get<int>() != d.labels[i].traj_id || s.at("level_k").get<int>() != d.labels[i].level_k) {
      throw std::runtime_error("dataset.json and labels.csv disagree at stream " + std::to_string(i));
    }
    d.streams.push_back(read_log_file((base / s.at("file").get<std::string>()).string(), origin_from_json(s.at("origin"))));
  }
  return d;
}

std::optional<Geodetic> lookup_origin(const std::string& stream_path) {
  const fs::path p(stream_path);
  const fs::path meta_path = p.parent_path() / "dataset.json";
  std::ifstream mf(meta_path);
  if (!mf) return std::nullopt;
  const nlohmann::json meta = nlohmann::json::parse(mf, nullptr, false);
  if (meta.is_discarded() || !meta.contains("streams")) return std::nullopt;
  for (const auto& s : meta["streams"]) {
    if (s.value("file", "") == p.filename().string()) return origin_from_json(s.at("origin"));
  }
  return std::nullopt;
}

}  // namespace anpmn::sim
