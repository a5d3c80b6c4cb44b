#include "anpmn/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

namespace anpmn::config {

using nlohmann::json;

namespace {

constexpr double kDeg = M_PI / 180.0;

void flatten_into(const json& j, const std::string& prefix, json& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten_into(v, prefix.empty() ? k : prefix + "." + k, out);
  } else {
    if (out.contains(prefix)) throw ConfigError("duplicate config key '" + prefix + "'");
    out[prefix] = j;
  }
}

double num(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  return v.get<double>();
}

int integer(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
  return v.get<int>();
}

bool boolean(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError("config key '" + key + "' must be true or false");
  return v.get<bool>();
}

std::string str(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
  return v.get<std::string>();
}

ins::Vec3 vec3(const json& v, const std::string& key) {
  if (v.is_number()) return ins::Vec3::Constant(v.get<double>());
  if (v.is_array() && v.size() == 3) return {num(v[0], key), num(v[1], key), num(v[2], key)};
  throw ConfigError("config key '" + key + "' must be a number or a 3-element array");
}

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

using Setter = std::function<void(AppConfig&, const json&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m = {
      {"seed",
       [](AppConfig& c, const json& v, const std::string& k) {
         if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
           throw ConfigError("config key '" + k + "' must be a non-negative integer");
         }
         c.seed = v.get<std::uint64_t>();
       }},
      {"sim.duration", [](AppConfig& c, const json& v, const std::string& k) { c.duration = num(v, k); }},
      {"sim.trajectories", [](AppConfig& c, const json& v, const std::string& k) { c.trajectories = integer(v, k); }},
      {"sim.levels", [](AppConfig& c, const json& v, const std::string& k) { c.grid.levels = integer(v, k); }},
      {"sim.sigma_a.lo", [](AppConfig& c, const json& v, const std::string& k) { c.grid.sigma_a.lo = num(v, k); }},
      {"sim.sigma_a.hi", [](AppConfig& c, const json& v, const std::string& k) { c.grid.sigma_a.hi = num(v, k); }},
      {"sim.sigma_g.lo", [](AppConfig& c, const json& v, const std::string& k) { c.grid.sigma_g.lo = num(v, k); }},
      {"sim.sigma_g.hi", [](AppConfig& c, const json& v, const std::string& k) { c.grid.sigma_g.hi = num(v, k); }},
      {"sim.sigma_p.lo", [](AppConfig& c, const json& v, const std::string& k) { c.grid.sigma_p.lo = num(v, k); }},
      {"sim.sigma_p.hi", [](AppConfig& c, const json& v, const std::string& k) { c.grid.sigma_p.hi = num(v, k); }},
      {"sim.origin.lat_deg", [](AppConfig& c, const json& v, const std::string& k) { c.origin_lat_deg = num(v, k); }},
      {"sim.origin.lon_deg", [](AppConfig& c, const json& v, const std::string& k) { c.origin_lon_deg = num(v, k); }},
      {"sim.origin.h", [](AppConfig& c, const json& v, const std::string& k) { c.origin_h = num(v, k); }},
      {"filter.gnss_rate_hz", [](AppConfig& c, const json& v, const std::string& k) { c.run.gnss_rate_hz = num(v, k); }},
      {"filter.p0",
       [](AppConfig& c, const json& v, const std::string& k) {
         if (!v.is_array() || v.size() != 15) throw ConfigError("config key '" + k + "' must be a 15-element array");
         for (int i = 0; i < 15; ++i) c.run.p0_diag[i] = num(v[static_cast<std::size_t>(i)], k);
       }},
      {"filter.trace_ceiling",
       [](AppConfig& c, const json& v, const std::string& k) { c.run.trace_ceiling = num(v, k); }},
      {"filter.gap_threshold",
       [](AppConfig& c, const json& v, const std::string& k) { c.run.gap_threshold = num(v, k); }},
      {"filter.ut.alpha", [](AppConfig& c, const json& v, const std::string& k) { c.run.ut.alpha_ut = num(v, k); }},
      {"filter.ut.beta", [](AppConfig& c, const json& v, const std::string& k) { c.run.ut.beta_ut = num(v, k); }},
      {"filter.ut.kappa", [](AppConfig& c, const json& v, const std::string& k) { c.run.ut.kappa_ut = num(v, k); }},
      {"filter.ut.convention",
       [](AppConfig& c, const json& v, const std::string& k) {
         const auto s = str(v, k);
         if (s == "as-published") {
           c.run.ut.convention = ukf::WeightConvention::kAsPublished;
         } else if (s == "standard") {
           c.run.ut.convention = ukf::WeightConvention::kStandard;
         } else {
           throw ConfigError("config key '" + k + "' must be \"as-published\" or \"standard\"");
         }
       }},
      {"noise.q_const.sigma_a", [](AppConfig& c, const json& v, const std::string& k) { c.noise.sigma_a = vec3(v, k); }},
      {"noise.q_const.sigma_g", [](AppConfig& c, const json& v, const std::string& k) { c.noise.sigma_g = vec3(v, k); }},
      {"noise.q_const.sigma_ab",
       [](AppConfig& c, const json& v, const std::string& k) { c.noise.sigma_ab = vec3(v, k); }},
      {"noise.q_const.sigma_gb",
       [](AppConfig& c, const json& v, const std::string& k) { c.noise.sigma_gb = vec3(v, k); }},
      {"noise.r_const.sigma_p", [](AppConfig& c, const json& v, const std::string& k) { c.noise.sigma_p = vec3(v, k); }},
      {"adaptive.window",
       [](AppConfig& c, const json& v, const std::string& k) {
         const int w = integer(v, k);
         if (w < 1) throw ConfigError("config key '" + k + "' must be positive");
         c.run.window = static_cast<std::size_t>(w);
       }},
      {"adaptive.window_min",
       [](AppConfig& c, const json& v, const std::string& k) {
         const int w = integer(v, k);
         if (w < 1) throw ConfigError("config key '" + k + "' must be positive");
         c.run.window_min = static_cast<std::size_t>(w);
       }},
      {"adaptive.adapt_q", [](AppConfig& c, const json& v, const std::string& k) { c.run.adapt_q = boolean(v, k); }},
      {"adaptive.adapt_r", [](AppConfig& c, const json& v, const std::string& k) { c.run.adapt_r = boolean(v, k); }},
      {"adaptive.diag_only",
       [](AppConfig& c, const json& v, const std::string& k) { c.run.adapt_q_diag_only = boolean(v, k); }},
      {"adaptive.r_floor", [](AppConfig& c, const json& v, const std::string& k) { c.run.r_floor = num(v, k); }},
      {"blend.alpha", [](AppConfig& c, const json& v, const std::string& k) { c.run.alpha_blend = num(v, k); }},
      {"blend.beta", [](AppConfig& c, const json& v, const std::string& k) { c.run.beta_blend = num(v, k); }},
      {"train.lr", [](AppConfig& c, const json& v, const std::string& k) { c.train.lr = num(v, k); }},
      {"train.batch", [](AppConfig& c, const json& v, const std::string& k) { c.train.batch = integer(v, k); }},
      {"train.epochs", [](AppConfig& c, const json& v, const std::string& k) { c.train.epochs = integer(v, k); }},
      {"train.stride",
       [](AppConfig& c, const json& v, const std::string& k) {
         const int s = integer(v, k);
         if (s < 1) throw ConfigError("config key '" + k + "' must be positive");
         c.train_stride = static_cast<std::size_t>(s);
       }},
      {"train.val_fraction", [](AppConfig& c, const json& v, const std::string& k) { c.val_fraction = num(v, k); }},
      {"net.activation",
       [](AppConfig& c, const json& v, const std::string& k) {
         const auto a = net::activation_from_string(str(v, k));
         c.net_q.activation = a;
         c.net_r.activation = a;
       }},
      {"net.q.input_norm",
       [](AppConfig& c, const json& v, const std::string& k) { c.net_q.input_norm = net::input_norm_from_string(str(v, k)); }},
      {"net.r.input_norm",
       [](AppConfig& c, const json& v, const std::string& k) { c.net_r.input_norm = net::input_norm_from_string(str(v, k)); }},
      {"net.q.input_scale", [](AppConfig& c, const json& v, const std::string& k) { c.net_q.input_scale = num(v, k); }},
      {"net.q.output_scale", [](AppConfig& c, const json& v, const std::string& k) { c.net_q.output_scale = num(v, k); }},
      {"net.r.input_scale", [](AppConfig& c, const json& v, const std::string& k) { c.net_r.input_scale = num(v, k); }},
      {"net.r.output_scale", [](AppConfig& c, const json& v, const std::string& k) { c.net_r.output_scale = num(v, k); }},
  };
  return m;
}

}  // namespace

void AppConfig::sync_noise() {
  ins::ProcessNoiseSpec spec{noise.sigma_a, noise.sigma_g, noise.sigma_ab, noise.sigma_gb};
  run.qc_diag = spec.continuous(1.0 / run.imu_rate_hz).diagonal();
  run.r_diag = noise.sigma_p.array().square();
}

sim::Geodetic AppConfig::origin() const { return {origin_lat_deg * kDeg, origin_lon_deg * kDeg, origin_h}; }

std::vector<sim::TrajectorySpec> AppConfig::trajectory_specs() const {
  auto specs = sim::default_trajectories(duration);
  if (trajectories < 1 || trajectories > static_cast<int>(specs.size())) {
    throw ConfigError("sim.trajectories must be in [1, " + std::to_string(specs.size()) + "]");
  }
  specs.resize(static_cast<std::size_t>(trajectories));
  for (auto& s : specs) s.origin = origin();
  return specs;
}

void AppConfig::validate() const {
  try {
    for (const auto& s : trajectory_specs()) s.validate();
    if (grid.levels < 2) throw ConfigError("sim.levels must be >= 2");
    const auto check_range = [](const sim::NoiseRange& r, const char* name) {
      if (!(r.lo >= 0.0 && r.hi >= r.lo)) throw ConfigError(std::string(name) + " must satisfy 0 <= lo <= hi");
    };
    check_range(grid.sigma_a, "sim.sigma_a");
    check_range(grid.sigma_g, "sim.sigma_g");
    check_range(grid.sigma_p, "sim.sigma_p");
    if (std::abs(origin_lat_deg) >= 89.0) throw ConfigError("sim.origin.lat_deg must be within (-89, 89)");
    for (const auto* v : {&noise.sigma_a, &noise.sigma_g, &noise.sigma_ab, &noise.sigma_gb, &noise.sigma_p}) {
      if ((v->array() < 0.0).any() || !v->allFinite()) throw ConfigError("noise.* standard deviations must be >= 0");
    }
    run.validate();
    train.validate();
    if (train_stride < 1) throw ConfigError("train.stride must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must be in (0, 1)");
    net_q.validate();
    net_r.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

json flatten(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  json out = json::object();
  flatten_into(j, "", out);
  return out;
}

AppConfig from_json(const json& j) {
  AppConfig c;
  const json flat = flatten(j);
  const auto& table = setters();
  for (const auto& [k, v] : flat.items()) {
    const auto it = table.find(k);
    if (it == table.end()) throw ConfigError("unknown config key '" + k + "'");
    try {
      it->second(c, v, k);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("config key '" + k + "': " + e.what());
    }
  }
  c.sync_noise();
  c.validate();
  return c;
}

AppConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

json to_json(const AppConfig& c) {
  json j = json::object();
  j["seed"] = c.seed;
  j["sim.duration"] = c.duration;
  j["sim.trajectories"] = c.trajectories;
  j["sim.levels"] = c.grid.levels;
  j["sim.sigma_a.lo"] = c.grid.sigma_a.lo;
  j["sim.sigma_a.hi"] = c.grid.sigma_a.hi;
  j["sim.sigma_g.lo"] = c.grid.sigma_g.lo;
  j["sim.sigma_g.hi"] = c.grid.sigma_g.hi;
  j["sim.sigma_p.lo"] = c.grid.sigma_p.lo;
  j["sim.sigma_p.hi"] = c.grid.sigma_p.hi;
  j["sim.origin.lat_deg"] = c.origin_lat_deg;
  j["sim.origin.lon_deg"] = c.origin_lon_deg;
  j["sim.origin.h"] = c.origin_h;
  j["filter.gnss_rate_hz"] = c.run.gnss_rate_hz;
  j["filter.p0"] = vec_json(c.run.p0_diag);
  j["filter.trace_ceiling"] = c.run.trace_ceiling;
  j["filter.gap_threshold"] = c.run.gap_threshold;
  j["filter.ut.alpha"] = c.run.ut.alpha_ut;
  j["filter.ut.beta"] = c.run.ut.beta_ut;
  j["filter.ut.kappa"] = c.run.ut.kappa_ut;
  j["filter.ut.convention"] =
      c.run.ut.convention == ukf::WeightConvention::kAsPublished ? "as-published" : "standard";
  j["noise.q_const.sigma_a"] = vec_json(c.noise.sigma_a);
  j["noise.q_const.sigma_g"] = vec_json(c.noise.sigma_g);
  j["noise.q_const.sigma_ab"] = vec_json(c.noise.sigma_ab);
  j["noise.q_const.sigma_gb"] = vec_json(c.noise.sigma_gb);
  j["noise.r_const.sigma_p"] = vec_json(c.noise.sigma_p);
  j["adaptive.window"] = c.run.window;
  j["adaptive.window_min"] = c.run.window_min;
  j["adaptive.adapt_q"] = c.run.adapt_q;
  j["adaptive.adapt_r"] = c.run.adapt_r;
  j["adaptive.diag_only"] = c.run.adapt_q_diag_only;
  j["adaptive.r_floor"] = c.run.r_floor;
  j["blend.alpha"] = c.run.alpha_blend;
  j["blend.beta"] = c.run.beta_blend;
  j["train.lr"] = c.train.lr;
  j["train.batch"] = c.train.batch;
  j["train.epochs"] = c.train.epochs;
  j["train.stride"] = c.train_stride;
  j["train.val_fraction"] = c.val_fraction;
  j["net.activation"] = net::to_string(c.net_q.activation);
  j["net.q.input_norm"] = net::to_string(c.net_q.input_norm);
  j["net.r.input_norm"] = net::to_string(c.net_r.input_norm);
  j["net.q.input_scale"] = c.net_q.input_scale;
  j["net.q.output_scale"] = c.net_q.output_scale;
  j["net.r.input_scale"] = c.net_r.input_scale;
  j["net.r.output_scale"] = c.net_r.output_scale;
  return j;
}

}  // namespace anpmn::config
