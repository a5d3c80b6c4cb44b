// anpmn: dataset generation, network training, filter evaluation,
// benchmarking and plot-data export.
#include "anpmn/config.hpp"
#include "anpmn/dataset.hpp"
#include "anpmn/log.hpp"
#include "anpmn/noise_net.hpp"
#include "anpmn/pipeline.hpp"
#include "manifest.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace anpmn;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON configuration file (dotted keys)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Master seed (overrides the config)");
  app->add_option("--out", c.out, "Output directory")->required();
}

config::AppConfig load_config(const Common& c) {
  config::AppConfig cfg = c.config_path.empty() ? config::from_json(json::object()) : config::load(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  cfg.train.seed = cfg.seed;
  return cfg;
}

tools::Manifest base_manifest(const std::string& command, const Common& c, const config::AppConfig& cfg,
                              const std::vector<std::string>& argv) {
  tools::Manifest m;
  m.command = command;
  m.config_path = c.config_path;
  m.config = config::to_json(cfg);
  m.seed = cfg.seed;
  m.argv = argv;
  if (!c.config_path.empty()) m.inputs.push_back(c.config_path);
  return m;
}

std::string out_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, const std::vector<std::string>& argv) {
  const auto cfg = load_config(c);
  const auto grid = sim::make_noise_grid(cfg.grid);
  const auto specs = cfg.trajectory_specs();
  log::info("generating ", specs.size(), " trajectories x ", grid.size(), " levels");
  const sim::Dataset d = sim::build_dataset(specs, grid, cfg.seed);
  auto m = base_manifest("gen-data", c, cfg, argv);
  m.outputs = sim::write_dataset(d, c.out);
  json traj = json::array();
  for (const auto& s : specs) traj.push_back({{"kind", sim::to_string(s.kind)}, {"duration", s.duration}, {"speed", s.speed}});
  m.extra["trajectories"] = traj;
  tools::write_manifest(m, c.out);
  std::cout << "wrote " << d.streams.size() << " streams to " << c.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string which = "sigma_q";
};

int cmd_train(const Common& c, const TrainArgs& a, const std::vector<std::string>& argv) {
  const auto cfg = load_config(c);
  const bool is_q = a.which == "sigma_q";
  const sim::Dataset d = sim::read_dataset(a.data);
  const auto split = sim::split_windows(d, static_cast<std::size_t>((is_q ? cfg.net_q : cfg.net_r).window_len),
                                        cfg.train_stride, cfg.val_fraction);
  const auto kind = is_q ? sim::WindowKind::kImu : sim::WindowKind::kPosition;
  const auto len = static_cast<std::size_t>((is_q ? cfg.net_q : cfg.net_r).window_len);
  const auto train_set = sim::make_windows(d, split.train, kind, len);
  const auto val_set = sim::make_windows(d, split.val, kind, len);
  log::info("training ", a.which, " on ", train_set.size(), " windows, validating on ", val_set.size());

  fs::create_directories(c.out);
  const std::string loss_path = out_path(c.out, "train_log.csv");
  std::ofstream loss(loss_path, std::ios::trunc);
  loss << "epoch,train_loss,val_loss\n";
  const auto on_epoch = [&](int epoch, double tr, double va) {
    loss << epoch << ',' << sim::format_double(tr) << ',' << sim::format_double(va) << '\n';
    log::info("epoch ", epoch, " train ", tr, " val ", va);
  };
  const net::TrainResult res = net::train(train_set, val_set, cfg.train, is_q ? cfg.net_q : cfg.net_r, on_epoch);
  loss.close();

  const std::string weights = out_path(c.out, a.which + ".anpm");
  net::save_params(res.params, weights);

  std::vector<double> rel;
  for (const auto& w : val_set) {
    const Eigen::VectorXd y = net::forward(res.params, w.x);
    rel.push_back(((y - w.y).array().abs() / w.y.array()).mean());
  }
  json metrics = {{"which", a.which},
                  {"best_epoch", res.best_epoch},
                  {"train_windows", train_set.size()},
                  {"val_windows", val_set.size()},
                  {"best_val_loss", res.val_loss.empty() ? 0.0 : res.val_loss[static_cast<std::size_t>(res.best_epoch)]}};
  if (!rel.empty()) {
    std::sort(rel.begin(), rel.end());
    metrics["val_rel_error_median"] = rel[rel.size() / 2];
    metrics["val_frac_below_20pct"] =
        static_cast<double>(std::lower_bound(rel.begin(), rel.end(), 0.2) - rel.begin()) / static_cast<double>(rel.size());
  }
  const std::string metrics_path = out_path(c.out, "metrics.json");
  write_json(metrics, metrics_path);

  auto m = base_manifest("train", c, cfg, argv);
  m.inputs.push_back(out_path(a.data, "labels.csv"));
  m.inputs.push_back(out_path(a.data, "dataset.json"));
  for (const auto& l : d.labels) m.inputs.push_back(out_path(a.data, sim::stream_file_name(l)));
  m.outputs = {weights, loss_path, metrics_path};
  tools::write_manifest(m, c.out);
  std::cout << "wrote " << weights << " (best epoch " << res.best_epoch << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct NetArgs {
  std::string weights_q;
  std::string weights_r;
};

pipeline::Nets load_nets(const NetArgs& n, const std::vector<pipeline::FilterVariant>& variants) {
  pipeline::Nets nets;
  bool want_q = false;
  bool want_r = false;
  for (auto v : variants) {
    want_q = want_q || pipeline::needs_sigma_q(v);
    want_r = want_r || pipeline::needs_sigma_r(v);
  }
  if (want_q && n.weights_q.empty()) throw std::runtime_error("this variant needs sigma-Q weights: pass --weights-q");
  if (want_r && n.weights_r.empty()) throw std::runtime_error("this variant needs sigma-R weights: pass --weights-r");
  if (!n.weights_q.empty()) nets.sigma_q = std::make_shared<net::NetParams>(net::load_params(n.weights_q));
  if (!n.weights_r.empty()) nets.sigma_r = std::make_shared<net::NetParams>(net::load_params(n.weights_r));
  return nets;
}

sim::TrajectoryLog load_stream(const std::string& path, const config::AppConfig& cfg) {
  const auto origin = sim::lookup_origin(path).value_or(cfg.origin());
  return sim::read_log_file(path, origin);
}

struct EvalArgs {
  std::string stream;
  std::string variant = "ANPMN-UKF";
};

int cmd_eval(const Common& c, const EvalArgs& a, const NetArgs& n, const std::vector<std::string>& argv) {
  const auto cfg = load_config(c);
  const auto variant = pipeline::variant_from_string(a.variant);
  const auto nets = load_nets(n, {variant});
  const auto log = load_stream(a.stream, cfg);
  const pipeline::RunResult r = pipeline::run_filter(log, variant, cfg.run, nets);

  fs::create_directories(c.out);
  const std::string epochs = out_path(c.out, "epochs.csv");
  pipeline::write_epoch_csv(r, log, epochs);

  const std::string fixes = out_path(c.out, "fixes.csv");
  {
    std::ofstream f(fixes, std::ios::trunc);
    f << "t,nu_n,nu_e,nu_d,trace_p,sigma_r_n,sigma_r_e,sigma_r_d\n";
    for (std::size_t k = 0; k < r.fix_t.size(); ++k) {
      f << sim::format_double(r.fix_t[k]);
      for (int i = 0; i < 3; ++i) f << ',' << sim::format_double(r.innovations[k][i]);
      f << ',' << sim::format_double(r.trace_p[k]);
      for (int i = 0; i < 3; ++i) f << ',' << sim::format_double(r.sigma_r[k][i]);
      f << '\n';
    }
    if (!f) throw std::runtime_error("failed writing '" + fixes + "'");
  }

  const std::string result = out_path(c.out, "result.json");
  write_json({{"variant", pipeline::to_string(variant)},
              {"stream", a.stream},
              {"prmse_m", r.prmse_m},
              {"epochs", r.est_ned.size()},
              {"fixes", r.fix_t.size()},
              {"gaps", r.gaps},
              {"degenerate_updates", r.degenerate_updates}},
             result);
  // Wall-clock time is kept apart so the other outputs stay reproducible.
  const std::string timing = out_path(c.out, "timing.json");
  write_json({{"runtime_s", r.runtime_s}}, timing);

  auto m = base_manifest("eval", c, cfg, argv);
  m.inputs.push_back(a.stream);
  if (!n.weights_q.empty()) m.inputs.push_back(n.weights_q);
  if (!n.weights_r.empty()) m.inputs.push_back(n.weights_r);
  m.outputs = {epochs, fixes, result};
  m.extra["nondeterministic_outputs"] = json::array({timing});
  tools::write_manifest(m, c.out);
  std::cout << pipeline::to_string(variant) << " PRMSE " << r.prmse_m << " m, runtime " << r.runtime_s << " s\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string data;
  std::vector<std::string> variants;
  int jobs = 1;
};

int cmd_bench(const Common& c, const BenchArgs& a, const NetArgs& n, const std::vector<std::string>& argv) {
  const auto cfg = load_config(c);
  std::vector<pipeline::FilterVariant> variants;
  if (a.variants.empty()) {
    variants = pipeline::all_variants();
  } else {
    for (const auto& s : a.variants) variants.push_back(pipeline::variant_from_string(s));
  }
  const auto nets = load_nets(n, variants);

  std::vector<pipeline::BenchInput> inputs;
  std::vector<std::string> input_files;
  const std::string dataset_name = fs::path(a.data).lexically_normal().filename().string();
  if (fs::is_directory(a.data)) {
    const sim::Dataset d = sim::read_dataset(a.data);
    for (std::size_t i = 0; i < d.streams.size(); ++i) {
      const std::string name = sim::stream_file_name(d.labels[i]);
      inputs.push_back({dataset_name, name, std::make_shared<sim::TrajectoryLog>(d.streams[i])});
      input_files.push_back(out_path(a.data, name));
    }
  } else {
    inputs.push_back({dataset_name, fs::path(a.data).filename().string(),
                      std::make_shared<sim::TrajectoryLog>(load_stream(a.data, cfg))});
    input_files.push_back(a.data);
  }

  const auto rep = pipeline::benchmark(inputs, variants, cfg.run, nets, a.jobs);
  fs::create_directories(c.out);
  const std::string results = out_path(c.out, "results.csv");
  const std::string summary = out_path(c.out, "summary.csv");
  pipeline::write_results_csv(rep.rows, results);
  pipeline::write_summary_csv(rep, summary);

  auto m = base_manifest("bench", c, cfg, argv);
  m.inputs.insert(m.inputs.end(), input_files.begin(), input_files.end());
  if (!n.weights_q.empty()) m.inputs.push_back(n.weights_q);
  if (!n.weights_r.empty()) m.inputs.push_back(n.weights_r);
  m.outputs = {results, summary};
  m.extra["jobs"] = a.jobs;
  tools::write_manifest(m, c.out);

  int failures = 0;
  for (const auto& s : rep.summary) {
    std::cout << pipeline::to_string(s.variant) << ": mean PRMSE " << s.mean_prmse << " m over " << s.runs
              << " runs, runtime mean " << s.runtime_mean << " s\n";
    failures += static_cast<int>(s.failures);
  }
  for (const auto& [v, pct] : rep.improvement) {
    std::cout << "ANPMN-UKF improvement over " << pipeline::to_string(v) << ": " << pct << " %\n";
  }
  for (const auto& r : rep.rows) {
    if (!r.error.empty()) std::cerr << r.traj << " / " << pipeline::to_string(r.variant) << ": " << r.error << '\n';
  }
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct ExportArgs {
  std::vector<std::string> eval_dirs;
  std::vector<std::string> bench_files;
};

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != header) throw std::runtime_error(path + ": unexpected header");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    rows.push_back(std::move(f));
  }
  return rows;
}

int cmd_export_plot(const Common& c, const ExportArgs& a, const std::vector<std::string>& argv) {
  if (a.eval_dirs.empty() && a.bench_files.empty()) throw std::runtime_error("nothing to export: pass --eval and/or --bench");
  const auto cfg = load_config(c);
  fs::create_directories(c.out);
  auto m = base_manifest("export-plot", c, cfg, argv);

  if (!a.eval_dirs.empty()) {
    const std::string traj_path = out_path(c.out, "trajectory.csv");
    const std::string err_path = out_path(c.out, "error.csv");
    std::ofstream traj(traj_path, std::ios::trunc);
    std::ofstream err(err_path, std::ios::trunc);
    traj << "run,source,t,n,e,d\n";
    err << "run,variant,t,err_m\n";
    for (const auto& dir : a.eval_dirs) {
      const std::string result_path = out_path(dir, "result.json");
      std::ifstream rin(result_path);
      if (!rin) throw std::runtime_error("missing '" + result_path + "'");
      const json result = json::parse(rin);
      const std::string variant = result.at("variant").get<std::string>();
      const std::string run = fs::path(dir).lexically_normal().filename().string();
      const std::string epochs = out_path(dir, "epochs.csv");
      const auto rows = read_csv_rows(epochs, "t,est_n,est_e,est_d,gt_n,gt_e,gt_d,err_m");
      for (const auto& r : rows) {
        if (r.size() != 8) throw std::runtime_error(epochs + ": malformed row");
        traj << run << ',' << variant << ',' << r[0] << ',' << r[1] << ',' << r[2] << ',' << r[3] << '\n';
        traj << run << ",reference," << r[0] << ',' << r[4] << ',' << r[5] << ',' << r[6] << '\n';
        err << run << ',' << variant << ',' << r[0] << ',' << r[7] << '\n';
      }
      m.inputs.push_back(result_path);
      m.inputs.push_back(epochs);
    }
    traj.close();
    err.close();
    m.outputs.push_back(traj_path);
    m.outputs.push_back(err_path);
  }

  if (!a.bench_files.empty()) {
    std::map<std::string, std::vector<double>> runtimes;
    std::map<std::string, std::vector<double>> errors;
    for (const auto& path : a.bench_files) {
      for (const auto& r : read_csv_rows(path, "dataset,traj,variant,prmse_m,runtime_s")) {
        if (r.size() != 5) throw std::runtime_error(path + ": malformed row");
        runtimes[r[2]].push_back(std::stod(r[4]));
        errors[r[2]].push_back(std::stod(r[3]));
      }
      m.inputs.push_back(path);
    }
    const std::string box_path = out_path(c.out, "runtime_box.csv");
    std::ofstream box(box_path, std::ios::trunc);
    box << "variant,runs,runtime_mean_s,runtime_min_s,runtime_max_s,prmse_mean_m\n";
    for (const auto& [v, rt] : runtimes) {
      double sum = 0.0;
      for (double x : rt) sum += x;
      double esum = 0.0;
      for (double x : errors[v]) esum += x;
      box << v << ',' << rt.size() << ',' << sim::format_double(sum / static_cast<double>(rt.size())) << ','
          << sim::format_double(*std::min_element(rt.begin(), rt.end())) << ','
          << sim::format_double(*std::max_element(rt.begin(), rt.end())) << ','
          << sim::format_double(esum / static_cast<double>(rt.size())) << '\n';
    }
    box.close();
    m.outputs.push_back(box_path);
  }
  tools::write_manifest(m, c.out);
  std::cout << "wrote plot data to " << c.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural-assisted adaptive UKF for INS/GNSS: simulate, train, evaluate, benchmark"};
  app.require_subcommand(1);
  const std::vector<std::string> args(argv, argv + argc);

  Common common;
  TrainArgs train_args;
  EvalArgs eval_args;
  BenchArgs bench_args;
  NetArgs net_args;
  ExportArgs export_args;

  auto* gen = app.add_subcommand("gen-data", "Generate the labeled simulated dataset");
  add_common(gen, common);

  auto* tr = app.add_subcommand("train", "Train the sigma-Q or sigma-R network on a dataset");
  add_common(tr, common);
  tr->add_option("--data", train_args.data, "Dataset directory from gen-data")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--which", train_args.which, "Network to train")->check(CLI::IsMember({"sigma_q", "sigma_r"}));

  auto* ev = app.add_subcommand("eval", "Run one filter variant on a trajectory log");
  add_common(ev, common);
  ev->add_option("--stream", eval_args.stream, "Trajectory-log CSV")->required()->check(CLI::ExistingFile);
  ev->add_option("--variant", eval_args.variant, "UKF | MB-AUKF | ANPN-UKF | ANPMN-UKF");
  ev->add_option("--weights-q", net_args.weights_q, "sigma-Q network weights")->check(CLI::ExistingFile);
  ev->add_option("--weights-r", net_args.weights_r, "sigma-R network weights")->check(CLI::ExistingFile);

  auto* be = app.add_subcommand("bench", "Compare filter variants over a dataset directory or one log");
  add_common(be, common);
  be->add_option("--data", bench_args.data, "Dataset directory or trajectory-log CSV")->required()->check(CLI::ExistingPath);
  be->add_option("--variant", bench_args.variants, "Variants to run (default: all four)");
  be->add_option("--jobs", bench_args.jobs, "Parallel runs")->check(CLI::PositiveNumber);
  be->add_option("--weights-q", net_args.weights_q, "sigma-Q network weights")->check(CLI::ExistingFile);
  be->add_option("--weights-r", net_args.weights_r, "sigma-R network weights")->check(CLI::ExistingFile);

  auto* ex = app.add_subcommand("export-plot", "Tidy CSVs for trajectory overlays and runtime boxes");
  add_common(ex, common);
  ex->add_option("--eval", export_args.eval_dirs, "eval output directories")->check(CLI::ExistingDirectory);
  ex->add_option("--bench", export_args.bench_files, "bench results.csv files")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(common, args);
    if (tr->parsed()) return cmd_train(common, train_args, args);
    if (ev->parsed()) return cmd_eval(common, eval_args, net_args, args);
    if (be->parsed()) return cmd_bench(common, bench_args, net_args, args);
    if (ex->parsed()) return cmd_export_plot(common, export_args, args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
