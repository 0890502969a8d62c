#pragma once

// Experiment drivers behind the command line: a single training run with its
// artifacts, the scale and loss ablations, and the trade-off sweeps.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "m2dan/checkpoint.hpp"
#include "m2dan/config.hpp"
#include "m2dan/plot.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace m2dan {

// Training allocates and frees the same large activation buffers every step;
// keeping freed memory in the process avoids re-faulting those pages.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

struct RunResult {
  TrainState state;
  MetricsReport report;
  std::vector<std::string> domain_names;
};

inline std::vector<std::string> domain_names(const Benchmark& data) {
  std::vector<std::string> names;
  for (const auto& d : data.domains) names.push_back(d.name);
  return names;
}

inline RunResult run_training(const ExperimentConfig& cfg, const Benchmark& data,
                              std::function<void(const EpochRecord&)> on_epoch = {}) {
  if (data.image_size != cfg.image_size)
    throw Error(ErrorCode::ConfigError, "benchmark image size does not match the config");
  auto opt = cfg.train_options();
  opt.on_epoch = std::move(on_epoch);
  auto model = build_model(cfg.model_spec(), cfg.hp.seed);
  RunResult r{train(std::move(model), data, opt), {}, domain_names(data)};
  r.report = evaluate(r.state.model, data);
  return r;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// checkpoint.bin, history.csv, curves.svg, metrics.json, config.txt
inline void write_run_artifacts(const ExperimentConfig& cfg, const RunResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_checkpoint(r.state, dir / "checkpoint.bin");
  const auto csv = history_to_csv(r.state.history, r.domain_names);
  write_text(dir / "history.csv", csv);
  write_text(dir / "curves.svg", render_curves_svg(parse_history_csv(csv)));
  write_text(dir / "metrics.json", r.report.to_json().dump(2) + "\n");
  write_text(dir / "config.txt", cfg.to_text());
}

// ---------------------------------------------------------------------------
// Independent runs, optionally on worker threads. Results come back in input
// order whatever the thread count.

inline std::size_t worker_threads() {
  if (const char* env = std::getenv("M2DAN_THREADS")) {
    try {
      const auto n = detail::parse_u64("M2DAN_THREADS", env);
      return n == 0 ? 1 : n;
    } catch (const Error&) {
      throw Error(ErrorCode::ConfigError, "M2DAN_THREADS must be a positive integer");
    }
  }
  return 1;
}

inline std::vector<MetricsReport> run_many(const std::vector<ExperimentConfig>& cfgs, const Benchmark& data,
                                           std::size_t threads) {
  std::vector<MetricsReport> out(cfgs.size());
  std::vector<std::exception_ptr> errors(cfgs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < cfgs.size();) {
      try {
        out[i] = run_training(cfgs[i], data).report;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, cfgs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Ablations.

struct AblationRow {
  std::string variant;
  ExperimentConfig cfg;
};

inline std::vector<AblationRow> scale_ablation(const ExperimentConfig& base) {
  std::vector<AblationRow> rows;
  for (auto [name, scale] : {std::pair{"M2DAN-S1", "s1"}, {"M2DAN-S3", "s3"}, {"M2DAN-S5", "s5"}, {"M2DAN", "mixed"}}) {
    auto c = base;
    c.scale = scale;
    c.method = Method::M2dan;
    rows.push_back({name, c});
  }
  return rows;
}

// {ce}, {focal}, {focal + domain}, {focal + domain + entropy}
inline std::vector<AblationRow> loss_ablation(const ExperimentConfig& base) {
  std::vector<AblationRow> rows;
  const LossToggles combos[] = {
      {ClsLoss::CrossEntropy, false, false},
      {ClsLoss::Focal, false, false},
      {ClsLoss::Focal, true, false},
      {ClsLoss::Focal, true, true},
  };
  for (const auto& t : combos) {
    auto c = base;
    c.toggles = t;
    c.method = Method::M2dan;
    std::string name = t.cls == ClsLoss::Focal ? "focal" : "ce";
    if (t.domain) name += "+domain";
    if (t.entropy) name += "+entropy";
    rows.push_back({name, c});
  }
  return rows;
}

inline std::string target_metric_header(const std::vector<std::string>& targets, bool with_acc) {
  std::string h;
  for (const auto& t : targets) h += (with_acc ? ",acc_" + t : std::string()) + ",auc_" + t;
  return h + (with_acc ? ",mean_acc,mean_auc" : ",mean_auc");
}

inline std::string target_metric_cells(const MetricsReport& r, bool with_acc) {
  std::string s;
  for (const auto& m : r.domains) s += (with_acc ? "," + format_double(m.accuracy) : std::string()) + "," + format_double(m.auc);
  if (with_acc) s += "," + format_double(r.mean_acc);
  return s + "," + format_double(r.mean_auc);
}

inline std::vector<std::string> target_names(const Benchmark& data) {
  std::vector<std::string> t;
  for (std::size_t d = 1; d < data.domains.size(); ++d) t.push_back(data.domains[d].name);
  return t;
}

inline std::vector<AblationRow> ablation_rows(const ExperimentConfig& base, const std::string& which) {
  if (which == "scales") return scale_ablation(base);
  if (which == "losses") return loss_ablation(base);
  throw Error(ErrorCode::ConfigError, "--which must be scales|losses");
}

// scales: variant,acc_<t>,auc_<t>...,mean_acc,mean_auc
// losses: backbone,ce,focal,domain,entropy (0/1), then the same metric columns
inline std::string format_ablation(const std::string& which, const std::vector<AblationRow>& rows,
                                   const std::vector<MetricsReport>& reports, const std::vector<std::string>& targets) {
  std::ostringstream os;
  os << (which == "scales" ? "variant" : "backbone,ce,focal,domain,entropy") << target_metric_header(targets, true)
     << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (which == "scales") {
      os << rows[i].variant;
    } else {
      const auto& t = rows[i].cfg.toggles;
      os << 1 << ',' << (t.cls == ClsLoss::CrossEntropy) << ',' << (t.cls == ClsLoss::Focal) << ',' << t.domain << ','
         << t.entropy;
    }
    os << target_metric_cells(reports[i], true) << '\n';
  }
  return os.str();
}

inline std::string run_ablation(const ExperimentConfig& base, const std::string& which, const Benchmark& data,
                                std::size_t threads) {
  const auto rows = ablation_rows(base, which);
  std::vector<ExperimentConfig> cfgs;
  for (const auto& r : rows) cfgs.push_back(r.cfg);
  return format_ablation(which, rows, run_many(cfgs, data, threads), target_names(data));
}

// ---------------------------------------------------------------------------
// Sweeps.

inline std::vector<double> sweep_grid(const std::string& param) {
  if (param == "alpha") return {0.0003, 0.003, 0.03, 0.3};
  if (param == "eta" || param == "lambda") return {0.001, 0.01, 0.1, 1.0};
  throw Error(ErrorCode::ConfigError, "--param must be alpha|eta|lambda");
}

inline std::vector<ExperimentConfig> sweep_configs(const ExperimentConfig& base, const std::string& param) {
  std::vector<ExperimentConfig> cfgs;
  for (double v : sweep_grid(param)) {
    auto c = base;
    c.method = Method::M2dan;
    c.set(param, format_double(v));
    cfgs.push_back(c);
  }
  return cfgs;
}

// <param>,auc_<t>...,mean_auc
inline std::string format_sweep(const std::string& param, const std::vector<MetricsReport>& reports,
                                const std::vector<std::string>& targets) {
  const auto grid = sweep_grid(param);
  std::ostringstream os;
  os << param << target_metric_header(targets, false) << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) os << format_double(grid[i]) << target_metric_cells(reports[i], false) << '\n';
  return os.str();
}

inline std::string run_sweep(const ExperimentConfig& base, const std::string& param, const Benchmark& data,
                             std::size_t threads) {
  return format_sweep(param, run_many(sweep_configs(base, param), data, threads), target_names(data));
}

}  // namespace m2dan
