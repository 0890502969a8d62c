// m2dan command-line driver.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "m2dan/m2dan.hpp"

namespace fs = std::filesystem;
using namespace m2dan;

namespace {

constexpr const char* kColumnsHelp = R"(Output columns:
  history.csv   epoch,l_fo,l_en,l_d, then acc_<domain>,auc_<domain> per domain (source first)
  ablate scales variant, acc_<target>,auc_<target> per target, mean_acc, mean_auc
  ablate losses backbone,ce,focal,domain,entropy (0/1), then the same metric columns
  sweep         <param>, auc_<target> per target, mean_auc
Train writes checkpoint.bin, history.csv, curves.svg, metrics.json and config.txt to out_dir.
M2DAN_THREADS sets the number of parallel runs in ablate and sweep (default 1).)";

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NumericFailure: return 3;
    case ErrorCode::ConfigError: return 1;
    default: return 2;
  }
}

ExperimentConfig config_with_overrides(const std::string& path, const std::vector<std::string>& overrides) {
  auto cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& kv : overrides) apply_override(cfg, kv);
  cfg.hp.validate();
  cfg.model_spec().validate();
  return cfg;
}

void print_counts(const Benchmark& b) {
  for (const auto& d : b.domains) {
    auto narrow = [](const std::vector<DomainSample>& v) {
      std::size_t n = 0;
      for (const auto& s : v) n += s.class_label == kNarrow;
      return n;
    };
    std::printf("%s: train %zu (narrow %zu) test %zu (narrow %zu)\n", d.name.c_str(), d.train.size(), narrow(d.train),
                d.test.size(), narrow(d.test));
  }
}

int cmd_gen_data(const std::string& out, std::uint64_t seed, double fraction, std::size_t image_size) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error(ErrorCode::ConfigError, "--scale-fraction must be in (0, 1]");
  // Target train labels are kept here so the narrow counts can be printed;
  // export writes unlabeled target train images either way.
  Benchmark b;
  b.image_size = image_size;
  const auto specs = benchmark_domain_specs(fraction);
  for (std::size_t d = 0; d < specs.size(); ++d) b.domains.push_back(gen_synthetic_domain(specs[d], image_size, seed, d));
  print_counts(b);
  strip_target_train_labels(b);
  export_benchmark(b, out);
  return 0;
}

int cmd_train(const std::string& config, const std::vector<std::string>& overrides) {
  const auto cfg = config_with_overrides(config, overrides);
  const auto data = cfg.load_data();
  auto result = run_training(cfg, data, [](const EpochRecord& r) {
    std::fprintf(stderr, "epoch %zu  l_fo %.5f  l_en %.5f  l_d %.5f", r.epoch, r.l_fo, r.l_en, r.l_d);
    for (const auto& m : r.metrics) std::fprintf(stderr, "  %s acc %.4f auc %.4f", m.name.c_str(), m.accuracy, m.auc);
    std::fprintf(stderr, "\n");
  });
  write_run_artifacts(cfg, result, cfg.out_dir);
  std::printf("%s\n", result.report.to_json().dump(2).c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir, std::optional<std::uint64_t> synthetic_seed,
             const std::string& config) {
  ExperimentConfig cfg;
  if (!config.empty()) cfg = load_config(config);
  else if (auto echo = fs::path(checkpoint).parent_path() / "config.txt"; fs::exists(echo)) cfg = load_config(echo);
  if (!data_dir.empty()) cfg.data_dir = data_dir;
  if (synthetic_seed) {
    cfg.data_dir.clear();
    cfg.synthetic_seed = *synthetic_seed;
  }
  if (!fs::exists(checkpoint)) throw Error(ErrorCode::IoError, "no such checkpoint " + checkpoint);
  auto state = load_checkpoint(checkpoint, cfg.model_spec());
  const auto data = cfg.load_data();
  std::printf("%s\n", evaluate(state.model, data).to_json().dump(2).c_str());
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& which, const std::string& out) {
  const auto cfg = config_with_overrides(config, {});
  const auto data = cfg.load_data();
  const auto csv = run_ablation(cfg, which, data, worker_threads());
  const fs::path path = out.empty() ? fs::path(cfg.out_dir) / ("ablation_" + which + ".csv") : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text(path, csv);
  std::printf("%s", csv.c_str());
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& param, const std::string& out) {
  const auto cfg = config_with_overrides(config, {});
  const auto data = cfg.load_data();
  const auto csv = run_sweep(cfg, param, data, worker_threads());
  const fs::path path = out.empty() ? fs::path(cfg.out_dir) / ("sweep_" + param + ".csv") : fs::path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_text(path, csv);
  std::printf("%s", csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Multi-scale multi-target domain adversarial network"};
  app.footer(kColumnsHelp);
  app.require_subcommand(1);

  std::string out, config, checkpoint, data_dir, which, param, history;
  std::uint64_t seed = 42;
  std::optional<std::uint64_t> synthetic_seed;
  double fraction = kDefaultScaleFraction;
  std::size_t image_size = 64;
  std::vector<std::string> overrides;

  auto* gen = app.add_subcommand("gen-data", "Export the synthetic benchmark as PGM directories");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--scale-fraction", fraction, "Fraction of the reference dataset size");
  gen->add_option("--image-size", image_size, "Image side length");

  auto* trn = app.add_subcommand("train", "Train one model and write its artifacts");
  trn->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
  trn->add_option("--override", overrides, "key=value, repeatable");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint; prints metrics JSON");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  auto* ev_data = ev->add_option("--data", data_dir, "Dataset directory");
  ev->add_option("--synthetic-seed", synthetic_seed, "Synthetic benchmark seed")->excludes(ev_data);
  ev->add_option("--config", config, "Config the checkpoint was trained with (default: config.txt beside it)");

  auto* abl = app.add_subcommand("ablate", "Scale or loss ablation");
  abl->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
  abl->add_option("--which", which, "scales|losses")->required()->check(CLI::IsMember({"scales", "losses"}));
  abl->add_option("--out", out, "CSV path (default: <out_dir>/ablation_<which>.csv)");

  auto* swp = app.add_subcommand("sweep", "Trade-off parameter sweep");
  swp->add_option("--config", config, "key = value config file")->check(CLI::ExistingFile);
  swp->add_option("--param", param, "alpha|eta|lambda")->required()->check(CLI::IsMember({"alpha", "eta", "lambda"}));
  swp->add_option("--out", out, "CSV path (default: <out_dir>/sweep_<param>.csv)");

  auto* plt = app.add_subcommand("plot", "Render a history CSV as SVG curves");
  plt->add_option("--history", history, "history.csv")->required();
  plt->add_option("--out", out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(out, seed, fraction, image_size);
    if (*trn) return cmd_train(config, overrides);
    if (*ev) return cmd_eval(checkpoint, data_dir, synthetic_seed, config);
    if (*abl) return cmd_ablate(config, which, out);
    if (*swp) return cmd_sweep(config, param, out);
    if (*plt) {
      plot_history_file(history, out);
      return 0;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "m2dan: %s\n", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "m2dan: %s\n", e.what());
    return 2;
  }
  return 1;
}
