#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "m2dan/experiment.hpp"

using namespace m2dan;
namespace fs = std::filesystem;

namespace {

template <class F>
void expect_code(ErrorCode code, F&& f) {
  try {
    f();
    ADD_FAILURE() << "expected " << to_string(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("m2dan_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Tag-balance check: every element closes in order, attributes are quoted.
bool well_formed_xml(const std::string& s, std::size_t* elements = nullptr) {
  std::vector<std::string> stack;
  std::size_t count = 0, i = 0;
  while ((i = s.find('<', i)) != std::string::npos) {
    const auto close = s.find('>', i);
    if (close == std::string::npos) return false;
    std::string tag = s.substr(i + 1, close - i - 1);
    i = close + 1;
    if (tag.starts_with("?") || tag.starts_with("!--")) continue;
    if (tag.starts_with("/")) {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    static const std::regex attrs(R"(^[A-Za-z][\w:-]*(\s+[\w:-]+="[^"<]*")*\s*/?$)");
    if (!std::regex_match(tag, attrs)) return false;
    ++count;
    if (tag.ends_with("/")) continue;
    stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
  }
  if (elements) *elements = count;
  return stack.empty();
}

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::size_t fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

const char* kTiny[] = {"image_size=8",      "scale_fraction=0.01", "extractor_channels=2,2", "branch_channels=3",
                       "head_hidden=4,4",   "epochs=1",            "lr=0.01"};

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  for (const char* kv : kTiny) apply_override(c, kv);
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsMatchPaperSettings) {
  ExperimentConfig c;
  EXPECT_EQ(c.hp.lambda, 1.0);
  EXPECT_EQ(c.hp.eta, 0.1);
  EXPECT_EQ(c.hp.alpha, 0.03);
  EXPECT_EQ(c.hp.gamma, 2.0);
  EXPECT_EQ(c.hp.lr, 0.001);
  EXPECT_EQ(c.hp.epochs, 30u);
  EXPECT_EQ(c.hp.batch_size, 12u);
  EXPECT_EQ(c.hp.seed, 42u);
  EXPECT_EQ(c.scale, "mixed");
  EXPECT_EQ(c.image_size, 64u);
  EXPECT_EQ(c.synthetic_seed, 42u);
  EXPECT_EQ(c.toggles, (LossToggles{ClsLoss::Focal, true, true}));
  EXPECT_EQ(c.method, Method::M2dan);
  EXPECT_EQ(c.model_spec(), ModelSpec{});
}

TEST(Config, ParseOverrideAndRoundTrip) {
  auto c = parse_config(
      "# comment\n"
      "alpha = 0.3\n"
      "\n"
      "  scale=s5  \n"
      "entropy_loss = off\n"
      "cls_loss = ce\n"
      "method = source_only\n"
      "extractor_channels = 4, 8\n"
      "grl_mode = ramp\n"
      "grl_ramp_length = 100\n"
      "data_dir = /tmp/some dir\n"
      "half = both\n");
  EXPECT_EQ(c.hp.alpha, 0.3);
  EXPECT_EQ(c.scale, "s5");
  EXPECT_FALSE(c.toggles.entropy);
  EXPECT_EQ(c.toggles.cls, ClsLoss::CrossEntropy);
  EXPECT_EQ(c.method, Method::SourceOnly);
  EXPECT_EQ(c.extractor_channels, (std::vector<std::size_t>{4, 8}));
  EXPECT_EQ(c.hp.grl.mode, GrlCoeff::Mode::Ramp);
  EXPECT_EQ(c.data_dir, "/tmp/some dir");
  apply_override(c, "alpha=0");
  EXPECT_EQ(c.hp.alpha, 0.0);
  apply_override(c, "lr = 1e-2");
  EXPECT_EQ(c.hp.lr, 0.01);
  // the echo reproduces the config exactly
  auto back = parse_config(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.hp.lr, c.hp.lr);
  EXPECT_EQ(back.hp.grl.ramp_length, 100u);
  ExperimentConfig odd;
  odd.hp.alpha = 0.1 + 0.2;
  EXPECT_EQ(parse_config(odd.to_text()).hp.alpha, odd.hp.alpha);
}

TEST(Config, ErrorsNameTheLine) {
  try {
    parse_config("alpha = 1\nbogus = 3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  expect_code(ErrorCode::ConfigError, [] { parse_config("alpha 1\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config("alpha = abc\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config("epochs = -1\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config("epochs = 0\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config("scale = s7\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config("domain_loss = maybe\n"); });
  expect_code(ErrorCode::ConfigError, [] { parse_config("half = top\n"); });
  ExperimentConfig c;
  expect_code(ErrorCode::ConfigError, [&] { apply_override(c, "alpha"); });
  expect_code(ErrorCode::ConfigError, [&] { apply_override(c, "nope=1"); });
  expect_code(ErrorCode::IoError, [] { load_config("/nonexistent/m2dan.cfg"); });
}

// ---------------------------------------------------------------------------
// Plot

TEST(Plot, CurveCountFollowsHeader) {
  const std::string csv =
      "epoch,l_fo,l_en,l_d,acc_source,auc_source,acc_t1,auc_t1,acc_t2,auc_t2\n"
      "1,0.5,0.6,1.1,0.7,0.8,0.6,0.7,0.5,0.6\n"
      "2,0.4,0.5,1.0,0.8,0.9,0.7,0.8,0.6,0.7\n";
  const auto svg = render_curves_svg(parse_history_csv(csv));
  std::size_t elements = 0;
  EXPECT_TRUE(well_formed_xml(svg, &elements));
  EXPECT_GT(elements, 10u);
  const auto header = lines(csv)[0];
  std::size_t auc_cols = 0;
  for (std::size_t p = 0; (p = header.find("auc_", p)) != std::string::npos; ++p) ++auc_cols;
  EXPECT_EQ(count_of(svg, "class=\"series\""), 3 + auc_cols);
  for (const char* name : {"l_fo", "l_en", "l_d", "source", "t1", "t2"})
    EXPECT_NE(svg.find("data-name=\"" + std::string(name) + "\""), std::string::npos) << name;
  EXPECT_NE(svg.find("epoch"), std::string::npos);
  EXPECT_EQ(svg, render_curves_svg(parse_history_csv(csv)));
  // a single epoch still draws
  EXPECT_TRUE(well_formed_xml(render_curves_svg(parse_history_csv("epoch,l_fo,l_en,l_d\n1,0,0,0\n"))));
}

TEST(Plot, MalformedHistory) {
  for (const char* bad : {"", "epoch,l_fo,l_en,l_d\n", "epoch,l_fo,l_en\n1,2,3\n", "epoch,l_fo,l_en,l_d\n1,2,3\n",
                          "epoch,l_fo,l_en,l_d\n1,2,x,4\n"})
    expect_code(ErrorCode::MalformedCsv, [&] { parse_history_csv(bad); });
}

// ---------------------------------------------------------------------------
// Ablation and sweep structure

TEST(Sweep, GridsMatchTheReportedValues) {
  EXPECT_EQ(sweep_grid("alpha"), (std::vector<double>{3e-4, 3e-3, 3e-2, 3e-1}));
  EXPECT_EQ(sweep_grid("eta"), (std::vector<double>{1e-3, 1e-2, 1e-1, 1.0}));
  EXPECT_EQ(sweep_grid("lambda"), (std::vector<double>{1e-3, 1e-2, 1e-1, 1.0}));
  expect_code(ErrorCode::ConfigError, [] { sweep_grid("gamma"); });
  auto cfgs = sweep_configs(ExperimentConfig{}, "alpha");
  ASSERT_EQ(cfgs.size(), 4u);
  EXPECT_EQ(cfgs[0].hp.alpha, 3e-4);
  EXPECT_EQ(cfgs[3].hp.alpha, 0.3);
  EXPECT_EQ(sweep_configs(ExperimentConfig{}, "lambda")[1].hp.lambda, 0.01);
  EXPECT_EQ(sweep_configs(ExperimentConfig{}, "eta")[3].hp.eta, 1.0);
}

TEST(Ablation, RowsMirrorTheTables) {
  auto scales = ablation_rows(ExperimentConfig{}, "scales");
  ASSERT_EQ(scales.size(), 4u);
  const char* names[] = {"M2DAN-S1", "M2DAN-S3", "M2DAN-S5", "M2DAN"};
  const char* variants[] = {"s1", "s3", "s5", "mixed"};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(scales[i].variant, names[i]);
    EXPECT_EQ(scales[i].cfg.scale, variants[i]);
  }
  auto losses = ablation_rows(ExperimentConfig{}, "losses");
  ASSERT_EQ(losses.size(), 4u);
  EXPECT_EQ(losses[0].cfg.toggles, (LossToggles{ClsLoss::CrossEntropy, false, false}));
  EXPECT_EQ(losses[1].cfg.toggles, (LossToggles{ClsLoss::Focal, false, false}));
  EXPECT_EQ(losses[2].cfg.toggles, (LossToggles{ClsLoss::Focal, true, false}));
  EXPECT_EQ(losses[3].cfg.toggles, (LossToggles{ClsLoss::Focal, true, true}));
  expect_code(ErrorCode::ConfigError, [] { ablation_rows(ExperimentConfig{}, "heads"); });

  std::vector<MetricsReport> fake(4, summarize({{"t1", 1, 0.5, 0.25}, {"t2", 1, 1.0, 0.75}}));
  auto csv = lines(format_ablation("losses", losses, fake, {"t1", "t2"}));
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_EQ(csv[0], "backbone,ce,focal,domain,entropy,acc_t1,auc_t1,acc_t2,auc_t2,mean_acc,mean_auc");
  EXPECT_EQ(csv[1], "1,1,0,0,0,0.5,0.25,1,0.75,0.75,0.5");
  EXPECT_EQ(csv[4].substr(0, 9), "1,0,1,1,1");
  auto sc = lines(format_ablation("scales", scales, fake, {"t1", "t2"}));
  EXPECT_EQ(sc[0], "variant,acc_t1,auc_t1,acc_t2,auc_t2,mean_acc,mean_auc");
  EXPECT_EQ(sc[1].substr(0, 9), "M2DAN-S1,");
  auto sw = lines(format_sweep("eta", fake, {"t1", "t2"}));
  EXPECT_EQ(sw[0], "eta,auc_t1,auc_t2,mean_auc");
  EXPECT_EQ(sw[1], "0.001,0.25,0.75,0.5");
}

TEST(Ablation, TinyRunsAreDeterministicAcrossThreadCounts) {
  const auto cfg = tiny_config();
  const auto data = cfg.load_data();
  const auto one = run_ablation(cfg, "losses", data, 1);
  EXPECT_EQ(one, run_ablation(cfg, "losses", data, 1));
  EXPECT_EQ(one, run_ablation(cfg, "losses", data, 3));
  auto rows = lines(one);
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) EXPECT_EQ(fields(r), 11u);
  auto sw = lines(run_sweep(cfg, "alpha", data, 2));
  ASSERT_EQ(sw.size(), 5u);
  for (const auto& r : sw) EXPECT_EQ(fields(r), 4u);
}

// ---------------------------------------------------------------------------
// The command-line binary

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string("M2DAN_THREADS=1 ") + M2DAN_CLI + " " + args + " >" + out.string() + " 2>" +
                          err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::string tiny_overrides() {
  std::string s;
  for (const char* kv : kTiny) s += std::string(" --override ") + kv;
  return s;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

}  // namespace

TEST(Cli, HelpDocumentsColumnsAndUsageErrors) {
  TempDir tmp;
  auto help = run_cli("--help", tmp.path);
  EXPECT_EQ(help.code, 0);
  for (const char* word : {"gen-data", "train", "eval", "ablate", "sweep", "plot", "mean_auc", "M2DAN_THREADS"})
    EXPECT_NE(help.out.find(word), std::string::npos) << word;
  EXPECT_EQ(run_cli("", tmp.path).code, 1);
  EXPECT_EQ(run_cli("frobnicate", tmp.path).code, 1);
  EXPECT_EQ(run_cli("ablate --which heads", tmp.path).code, 1);
  auto bad = run_cli("train --override bogus=1", tmp.path);
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("bogus"), std::string::npos);
  EXPECT_EQ(std::count(bad.err.begin(), bad.err.end(), '\n'), 1);
}

TEST(Cli, GenDataIsReproducible) {
  TempDir tmp;
  auto a = run_cli("gen-data --out " + (tmp.path / "a").string() + " --seed 7 --scale-fraction 0.01 --image-size 8",
                   tmp.path);
  ASSERT_EQ(a.code, 0) << a.err;
  auto b = run_cli("gen-data --out " + (tmp.path / "b").string() + " --seed 7 --scale-fraction 0.01 --image-size 8",
                   tmp.path);
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(tree(tmp.path / "a"), tree(tmp.path / "b"));
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(tmp.path / "a")) dirs += e.is_directory();
  EXPECT_EQ(dirs, 3u);
  // printed counts agree with the in-process benchmark
  const auto ref = default_benchmark(7, 8, 0.01);
  for (const auto& d : ref.domains) {
    std::size_t narrow = 0;
    for (const auto& s : d.test) narrow += s.class_label == kNarrow;
    const auto needle = d.name + ": train " + std::to_string(d.train.size());
    EXPECT_NE(a.out.find(needle), std::string::npos) << needle;
    EXPECT_NE(a.out.find("test " + std::to_string(d.test.size()) + " (narrow " + std::to_string(narrow) + ")"),
              std::string::npos);
  }
  EXPECT_TRUE(fs::is_directory(tmp.path / "a/target1/train/unlabeled"));
  EXPECT_FALSE(fs::exists(tmp.path / "a/target1/train/narrow"));
}

TEST(Cli, TrainEvalPlotRoundTrip) {
  TempDir tmp;
  const auto out = tmp.path / "run";
  auto tr = run_cli("train" + tiny_overrides() + " --override out_dir=" + out.string(), tmp.path);
  ASSERT_EQ(tr.code, 0) << tr.err;
  for (const char* f : {"checkpoint.bin", "history.csv", "curves.svg", "metrics.json", "config.txt"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  auto metrics = nlohmann::json::parse(slurp(out / "metrics.json"));
  ASSERT_EQ(metrics["domains"].size(), 2u);
  EXPECT_EQ(metrics["domains"][0]["name"], "target1");
  EXPECT_TRUE(metrics["mean_acc"].is_number());
  EXPECT_TRUE(well_formed_xml(slurp(out / "curves.svg")));
  EXPECT_EQ(nlohmann::json::parse(tr.out), metrics);

  // eval picks up config.txt next to the checkpoint and reproduces the metrics exactly
  auto ev = run_cli("eval --checkpoint " + (out / "checkpoint.bin").string(), tmp.path);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out, slurp(out / "metrics.json"));

  // the echoed config reproduces the run byte for byte
  auto again = run_cli("train --config " + (out / "config.txt").string() + " --override out_dir=" +
                           (tmp.path / "again").string(),
                       tmp.path);
  ASSERT_EQ(again.code, 0) << again.err;
  for (const char* f : {"checkpoint.bin", "history.csv", "curves.svg", "metrics.json"})
    EXPECT_EQ(slurp(out / f), slurp(tmp.path / "again" / f)) << f;

  auto pl = run_cli("plot --history " + (out / "history.csv").string() + " --out " + (tmp.path / "c.svg").string(),
                    tmp.path);
  ASSERT_EQ(pl.code, 0) << pl.err;
  EXPECT_EQ(slurp(tmp.path / "c.svg"), slurp(out / "curves.svg"));

  EXPECT_NE(run_cli("eval --checkpoint " + (tmp.path / "missing.bin").string(), tmp.path).code, 0);
  std::ofstream(tmp.path / "empty.csv") << "";
  EXPECT_EQ(run_cli("plot --history " + (tmp.path / "empty.csv").string() + " --out " + (tmp.path / "x.svg").string(),
                    tmp.path)
                .code,
            2);
  // a checkpoint evaluated against a different architecture
  std::ofstream(tmp.path / "other.txt") << "head_hidden = 5,4\nimage_size = 8\nscale_fraction = 0.01\n"
                                        << "extractor_channels = 2,2\nbranch_channels = 3\n";
  auto mismatch = run_cli("eval --checkpoint " + (out / "checkpoint.bin").string() + " --config " +
                              (tmp.path / "other.txt").string(),
                          tmp.path);
  EXPECT_EQ(mismatch.code, 2);
}

TEST(Cli, EvalOnExportedDataMatchesSynthetic) {
  TempDir tmp;
  const auto out = tmp.path / "run";
  ASSERT_EQ(run_cli("train" + tiny_overrides() + " --override out_dir=" + out.string(), tmp.path).code, 0);
  ASSERT_EQ(run_cli("gen-data --out " + (tmp.path / "data").string() + " --seed 42 --scale-fraction 0.01 --image-size 8",
                    tmp.path)
                .code,
            0);
  auto ev = run_cli("eval --checkpoint " + (out / "checkpoint.bin").string() + " --data " + (tmp.path / "data").string(),
                    tmp.path);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out, slurp(out / "metrics.json"));
  auto seeded = run_cli("eval --checkpoint " + (out / "checkpoint.bin").string() + " --synthetic-seed 42", tmp.path);
  EXPECT_EQ(seeded.out, slurp(out / "metrics.json"));
  // a corrupt image in the dataset is a data error
  std::vector<fs::path> open_imgs;
  for (const auto& e : fs::directory_iterator(tmp.path / "data/source/test/open")) open_imgs.push_back(e.path());
  ASSERT_FALSE(open_imgs.empty());
  std::ofstream(open_imgs.front(), std::ios::binary) << "P2\n1 1\n255\n0\n";
  EXPECT_EQ(run_cli("eval --checkpoint " + (out / "checkpoint.bin").string() + " --data " + (tmp.path / "data").string(),
                    tmp.path)
                .code,
            2);
}

TEST(Cli, NumericFailureExitCode) {
  TempDir tmp;
  auto r = run_cli("train" + tiny_overrides() + " --override lr=1e308 --override out_dir=" + (tmp.path / "x").string(),
                   tmp.path);
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, AblateAndSweepWriteCsv) {
  TempDir tmp;
  std::ofstream cfg(tmp.path / "tiny.cfg");
  for (const char* kv : kTiny) {
    std::string s(kv);
    cfg << s.substr(0, s.find('=')) << " = " << s.substr(s.find('=') + 1) << '\n';
  }
  cfg.close();
  auto ab = run_cli("ablate --config " + (tmp.path / "tiny.cfg").string() + " --which scales --out " +
                        (tmp.path / "scales.csv").string(),
                    tmp.path);
  ASSERT_EQ(ab.code, 0) << ab.err;
  auto rows = lines(slurp(tmp.path / "scales.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "variant,acc_target1,auc_target1,acc_target2,auc_target2,mean_acc,mean_auc");
  EXPECT_EQ(rows[4].substr(0, 6), "M2DAN,");
  auto sw = run_cli("sweep --config " + (tmp.path / "tiny.cfg").string() + " --param lambda --out " +
                        (tmp.path / "lambda.csv").string(),
                    tmp.path);
  ASSERT_EQ(sw.code, 0) << sw.err;
  auto srows = lines(slurp(tmp.path / "lambda.csv"));
  ASSERT_EQ(srows.size(), 5u);
  EXPECT_EQ(srows[0], "lambda,auc_target1,auc_target2,mean_auc");
  EXPECT_EQ(srows[4].substr(0, 2), "1,");
}
