#pragma once

// Flat `key = value` experiment configuration. Blank lines and lines starting
// with '#' are ignored; unknown keys are an error. to_text() writes every key
// back so the echoed file reproduces the run.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "m2dan/data.hpp"
#include "m2dan/model.hpp"
#include "m2dan/training.hpp"

namespace m2dan {

enum class Method { M2dan, SourceOnly };

struct ExperimentConfig {
  HyperParams hp;
  std::string scale = "mixed";
  std::size_t branch_channels = 32;
  std::vector<std::size_t> extractor_channels{8, 16, 32};
  std::vector<std::size_t> head_hidden{64, 32};
  LossToggles toggles;
  Method method = Method::M2dan;

  std::uint64_t synthetic_seed = 42;
  double scale_fraction = kDefaultScaleFraction;
  std::string data_dir;  // empty -> synthetic benchmark
  std::string half = "none";
  std::size_t image_size = 64;
  std::string out_dir = "out";

  ModelSpec model_spec() const {
    ModelSpec s;
    s.extractor.channels = extractor_channels;
    s.scale = ScaleSpec::variant(scale, branch_channels);
    s.head_hidden = head_hidden;
    return s;
  }

  TrainOptions train_options() const {
    TrainOptions o;
    o.hp = hp;
    o.toggles = toggles;
    o.source_only = method == Method::SourceOnly;
    return o;
  }

  Benchmark load_data() const {
    if (!data_dir.empty()) return load_dataset_dir(data_dir, parse_half(half), image_size);
    return default_benchmark(synthetic_seed, image_size, scale_fraction);
  }

  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_f64(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    throw Error(ErrorCode::ConfigError, key + ": not a number '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty())
    throw Error(ErrorCode::ConfigError, key + ": not a non-negative integer '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw Error(ErrorCode::ConfigError, key + ": expected on|off, got '" + v + "'");
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_u64(key, trim(item)));
  if (out.empty()) throw Error(ErrorCode::ConfigError, key + ": empty list");
  return out;
}

inline std::string join(const std::vector<std::size_t>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

}  // namespace detail

inline void ExperimentConfig::set(const std::string& key, const std::string& value) {
  using namespace detail;
  const std::string& v = value;
  if (key == "alpha") hp.alpha = parse_f64(key, v);
  else if (key == "lambda") hp.lambda = parse_f64(key, v);
  else if (key == "eta") hp.eta = parse_f64(key, v);
  else if (key == "gamma") hp.gamma = parse_f64(key, v);
  else if (key == "lr") hp.lr = parse_f64(key, v);
  else if (key == "epochs") {
    hp.epochs = parse_u64(key, v);
    if (hp.epochs == 0) throw Error(ErrorCode::ConfigError, "epochs must be at least 1");
  }
  else if (key == "batch_size") hp.batch_size = parse_u64(key, v);
  else if (key == "seed") hp.seed = parse_u64(key, v);
  else if (key == "grl_mode") {
    if (v == "constant") hp.grl.mode = GrlCoeff::Mode::Constant;
    else if (v == "ramp") hp.grl.mode = GrlCoeff::Mode::Ramp;
    else throw Error(ErrorCode::ConfigError, "grl_mode must be constant|ramp");
  } else if (key == "grl_ramp_length") hp.grl.ramp_length = parse_u64(key, v);
  else if (key == "scale") {
    ScaleSpec::variant(v);  // validates
    scale = v;
  } else if (key == "branch_channels") branch_channels = parse_u64(key, v);
  else if (key == "extractor_channels") extractor_channels = parse_list(key, v);
  else if (key == "head_hidden") head_hidden = parse_list(key, v);
  else if (key == "cls_loss") {
    if (v == "focal") toggles.cls = ClsLoss::Focal;
    else if (v == "ce") toggles.cls = ClsLoss::CrossEntropy;
    else throw Error(ErrorCode::ConfigError, "cls_loss must be focal|ce");
  } else if (key == "domain_loss") toggles.domain = parse_bool(key, v);
  else if (key == "entropy_loss") toggles.entropy = parse_bool(key, v);
  else if (key == "method") {
    if (v == "m2dan") method = Method::M2dan;
    else if (v == "source_only") method = Method::SourceOnly;
    else throw Error(ErrorCode::ConfigError, "method must be m2dan|source_only");
  } else if (key == "synthetic_seed") synthetic_seed = parse_u64(key, v);
  else if (key == "scale_fraction") {
    scale_fraction = parse_f64(key, v);
    if (!(scale_fraction > 0.0 && scale_fraction <= 1.0))
      throw Error(ErrorCode::ConfigError, "scale_fraction must be in (0, 1]");
  } else if (key == "data_dir") data_dir = v;
  else if (key == "half") {
    parse_half(v);
    half = v;
  } else if (key == "image_size") image_size = parse_u64(key, v);
  else if (key == "out_dir") out_dir = v;
  else throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
}

inline std::string ExperimentConfig::to_text() const {
  using detail::join;
  std::ostringstream os;
  os << "alpha = " << format_double(hp.alpha) << '\n'
     << "lambda = " << format_double(hp.lambda) << '\n'
     << "eta = " << format_double(hp.eta) << '\n'
     << "gamma = " << format_double(hp.gamma) << '\n'
     << "lr = " << format_double(hp.lr) << '\n'
     << "epochs = " << hp.epochs << '\n'
     << "batch_size = " << hp.batch_size << '\n'
     << "seed = " << hp.seed << '\n'
     << "grl_mode = " << (hp.grl.mode == GrlCoeff::Mode::Ramp ? "ramp" : "constant") << '\n'
     << "grl_ramp_length = " << hp.grl.ramp_length << '\n'
     << "scale = " << scale << '\n'
     << "branch_channels = " << branch_channels << '\n'
     << "extractor_channels = " << join(extractor_channels) << '\n'
     << "head_hidden = " << join(head_hidden) << '\n'
     << "cls_loss = " << (toggles.cls == ClsLoss::Focal ? "focal" : "ce") << '\n'
     << "domain_loss = " << (toggles.domain ? "on" : "off") << '\n'
     << "entropy_loss = " << (toggles.entropy ? "on" : "off") << '\n'
     << "method = " << (method == Method::SourceOnly ? "source_only" : "m2dan") << '\n'
     << "synthetic_seed = " << synthetic_seed << '\n'
     << "scale_fraction = " << format_double(scale_fraction) << '\n'
     << "data_dir = " << data_dir << '\n'
     << "half = " << half << '\n'
     << "image_size = " << image_size << '\n'
     << "out_dir = " << out_dir << '\n';
  return os.str();
}

// "key=value" as given to --override.
inline void apply_override(ExperimentConfig& cfg, std::string_view kv) {
  const auto eq = kv.find('=');
  if (eq == std::string_view::npos) throw Error(ErrorCode::ConfigError, "override needs key=value: " + std::string(kv));
  cfg.set(detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    try {
      cfg.set(detail::trim(std::string_view(t).substr(0, eq)), detail::trim(std::string_view(t).substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError, "line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace m2dan
