#include <gtest/gtest.h>

#include <filesystem>
#include <cstring>
#include <fstream>

#include <unistd.h>

#include "m2dan/checkpoint.hpp"
#include "m2dan/training.hpp"

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

ModelSpec tiny_spec() {
  ModelSpec s;
  s.extractor.channels = {2, 2};
  s.scale.branch_channels = 3;
  s.head_hidden = {4, 4};
  return s;
}

// 90 source, 5 and 18 target training samples at 8x8.
const Benchmark& tiny_data() {
  static const Benchmark b = default_benchmark(5, 8, 0.01);
  return b;
}

TrainOptions tiny_options(std::size_t epochs = 2) {
  TrainOptions opt;
  opt.hp.epochs = epochs;
  opt.hp.lr = 0.01;
  return opt;
}

}  // namespace

TEST(Sgd, Examples) {
  ParamSet p;
  p.emplace("a", Tensor::build({1}, {1.0}, true));
  p.at("a").grad = std::vector<double>{2.0};
  sgd_step(p, 0.001);
  EXPECT_EQ(p.at("a").data[0], 1.0 - 0.001 * 2.0);
  EXPECT_NEAR(p.at("a").data[0], 0.998, 1e-15);
  EXPECT_EQ(*p.at("a").grad, std::vector<double>{0.0});
  p.at("a").grad = std::vector<double>{5.0};
  sgd_step(p, 0.0);
  EXPECT_EQ(p.at("a").data[0], 1.0 - 0.001 * 2.0);
  p.emplace("b", Tensor::build({1}, {0.0}, true));
  expect_code(ErrorCode::MissingGradient, [&] { sgd_step(p, 0.1); });
}

TEST(Sgd, TwoStepsOnLinearLossEqualOneDoubledStep) {
  std::vector<double> c{0.3, -1.2, 2.5};
  auto run = [&](int steps, double lr) {
    ParamSet p;
    p.emplace("w", Tensor::build({3}, {1.0, 2.0, 3.0}, true));
    for (int s = 0; s < steps; ++s) {
      Tape t;
      t.backward(sum(mul(t.leaf(p.at("w")), t.constant({3}, c))));
      sgd_step(p, lr);
    }
    return p.at("w").data;
  };
  auto two = run(2, 0.01), one = run(1, 0.02);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(two[i], one[i], 1e-15);
    EXPECT_NEAR(one[i], (std::vector<double>{1.0, 2.0, 3.0})[i] - 0.02 * c[i], 1e-15);
  }
}

TEST(Train, HistoryAndStepCounters) {
  const auto& data = tiny_data();
  auto opt = tiny_options(3);
  std::size_t seen = 0;
  opt.on_epoch = [&](const EpochRecord& r) { EXPECT_EQ(r.epoch, ++seen); };
  auto st = train(build_model(tiny_spec(), 1), data, opt);
  EXPECT_EQ(st.history.size(), 3u);
  EXPECT_EQ(seen, 3u);
  const std::size_t largest = std::max({data.domains[0].train.size(), data.domains[1].train.size(),
                                        data.domains[2].train.size()});
  EXPECT_EQ(st.step, 3 * ((largest + 3) / 4));
  for (const auto& r : st.history) {
    ASSERT_EQ(r.metrics.size(), 3u);
    EXPECT_EQ(r.metrics[0].name, "source");
    EXPECT_GT(r.l_d, 0.0);
    EXPECT_GT(r.l_fo, 0.0);
  }
}

TEST(Train, DeterministicFinalParameters) {
  auto a = train(build_model(tiny_spec(), 2), tiny_data(), tiny_options());
  auto b = train(build_model(tiny_spec(), 2), tiny_data(), tiny_options());
  EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
  auto c_opt = tiny_options();
  c_opt.hp.seed = 99;
  auto c = train(build_model(tiny_spec(), 2), tiny_data(), c_opt);
  EXPECT_NE(encode_checkpoint(a), encode_checkpoint(c));
}

TEST(Train, DecouplesToSourceOnlyWithoutAdversaryOrTargets) {
  Benchmark no_targets = tiny_data();
  for (std::size_t d = 1; d < no_targets.domains.size(); ++d) no_targets.domains[d].train.clear();
  auto opt = tiny_options(2);
  opt.hp.alpha = 0.0;
  opt.hp.eta = 0.0;
  auto full = train(build_model(tiny_spec(), 3), no_targets, opt);
  opt.source_only = true;
  auto base = train(build_model(tiny_spec(), 3), tiny_data(), opt);
  EXPECT_EQ(full.step, base.step);
  for (const auto& [path, t] : full.model.params)
    if (param_group(path) != "gd") {
      EXPECT_EQ(t.data, base.model.params.at(path).data) << path;
    }
  for (std::size_t e = 0; e < full.history.size(); ++e) {
    EXPECT_EQ(full.history[e].l_fo, base.history[e].l_fo);
    EXPECT_EQ(full.history[e].metrics[1].auc, base.history[e].metrics[1].auc);
  }
}

TEST(Train, SourceOnlyNeverTouchesDiscriminator) {
  auto opt = tiny_options(1);
  opt.source_only = true;
  auto init = build_model(tiny_spec(), 4);
  auto st = train(init, tiny_data(), opt);
  for (const auto& [path, t] : st.model.params)
    if (param_group(path) == "gd") {
      EXPECT_EQ(t.data, init.params.at(path).data) << path;
    }
  for (const auto& r : st.history) EXPECT_EQ(r.l_d, 0.0);
}

TEST(Train, RejectsLabeledTargetTrainingData) {
  Benchmark leaky = tiny_data();
  leaky.domains[1].train[0].class_label = kOpen;
  expect_code(ErrorCode::InvalidSpec, [&] { train(build_model(tiny_spec(), 1), leaky, tiny_options(1)); });
  auto opt = tiny_options(1);
  opt.hp.batch_size = 10;
  expect_code(ErrorCode::IndivisibleBatch, [&] { train(build_model(tiny_spec(), 1), tiny_data(), opt); });
}

TEST(Train, DivergenceIsReported) {
  auto opt = tiny_options(1);
  opt.hp.lr = 1e200;  // parameters overflow within a few steps
  expect_code(ErrorCode::NumericFailure, [&] { train(build_model(tiny_spec(), 1), tiny_data(), opt); });
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

struct TempFile {
  fs::path path = fs::temp_directory_path() /
                  ("m2dan_ckpt_" + std::to_string(::getpid()) + "_" +
                   ::testing::UnitTest::GetInstance()->current_test_info()->name() + ".bin");
  ~TempFile() { fs::remove(path); }
};

std::uint32_t le32(const std::vector<char>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[at + i])) << (8 * i);
  return v;
}

}  // namespace

TEST(Checkpoint, RoundTripAndLayout) {
  auto st = train(build_model(tiny_spec(), 6), tiny_data(), tiny_options(1));
  TempFile f;
  save_checkpoint(st, f.path);
  auto back = load_checkpoint(f.path, tiny_spec());
  EXPECT_EQ(back.step, st.step);
  for (const auto& [path, t] : st.model.params) {
    EXPECT_EQ(back.model.params.at(path).data, t.data);
    EXPECT_TRUE(back.model.params.at(path).requires_grad);
  }
  ASSERT_EQ(back.history.size(), 1u);
  EXPECT_EQ(back.history[0].l_fo, st.history[0].l_fo);
  EXPECT_EQ(back.history[0].metrics[2].auc, st.history[0].metrics[2].auc);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(st));

  auto bytes = encode_checkpoint(st);
  EXPECT_EQ(std::string(bytes.data(), 4), "M2DN");
  EXPECT_EQ(le32(bytes, 4), 1u);
  // first record is the lexicographically smallest path
  const std::string first = st.model.params.begin()->first;
  EXPECT_EQ(le32(bytes, 8), first.size());
  EXPECT_EQ(std::string(bytes.data() + 12, first.size()), first);
  const auto& t0 = st.model.params.begin()->second;
  std::size_t at = 12 + first.size();
  EXPECT_EQ(le32(bytes, at), t0.shape.size());
  at += 4 + 4 * t0.shape.size();
  double v0;
  std::memcpy(&v0, bytes.data() + at, 8);
  EXPECT_EQ(v0, t0.data[0]);
}

TEST(Checkpoint, CorruptionIsRejected) {
  auto st = train(build_model(tiny_spec(), 7), tiny_data(), tiny_options(1));
  const auto good = encode_checkpoint(st);
  auto magic = good;
  magic[0] = 'X';
  expect_code(ErrorCode::CorruptFile, [&] { decode_checkpoint(magic, tiny_spec()); });
  auto version = good;
  version[4] = 2;
  expect_code(ErrorCode::VersionMismatch, [&] { decode_checkpoint(version, tiny_spec()); });
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
    auto truncated = good;
    truncated.resize(cut);
    expect_code(ErrorCode::CorruptFile, [&] { decode_checkpoint(truncated, tiny_spec()); });
  }
  auto trailing = good;
  trailing.push_back('!');
  expect_code(ErrorCode::CorruptFile, [&] { decode_checkpoint(trailing, tiny_spec()); });
  auto wrong_path = good;
  wrong_path[12] = 'z';
  expect_code(ErrorCode::SpecMismatch, [&] { decode_checkpoint(wrong_path, tiny_spec()); });
  auto other = tiny_spec();
  other.head_hidden = {5, 4};
  expect_code(ErrorCode::SpecMismatch, [&] { decode_checkpoint(good, other); });
  expect_code(ErrorCode::IoError, [] { load_checkpoint("/nonexistent/dir/ckpt.bin", tiny_spec()); });
}

TEST(History, CsvLayout) {
  std::vector<EpochRecord> h(2);
  h[0] = {1, 0.5, 0.25, 1.0, {{"source", 4, 0.75, 1.0}, {"t", 2, 0.5, 0.5}}};
  h[1] = {2, 0.125, 0.1, 0.9, {{"source", 4, 1.0, 1.0}, {"t", 2, 1.0, 1.0}}};
  EXPECT_EQ(history_to_csv(h, {"source", "t"}),
            "epoch,l_fo,l_en,l_d,acc_source,auc_source,acc_t,auc_t\n"
            "1,0.5,0.25,1,0.75,1,0.5,0.5\n"
            "2,0.125,0.10000000000000001,0.90000000000000002,1,1,1,1\n");
  auto back = history_from_json(nlohmann::json::parse(history_to_json(h).dump()));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].l_en, 0.1);
  EXPECT_EQ(back[1].metrics[1].name, "t");
}
