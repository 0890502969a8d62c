#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2dan/data.hpp"
#include "m2dan/metrics.hpp"
#include "m2dan/model.hpp"
#include "m2dan/objective.hpp"

namespace m2dan {

// Plain SGD: p <- p - lr * grad, then the gradient is zeroed.
inline void sgd_step(ParamSet& params, double lr) {
  for (auto& [path, t] : params) {
    if (!t.requires_grad) continue;
    if (!t.grad) throw Error(ErrorCode::MissingGradient, path);
  }
  for (auto& [_, t] : params) {
    if (!t.requires_grad) continue;
    auto& g = *t.grad;
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] -= lr * g[i];
    std::fill(g.begin(), g.end(), 0.0);
  }
}

struct EpochRecord {
  std::size_t epoch = 0;
  double l_fo = 0.0;  // batch means over the epoch
  double l_en = 0.0;
  double l_d = 0.0;
  std::vector<DomainMetrics> metrics;  // every domain with a test split, source first
};

struct TrainState {
  ModelBundle model;
  HyperParams hp;
  std::size_t step = 0;
  std::vector<EpochRecord> history;
};

struct TrainOptions {
  HyperParams hp;
  LossToggles toggles;
  // Baseline: target training data are dropped, the discriminator is never
  // evaluated, and only L_c on source rows is optimised.
  bool source_only = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

inline std::vector<DomainMetrics> validation_metrics(ModelBundle& model, const Benchmark& data) {
  std::vector<DomainMetrics> out;
  for (const auto& dd : data.domains)
    if (!dd.test.empty()) out.push_back(evaluate_domain(model, dd.name, dd.test));
  return out;
}

// One forward/backward/SGD update on a batch. Returns the logged loss values
// {L_fo, L_en, L_d}.
inline std::array<double, 3> train_step(TrainState& state, const DomainBatch& batch, const TrainOptions& opt) {
  const auto& hp = state.hp;
  const bool use_domain = !opt.source_only && opt.toggles.domain;
  const double coeff = use_domain ? hp.grl_coeff().at(state.step) : 0.0;
  zero_grads(state.model.params);
  Tape tape;
  LossToggles toggles = opt.toggles;
  toggles.domain = use_domain;
  ObjectiveTerms terms;
  try {
    auto out = forward(tape, state.model, batch.images, coeff, use_domain);
    terms = total_objective(out, batch, hp, toggles);
  } catch (const Error& e) {
    // overflowing activations reach softmax before they reach the loss
    if (e.code() != ErrorCode::NonFiniteInput) throw;
    throw Error(ErrorCode::NumericFailure, "non-finite activations at step " + std::to_string(state.step));
  }
  const double total = terms.total.item();
  if (!std::isfinite(total))
    throw Error(ErrorCode::NumericFailure, "non-finite loss at step " + std::to_string(state.step));
  tape.backward(terms.total);
  sgd_step(state.model.params, hp.lr);
  for (const auto& [path, t] : state.model.params)
    for (double v : t.data)
      if (!std::isfinite(v))
        throw Error(ErrorCode::NumericFailure, path + " became non-finite at step " + std::to_string(state.step));
  ++state.step;
  return {terms.focal.item(), terms.entropy.item(), terms.domain_value()};
}

// Minimises lambda * (L_fo + eta * L_en) + L_d over mixed-domain batches,
// recording epoch-mean losses and test-split metrics after every epoch.
inline TrainState train(ModelBundle model, const Benchmark& data, const TrainOptions& opt) {
  opt.hp.validate();
  if (data.domains.empty()) throw Error(ErrorCode::EmptyInput, "no domains");
  TrainState state{std::move(model), opt.hp, 0, {}};

  static const std::vector<DomainSample> kEmpty;
  std::vector<const std::vector<DomainSample>*> train_sets;
  for (std::size_t d = 0; d < data.domains.size(); ++d)
    train_sets.push_back(d == 0 || !opt.source_only ? &data.domains[d].train : &kEmpty);
  for (const auto* set : train_sets)
    for (const auto& s : *set)
      if (s.domain_index != 0 && s.class_label)
        throw Error(ErrorCode::InvalidSpec, "target training sample exposes a class label");

  BatchSampler sampler(train_sets, opt.hp.batch_size, opt.hp.seed);
  for (std::size_t epoch = 1; epoch <= opt.hp.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    const std::size_t nb = sampler.batches_per_epoch();
    for (std::size_t b = 0; b < nb; ++b) {
      const auto losses = train_step(state, sampler.next(), opt);
      rec.l_fo += losses[0];
      rec.l_en += losses[1];
      rec.l_d += losses[2];
    }
    rec.l_fo /= static_cast<double>(nb);
    rec.l_en /= static_cast<double>(nb);
    rec.l_d /= static_cast<double>(nb);
    rec.metrics = validation_metrics(state.model, data);
    if (opt.on_epoch) opt.on_epoch(rec);
    state.history.push_back(std::move(rec));
  }
  return state;
}

// ---------------------------------------------------------------------------
// History serialisation.

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Columns: epoch, l_fo, l_en, l_d, then acc_<domain>, auc_<domain> per domain.
inline std::string history_to_csv(const std::vector<EpochRecord>& history, const std::vector<std::string>& domains) {
  std::ostringstream os;
  os << "epoch,l_fo,l_en,l_d";
  for (const auto& d : domains) os << ",acc_" << d << ",auc_" << d;
  os << '\n';
  for (const auto& r : history) {
    os << r.epoch << ',' << format_double(r.l_fo) << ',' << format_double(r.l_en) << ',' << format_double(r.l_d);
    for (const auto& m : r.metrics) os << ',' << format_double(m.accuracy) << ',' << format_double(m.auc);
    os << '\n';
  }
  return os.str();
}

inline nlohmann::ordered_json history_to_json(const std::vector<EpochRecord>& history) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : history) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["l_fo"] = r.l_fo;
    j["l_en"] = r.l_en;
    j["l_d"] = r.l_d;
    j["metrics"] = nlohmann::ordered_json::array();
    for (const auto& m : r.metrics)
      j["metrics"].push_back({{"name", m.name}, {"n", m.n}, {"accuracy", m.accuracy}, {"auc", m.auc}});
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::vector<EpochRecord> history_from_json(const nlohmann::json& arr) {
  std::vector<EpochRecord> out;
  for (const auto& j : arr) {
    EpochRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.l_fo = j.at("l_fo").get<double>();
    r.l_en = j.at("l_en").get<double>();
    r.l_d = j.at("l_d").get<double>();
    for (const auto& m : j.at("metrics"))
      r.metrics.push_back(DomainMetrics{m.at("name").get<std::string>(), m.at("n").get<std::size_t>(),
                                        m.at("accuracy").get<double>(), m.at("auc").get<double>()});
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace m2dan
