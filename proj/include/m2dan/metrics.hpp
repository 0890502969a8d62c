#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2dan/data.hpp"
#include "m2dan/model.hpp"

namespace m2dan {

// Index of the row maximum; ties resolve to the lower index.
inline std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

// Fraction of rows whose argmax matches the label's argmax.
inline double accuracy(const Tensor& pred_probs, const Tensor& labels) {
  if (pred_probs.shape.size() != 2 || pred_probs.shape != labels.shape)
    throw Error(ErrorCode::ShapeMismatch, "accuracy: " + shape_str(pred_probs.shape) + " vs " + shape_str(labels.shape));
  const std::size_t n = pred_probs.shape[0], c = pred_probs.shape[1];
  if (n == 0) throw Error(ErrorCode::EmptyInput, "accuracy of nothing");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> p(pred_probs.data.data() + i * c, c);
    std::span<const double> y(labels.data.data() + i * c, c);
    hit += argmax_row(p) == argmax_row(y);
  }
  return static_cast<double>(hit) / static_cast<double>(n);
}

// Mann-Whitney AUC via midranks: (R_pos - P(P+1)/2) / (P*N), where R_pos is the
// rank sum of positives and tied scores share the mean of their ranks.
// `positive` holds 1 for the positive class and 0 otherwise.
inline double auc(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw Error(ErrorCode::ShapeMismatch, "auc: scores/labels length differ");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int p : positive) n_pos += p != 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::DegenerateLabels, "auc needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are kept doubled (2 * midrank is an integer) so the sum stays exact.
  unsigned long long rank_sum_x2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const unsigned long long midrank_x2 = i + 1 + j;  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]] != 0) rank_sum_x2 += midrank_x2;
    i = j;
  }
  const unsigned long long u_x2 = rank_sum_x2 - static_cast<unsigned long long>(n_pos) * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

struct DomainMetrics {
  std::string name;
  std::size_t n = 0;
  double accuracy = 0.0;
  double auc = 0.0;
};

// Target domains feed the means; the source row is reported on its own.
struct MetricsReport {
  std::vector<DomainMetrics> domains;
  std::optional<DomainMetrics> source;
  double mean_acc = 0.0;
  double mean_auc = 0.0;

  nlohmann::ordered_json to_json() const {
    auto row = [](const DomainMetrics& m) {
      nlohmann::ordered_json j;
      j["name"] = m.name;
      j["n"] = m.n;
      j["accuracy"] = m.accuracy;
      j["auc"] = m.auc;
      return j;
    };
    nlohmann::ordered_json j;
    j["domains"] = nlohmann::ordered_json::array();
    for (const auto& d : domains) j["domains"].push_back(row(d));
    j["mean_acc"] = mean_acc;
    j["mean_auc"] = mean_auc;
    if (source) j["source"] = row(*source);
    return j;
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    auto row = [](const nlohmann::json& r) {
      return DomainMetrics{r.at("name").get<std::string>(), r.at("n").get<std::size_t>(), r.at("accuracy").get<double>(),
                           r.at("auc").get<double>()};
    };
    MetricsReport m;
    for (const auto& r : j.at("domains")) m.domains.push_back(row(r));
    m.mean_acc = j.at("mean_acc").get<double>();
    m.mean_auc = j.at("mean_auc").get<double>();
    if (j.contains("source")) m.source = row(j.at("source"));
    return m;
  }
};

// Class probabilities for a list of samples, evaluated in fixed-size chunks.
inline Tensor predict(ModelBundle& model, std::span<const DomainSample> samples, std::size_t chunk = 64) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "predict on no samples");
  const Shape& s0 = samples[0].image.shape;
  const std::size_t px = samples[0].image.size();
  const std::size_t c = model.spec.num_classes;
  std::vector<double> probs;
  probs.reserve(samples.size() * c);
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t m = std::min(chunk, samples.size() - start);
    std::vector<double> imgs(m * px);
    for (std::size_t i = 0; i < m; ++i) {
      const auto& img = samples[start + i].image;
      if (img.shape != s0) throw Error(ErrorCode::ShapeMismatch, "mixed image sizes");
      std::copy(img.data.begin(), img.data.end(), imgs.begin() + i * px);
    }
    Tape tape(false);
    Var p = source_only_forward(tape, model, Tensor::build({m, s0[0], s0[1], s0[2]}, std::move(imgs)));
    probs.insert(probs.end(), p.value().begin(), p.value().end());
  }
  return Tensor::build({samples.size(), c}, std::move(probs));
}

inline DomainMetrics evaluate_domain(ModelBundle& model, const std::string& name, std::span<const DomainSample> test) {
  const Tensor probs = predict(model, test);
  const std::size_t n = test.size(), c = model.spec.num_classes;
  std::vector<double> labels(n * c, 0.0), scores(n);
  std::vector<int> positive(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!test[i].class_label) throw Error(ErrorCode::InvalidSpec, name + ": unlabeled test sample");
    labels[i * c + *test[i].class_label] = 1.0;
    scores[i] = probs.data[i * c + kNarrow];
    positive[i] = *test[i].class_label == kNarrow;
  }
  DomainMetrics m;
  m.name = name;
  m.n = n;
  m.accuracy = accuracy(probs, Tensor::build({n, c}, std::move(labels)));
  m.auc = auc(std::span<const double>(scores), std::span<const int>(positive));
  return m;
}

inline MetricsReport summarize(std::vector<DomainMetrics> targets) {
  MetricsReport r;
  r.domains = std::move(targets);
  if (r.domains.empty()) return r;
  for (const auto& m : r.domains) {
    r.mean_acc += m.accuracy;
    r.mean_auc += m.auc;
  }
  r.mean_acc /= static_cast<double>(r.domains.size());
  r.mean_auc /= static_cast<double>(r.domains.size());
  return r;
}

// Per-target accuracy/AUC on the test splits plus unweighted target means.
inline MetricsReport evaluate(ModelBundle& model, const Benchmark& data) {
  std::vector<DomainMetrics> targets;
  std::optional<DomainMetrics> source;
  for (std::size_t d = 0; d < data.domains.size(); ++d) {
    const auto& dd = data.domains[d];
    if (dd.test.empty()) continue;
    auto m = evaluate_domain(model, dd.name, dd.test);
    if (d == 0) source = std::move(m);
    else targets.push_back(std::move(m));
  }
  auto r = summarize(std::move(targets));
  r.source = std::move(source);
  return r;
}

}  // namespace m2dan
