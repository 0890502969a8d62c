#pragma once

// Small models and batches shared by the model tests and the acceptance run.

#include <algorithm>
#include <functional>
#include <random>
#include <string>

#include "m2dan/objective.hpp"
#include "oracle.hpp"

namespace fixtures {

using namespace m2dan;

// Under 2k parameters, 8x8 input.
inline ModelSpec tiny_spec() {
  ModelSpec s;
  s.extractor.channels = {2, 2};
  s.scale.branch_channels = 3;
  s.head_hidden = {4, 4};
  return s;
}

inline Tensor random_images(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return oracle::random_tensor({n, 1, size, size}, rng, 0.0, 1.0, false);
}

// Two source rows (narrow, open), one row from each target.
inline DomainBatch tiny_batch(std::size_t size, std::uint64_t seed) {
  auto imgs = random_images(4, size, seed);
  const std::size_t px = size * size;
  std::vector<DomainSample> s;
  const std::optional<std::size_t> labels[] = {kNarrow, kOpen, std::nullopt, std::nullopt};
  const std::size_t doms[] = {0, 0, 1, 2};
  for (std::size_t i = 0; i < 4; ++i)
    s.push_back({Tensor::build({1, size, size}, {imgs.data.begin() + i * px, imgs.data.begin() + (i + 1) * px}),
                 labels[i], doms[i]});
  return make_batch({&s[0], &s[1], &s[2], &s[3]}, 3);
}

// The same network written out again with no GRL in front of G_d.
inline std::vector<Var> identity_domain_probs(Tape& t, ModelBundle& m, const Tensor& images) {
  auto P = [&](const std::string& p) { return t.leaf(m.params.at(p)); };
  Var x = t.constant(images);
  for (std::size_t i = 0; i < m.spec.extractor.channels.size(); ++i) {
    const auto n = "gf.block" + std::to_string(i + 1);
    x = avg_pool2(relu(conv2d(x, P(n + ".weight"), P(n + ".bias"))));
  }
  std::vector<Var> out;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto n = "gm.branch" + std::to_string(b + 1);
    Var f = global_avg_pool(relu(conv2d(x, P(n + ".weight"), P(n + ".bias"))));
    f = relu(linear(f, P("gd.fc1.weight"), P("gd.fc1.bias")));
    f = relu(linear(f, P("gd.fc2.weight"), P("gd.fc2.bias")));
    out.push_back(softmax(linear(f, P("gd.fc3.weight"), P("gd.fc3.bias")), 1));
  }
  return out;
}

inline ParamSet grads_of(ModelBundle m, const std::function<Var(Tape&, ModelBundle&)>& loss) {
  zero_grads(m.params);
  Tape t;
  t.backward(loss(t, m));
  return m.params;
}

struct GrlRouting {
  bool forward_identical = true;
  double worst = 0.0;  // max |grad - expected| over every parameter
};

// Domain-loss gradients through the model's GRL against the same network
// without it: G_f/G_m see -alpha times the reference, G_d sees it unchanged,
// G_y sees nothing.
inline GrlRouting grl_routing(double alpha) {
  auto m = build_model(tiny_spec(), 10);
  auto batch = tiny_batch(8, 11);
  auto id = grads_of(m, [&](Tape& t, ModelBundle& mm) {
    return branch_domain_loss(identity_domain_probs(t, mm, batch.images), batch.domain_labels);
  });
  GrlRouting r;
  {
    Tape t(false), u(false);
    auto with = forward(t, m, batch.images, alpha).domain_probs;
    auto without = identity_domain_probs(u, m, batch.images);
    for (std::size_t b = 0; b < 3; ++b)
      r.forward_identical = r.forward_identical && std::ranges::equal(with[b].value(), without[b].value());
  }
  auto g = grads_of(m, [&](Tape& t, ModelBundle& mm) {
    return branch_domain_loss(forward(t, mm, batch.images, alpha).domain_probs, batch.domain_labels);
  });
  for (const auto& [path, t] : g) {
    const auto& ref = *id.at(path).grad;
    const auto grp = param_group(path);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double want = grp == "gf" || grp == "gm" ? -alpha * ref[i] : grp == "gd" ? ref[i] : 0.0;
      r.worst = std::max(r.worst, std::abs((*t.grad)[i] - want));
    }
  }
  return r;
}

struct SignedFd {
  double worst = 0.0;
  std::string worst_at;
  std::size_t checked = 0, params = 0;
};

// Central differences of the two objective terms, combined per parameter
// group by the GRL sign rule, against the autodiff gradient of the total.
inline SignedFd signed_fd_check(double alpha = 0.3, double lambda = 0.7, double h = 1e-4) {
  auto m = build_model(tiny_spec(), 18);
  // Zero-initialized biases put dead ReLU units exactly on the kink, where a
  // central difference sees half a slope; move them off it.
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> jitter(0.02, 0.1);
  for (auto& [path, p] : m.params)
    if (path.ends_with(".bias"))
      for (auto& v : p.data) v = jitter(rng);
  auto batch = tiny_batch(8, 19);
  HyperParams hp;
  hp.alpha = alpha;
  hp.lambda = lambda;

  auto g = grads_of(m, [&](Tape& t, ModelBundle& mm) {
    return total_objective(forward(t, mm, batch.images, hp.alpha), batch, hp).total;
  });
  auto terms = [&](ModelBundle& mm) {
    Tape t(false);
    auto o = total_objective(forward(t, mm, batch.images, hp.alpha), batch, hp);
    return std::pair{o.classification.item(), o.domain.item()};
  };
  SignedFd r;
  r.params = count_params(m);
  for (auto& [path, p] : m.params) {
    const auto grp = param_group(path);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p.data[i];
      p.data[i] = orig + h;
      auto [cp, dp] = terms(m);
      p.data[i] = orig - h;
      auto [cm, dm] = terms(m);
      p.data[i] = orig;
      const double dc = (cp - cm) / (2 * h), dd = (dp - dm) / (2 * h);
      double want = 0.0;
      if (grp == "gf" || grp == "gm") want = hp.lambda * dc - hp.alpha * dd;
      else if (grp == "gd") want = dd;
      else want = hp.lambda * dc;
      const double e = oracle::rel_err((*g.at(path).grad)[i], want);
      ++r.checked;
      if (e > r.worst) {
        r.worst = e;
        r.worst_at = path + "[" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace fixtures
