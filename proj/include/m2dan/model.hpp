#pragma once

// The multi-scale multi-target adversarial network:
//
//   images -> G_f (conv blocks) -> G_m (parallel same-padding branches)
//          -> per-branch global average pool
//          -> concat -> G_y (3 FC) -> class probabilities
//          -> each branch: GRL -> shared G_d (3 FC) -> domain probabilities

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "m2dan/layers.hpp"
#include "m2dan/tensor.hpp"

namespace m2dan {

struct ScaleSpec {
  std::vector<std::size_t> kernel_sizes{1, 3, 5};
  std::size_t branch_channels = 32;

  // "mixed" -> {1,3,5}; "sK" -> {K,K,K}.
  static ScaleSpec variant(std::string_view name, std::size_t branch_channels = 32) {
    ScaleSpec s;
    s.branch_channels = branch_channels;
    if (name == "mixed") return s;
    if (name == "s1") s.kernel_sizes = {1, 1, 1};
    else if (name == "s3") s.kernel_sizes = {3, 3, 3};
    else if (name == "s5") s.kernel_sizes = {5, 5, 5};
    else throw Error(ErrorCode::InvalidSpec, "unknown scale variant '" + std::string(name) + "'");
    return s;
  }

  bool operator==(const ScaleSpec&) const = default;
};

// Each block is conv(kernel, same padding) -> relu -> 2x2 average downsample.
struct ExtractorSpec {
  std::size_t in_channels = 1;
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t kernel = 3;

  bool operator==(const ExtractorSpec&) const = default;
};

struct ModelSpec {
  ExtractorSpec extractor;
  ScaleSpec scale;
  std::vector<std::size_t> head_hidden{64, 32};  // two hidden widths -> 3 FC layers
  std::size_t num_classes = 2;
  std::size_t num_domains = 3;

  std::size_t classifier_input() const { return scale.branch_channels * scale.kernel_sizes.size(); }
  std::size_t discriminator_input() const { return scale.branch_channels; }

  bool operator==(const ModelSpec&) const = default;

  void validate() const {
    if (extractor.channels.empty() || extractor.in_channels == 0)
      throw Error(ErrorCode::InvalidSpec, "extractor needs at least one block");
    for (auto c : extractor.channels)
      if (c == 0) throw Error(ErrorCode::InvalidSpec, "zero-width extractor block");
    if (extractor.kernel % 2 == 0) throw Error(ErrorCode::InvalidSpec, "extractor kernel must be odd");
    if (scale.kernel_sizes.empty()) throw Error(ErrorCode::InvalidSpec, "scale spec has no branches");
    for (auto k : scale.kernel_sizes)
      if (k % 2 == 0) throw Error(ErrorCode::InvalidSpec, "branch kernel " + std::to_string(k) + " is even");
    if (scale.branch_channels == 0) throw Error(ErrorCode::InvalidSpec, "zero branch width");
    if (head_hidden.size() != 2) throw Error(ErrorCode::InvalidSpec, "heads are exactly three FC layers");
    for (auto h : head_hidden)
      if (h == 0) throw Error(ErrorCode::InvalidSpec, "zero head width");
    if (num_classes < 2) throw Error(ErrorCode::InvalidSpec, "need at least two classes");
    if (num_domains < 1) throw Error(ErrorCode::InvalidSpec, "need at least one domain");
  }

  std::vector<ParamDecl> param_decls() const {
    validate();
    std::vector<ParamDecl> d;
    std::size_t c_prev = extractor.in_channels;
    for (std::size_t i = 0; i < extractor.channels.size(); ++i) {
      const auto name = "gf.block" + std::to_string(i + 1);
      d.push_back(conv_weight_decl(name + ".weight", extractor.channels[i], c_prev, extractor.kernel));
      d.push_back(bias_decl(name + ".bias", extractor.channels[i]));
      c_prev = extractor.channels[i];
    }
    for (std::size_t b = 0; b < scale.kernel_sizes.size(); ++b) {
      const auto name = "gm.branch" + std::to_string(b + 1);
      d.push_back(conv_weight_decl(name + ".weight", scale.branch_channels, c_prev, scale.kernel_sizes[b]));
      d.push_back(bias_decl(name + ".bias", scale.branch_channels));
    }
    auto head = [&](const std::string& group, std::size_t in, std::size_t out) {
      const std::size_t widths[] = {in, head_hidden[0], head_hidden[1], out};
      for (std::size_t l = 0; l < 3; ++l) {
        const auto name = group + ".fc" + std::to_string(l + 1);
        d.push_back(linear_weight_decl(name + ".weight", widths[l], widths[l + 1]));
        d.push_back(bias_decl(name + ".bias", widths[l + 1]));
      }
    };
    head("gy", classifier_input(), num_classes);
    head("gd", discriminator_input(), num_domains);
    return d;
  }
};

struct ModelBundle {
  ModelSpec spec;
  ParamSet params;
};

inline ModelBundle build_model(const ModelSpec& spec, std::uint64_t seed) {
  return ModelBundle{spec, init_params(spec.param_decls(), seed)};
}

inline std::size_t count_params(const ModelBundle& model) { return count_scalars(model.params); }

inline std::size_t count_params(const ModelBundle& model, std::string_view group) {
  std::size_t n = 0;
  for (const auto& [path, t] : model.params)
    if (param_group(path) == group) n += t.size();
  return n;
}

struct ForwardOutput {
  Var class_logits;
  Var class_probs;                  // [N, num_classes]
  std::vector<Var> domain_probs;    // one [N, num_domains] per branch; empty without the domain head
  std::vector<Var> branch_feats;    // one [N, branch_channels] per branch
  std::vector<Var> branch_maps;     // pre-pool branch activations
};

namespace detail {

struct ParamLeaves {
  Tape& tape;
  ParamSet& params;
  std::map<std::string, Var> cache;

  Var operator()(const std::string& path) {
    if (auto it = cache.find(path); it != cache.end()) return it->second;
    auto p = params.find(path);
    if (p == params.end()) throw Error(ErrorCode::SpecMismatch, "missing parameter " + path);
    return cache.emplace(path, tape.leaf(p->second)).first->second;
  }
};

inline Var mlp3(ParamLeaves& P, const std::string& group, Var x) {
  x = relu(linear(x, P(group + ".fc1.weight"), P(group + ".fc1.bias")));
  x = relu(linear(x, P(group + ".fc2.weight"), P(group + ".fc2.bias")));
  return linear(x, P(group + ".fc3.weight"), P(group + ".fc3.bias"));
}

}  // namespace detail

// grl_coeff scales the reversed gradient reaching G_m/G_f from G_d. With
// with_domain = false the discriminator head is not evaluated at all.
inline ForwardOutput forward(Tape& tape, ModelBundle& model, const Tensor& images, double grl_coeff,
                             bool with_domain = true) {
  const auto& spec = model.spec;
  const Shape& s = images.shape;
  if (s.size() != 4 || s[1] != spec.extractor.in_channels)
    throw Error(ErrorCode::ShapeMismatch, "images " + shape_str(s) + " do not match the extractor input");
  const std::size_t factor = std::size_t{1} << spec.extractor.channels.size();
  if (s[2] % factor || s[3] % factor)
    throw Error(ErrorCode::ShapeMismatch,
                "image size " + shape_str(s) + " not divisible by " + std::to_string(factor));

  detail::ParamLeaves P{tape, model.params, {}};
  ForwardOutput out;
  Var x = tape.constant(images);
  for (std::size_t i = 0; i < spec.extractor.channels.size(); ++i) {
    const auto name = "gf.block" + std::to_string(i + 1);
    x = avg_pool2(relu(conv2d(x, P(name + ".weight"), P(name + ".bias"))));
  }
  for (std::size_t b = 0; b < spec.scale.kernel_sizes.size(); ++b) {
    const auto name = "gm.branch" + std::to_string(b + 1);
    Var m = relu(conv2d(x, P(name + ".weight"), P(name + ".bias")));
    out.branch_maps.push_back(m);
    out.branch_feats.push_back(global_avg_pool(m));
  }
  out.class_logits = detail::mlp3(P, "gy", concat(out.branch_feats, 1));
  out.class_probs = softmax(out.class_logits, 1);
  if (with_domain) {
    for (Var f : out.branch_feats)
      out.domain_probs.push_back(softmax(detail::mlp3(P, "gd", grl(f, grl_coeff)), 1));
  }
  return out;
}

inline ForwardOutput forward(Tape& tape, ModelBundle& model, const Tensor& images, const GrlCoeff& coeff,
                             std::size_t step) {
  return forward(tape, model, images, coeff.at(step));
}

// Baseline path: no GRL, no discriminator.
inline Var source_only_forward(Tape& tape, ModelBundle& model, const Tensor& images) {
  return forward(tape, model, images, 0.0, false).class_probs;
}

}  // namespace m2dan
