#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "m2dan/tensor.hpp"

namespace m2dan {

// Parameter path -> tensor. std::map keeps iteration lexicographic and element
// addresses stable, which Tape::leaf relies on.
using ParamSet = std::map<std::string, Tensor>;

// Group prefix of a parameter path ("gf.conv1.weight" -> "gf").
inline std::string_view param_group(std::string_view path) { return path.substr(0, path.find('.')); }

inline std::size_t count_scalars(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.size();
  return n;
}

// Allocates zeroed gradient buffers for every trainable tensor.
inline void zero_grads(ParamSet& params) {
  for (auto& [_, t] : params)
    if (t.requires_grad) t.grad.emplace(t.size(), 0.0);
}

struct GrlCoeff {
  enum class Mode { Constant, Ramp };
  Mode mode = Mode::Constant;
  double alpha = 0.03;
  std::size_t ramp_length = 0;

  // Ramp goes linearly from 0 at step 0 to alpha at ramp_length.
  double at(std::size_t step) const {
    if (mode == Mode::Constant || ramp_length == 0) return alpha;
    const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(ramp_length));
    return alpha * frac;
  }
};

// Gradient reversal: identity forward, upstream gradient times -coeff backward.
inline Var grl(Var x, double coeff) {
  auto xv = x.value();
  return x.tape().record(x.shape(), std::vector<double>(xv.begin(), xv.end()), {x},
                         [x, coeff](Tape& t, std::span<const double> g) {
                           detail::accumulate(t.grad_of(x), g, -coeff);
                         });
}

inline Var grl(Var x, const GrlCoeff& coeff, std::size_t step) { return grl(x, coeff.at(step)); }

// ---------------------------------------------------------------------------
// Same-padding 2D cross-correlation, stride 1, odd square kernels.
//
// Lowered to im2col + GEMM per sample: for each sample the patch matrix has
// C_in*k*k rows and H*W columns, and out_n = W (C_out x C_in*k*k) * col_n.

namespace detail {

// `ld` is the row stride of `col`.
inline void im2col(const double* img, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
                   double* col, std::size_t ld) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * ld;
        const double* plane = img + c * h * w;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const auto sy = y + dy;
          double* dst = row + y * W;
          if (sy < 0 || sy >= H) {
            std::fill_n(dst, W, 0.0);
            continue;
          }
          for (std::ptrdiff_t x = 0; x < W; ++x) {
            const auto sx = x + dx;
            dst[x] = (sx < 0 || sx >= W) ? 0.0 : plane[sy * W + sx];
          }
        }
      }
}

inline void col2im_add(const double* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k,
                       double* img, std::size_t ld) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(h);
  const auto W = static_cast<std::ptrdiff_t>(w);
  for (std::size_t c = 0; c < c_in; ++c)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * ld;
        double* plane = img + c * h * w;
        const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          const auto sy = y + dy;
          if (sy < 0 || sy >= H) continue;
          for (std::ptrdiff_t x = 0; x < W; ++x) {
            const auto sx = x + dx;
            if (sx >= 0 && sx < W) plane[sy * W + sx] += row[y * W + x];
          }
        }
      }
}

}  // namespace detail

inline Var conv2d(Var input, Var weight, Var bias) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (si.size() != 4 || sw.size() != 4)
    throw Error(ErrorCode::ShapeMismatch, "conv2d expects rank-4 input and weight");
  const std::size_t n = si[0], c_in = si[1], h = si[2], w = si[3];
  const std::size_t c_out = sw[0], k = sw[2];
  if (sw[3] != k) throw Error(ErrorCode::UnsupportedKernel, "non-square kernel " + shape_str(sw));
  if (k % 2 == 0) throw Error(ErrorCode::UnsupportedKernel, "even kernel size " + std::to_string(k));
  if (sw[1] != c_in)
    throw Error(ErrorCode::ShapeMismatch, "conv2d input " + shape_str(si) + " weight " + shape_str(sw));
  if (bias.shape() != Shape{c_out}) throw Error(ErrorCode::ShapeMismatch, "conv2d bias " + shape_str(bias.shape()));

  const std::size_t hw = h * w;
  const std::size_t kk = c_in * k * k;
  const auto E_co = static_cast<Eigen::Index>(c_out);
  const auto E_kk = static_cast<Eigen::Index>(kk);
  const auto E_hw = static_cast<Eigen::Index>(hw);

  std::vector<double> cols(n * kk * hw);
  std::vector<double> out(n * c_out * hw);
  auto xv = input.value();
  detail::MapC Wm(weight.value().data(), E_co, E_kk);
  Eigen::Map<const Eigen::VectorXd> b(bias.value().data(), E_co);
  for (std::size_t s = 0; s < n; ++s) {
    double* col = cols.data() + s * kk * hw;
    detail::im2col(xv.data() + s * c_in * hw, c_in, h, w, k, col, hw);
    detail::Map O(out.data() + s * c_out * hw, E_co, E_hw);
    O.noalias() = Wm * detail::MapC(col, E_kk, E_hw);
    O.colwise() += b;
  }

  return input.tape().record(
      {n, c_out, h, w}, std::move(out), {input, weight, bias},
      [=, cols = std::move(cols)](Tape& t, std::span<const double> g) {
        auto gx = t.grad_of(input);
        auto gw = t.grad_of(weight);
        auto gb = t.grad_of(bias);
        detail::MapC Wm(t.value(weight).data(), E_co, E_kk);
        std::vector<double> dcol(gx.empty() ? 0 : kk * hw);
        for (std::size_t s = 0; s < n; ++s) {
          detail::MapC G(g.data() + s * c_out * hw, E_co, E_hw);
          const double* col = cols.data() + s * kk * hw;
          if (!gw.empty()) detail::Map(gw.data(), E_co, E_kk).noalias() += G * detail::MapC(col, E_kk, E_hw).transpose();
          // plain loops: Eigen's vectorized sums depend on pointer alignment,
          // which would make runs differ in the last bit
          if (!gb.empty())
            for (std::size_t c = 0; c < c_out; ++c) {
              const double* row = g.data() + (s * c_out + c) * hw;
              double acc = 0.0;
              for (std::size_t i = 0; i < hw; ++i) acc += row[i];
              gb[c] += acc;
            }
          if (!gx.empty()) {
            detail::Map D(dcol.data(), E_kk, E_hw);
            D.noalias() = Wm.transpose() * G;
            detail::col2im_add(dcol.data(), c_in, h, w, k, gx.data() + s * c_in * hw, hw);
          }
        }
      });
}

// input [N, D_in] * weight [D_in, D_out] + bias [D_out]
inline Var linear(Var input, Var weight, Var bias) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (si.size() != 2 || sw.size() != 2 || si[1] != sw[0] || bias.shape() != Shape{sw[1]})
    throw Error(ErrorCode::ShapeMismatch,
                "linear " + shape_str(si) + " x " + shape_str(sw) + " + " + shape_str(bias.shape()));
  const auto m = static_cast<Eigen::Index>(si[0]);
  const auto k = static_cast<Eigen::Index>(si[1]);
  const auto n = static_cast<Eigen::Index>(sw[1]);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  detail::Map O(out.data(), m, n);
  O.noalias() = detail::MapC(input.value().data(), m, k) * detail::MapC(weight.value().data(), k, n);
  O.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value().data(), n);
  return input.tape().record({si[0], sw[1]}, std::move(out), {input, weight, bias},
                             [=](Tape& t, std::span<const double> g) {
                               detail::MapC G(g.data(), m, n);
                               if (auto gx = t.grad_of(input); !gx.empty())
                                 detail::Map(gx.data(), m, k).noalias() +=
                                     G * detail::MapC(t.value(weight).data(), k, n).transpose();
                               if (auto gw = t.grad_of(weight); !gw.empty())
                                 detail::Map(gw.data(), k, n).noalias() +=
                                     detail::MapC(t.value(input).data(), m, k).transpose() * G;
                               if (auto gb = t.grad_of(bias); !gb.empty())
                                 for (Eigen::Index r = 0; r < m; ++r)
                                   for (Eigen::Index c = 0; c < n; ++c) gb[c] += g[r * n + c];
                             });
}

// [N, C, H, W] -> [N, C], per-channel spatial mean.
inline Var global_avg_pool(Var input) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw Error(ErrorCode::ShapeMismatch, "global_avg_pool expects rank 4, got " + shape_str(s));
  const std::size_t planes = s[0] * s[1];
  const std::size_t hw = s[2] * s[3];
  const double inv = 1.0 / static_cast<double>(hw);
  auto xv = input.value();
  std::vector<double> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += xv[p * hw + i];
    out[p] = acc * inv;
  }
  return input.tape().record({s[0], s[1]}, std::move(out), {input}, [=](Tape& t, std::span<const double> g) {
    auto gx = t.grad_of(input);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < hw; ++i) gx[p * hw + i] += g[p] * inv;
  });
}

// Non-overlapping 2x2 mean; H and W must be even.
inline Var avg_pool2(Var input) {
  const Shape& s = input.shape();
  if (s.size() != 4) throw Error(ErrorCode::ShapeMismatch, "avg_pool2 expects rank 4, got " + shape_str(s));
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  if (h % 2 || w % 2) throw Error(ErrorCode::ShapeMismatch, "avg_pool2 needs even spatial dims, got " + shape_str(s));
  const std::size_t oh = h / 2, ow = w / 2;
  auto xv = input.value();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        const double* src = xv.data() + p * h * w + 2 * y * w + 2 * x;
        out[(p * oh + y) * ow + x] = 0.25 * (src[0] + src[1] + src[w] + src[w + 1]);
      }
  return input.tape().record({s[0], s[1], oh, ow}, std::move(out), {input}, [=](Tape& t, std::span<const double> g) {
    auto gx = t.grad_of(input);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const double v = 0.25 * g[(p * oh + y) * ow + x];
          double* dst = gx.data() + p * h * w + 2 * y * w + 2 * x;
          dst[0] += v;
          dst[1] += v;
          dst[w] += v;
          dst[w + 1] += v;
        }
  });
}

// ---------------------------------------------------------------------------
// Parameter construction.

struct ParamDecl {
  std::string path;
  Shape shape;
  std::size_t fan_in = 0;  // 0 marks a bias (zero-initialised)
};

namespace detail {

// FNV-1a over the path, mixed with the seed, so each tensor's draws depend only
// on (seed, path).
inline std::uint64_t param_stream_seed(std::uint64_t seed, std::string_view path) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : path) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::uint64_t z = h ^ (seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
inline ParamSet init_params(const std::vector<ParamDecl>& decls, std::uint64_t seed) {
  ParamSet params;
  for (const auto& d : decls) {
    if (d.shape.empty()) throw Error(ErrorCode::InvalidSpec, "parameter " + d.path + " has no shape");
    auto t = Tensor::zeros(d.shape, true);
    if (d.fan_in > 0) {
      std::mt19937_64 rng(detail::param_stream_seed(seed, d.path));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(d.fan_in)));
      for (auto& v : t.data) v = dist(rng);
    }
    if (!params.emplace(d.path, std::move(t)).second)
      throw Error(ErrorCode::InvalidSpec, "duplicate parameter path " + d.path);
  }
  return params;
}

inline ParamDecl conv_weight_decl(std::string path, std::size_t c_out, std::size_t c_in, std::size_t k) {
  return {std::move(path), {c_out, c_in, k, k}, c_in * k * k};
}

inline ParamDecl linear_weight_decl(std::string path, std::size_t d_in, std::size_t d_out) {
  return {std::move(path), {d_in, d_out}, d_in};
}

inline ParamDecl bias_decl(std::string path, std::size_t n) { return {std::move(path), {n}, 0}; }

}  // namespace m2dan
