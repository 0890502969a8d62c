#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "m2dan/layers.hpp"
#include "m2dan/tensor.hpp"

namespace m2dan {

struct HyperParams {
  double alpha = 0.03;   // domain-loss weight, applied inside the GRL backward
  double lambda = 1.0;   // classification-loss weight
  double eta = 0.1;      // entropy weight inside the classification loss
  double gamma = 2.0;    // focal exponent
  double lr = 0.001;
  std::size_t epochs = 30;
  std::size_t batch_size = 12;
  std::uint64_t seed = 42;
  GrlCoeff grl{GrlCoeff::Mode::Constant, 0.03, 0};
  LogClamp clamp{};

  GrlCoeff grl_coeff() const {
    GrlCoeff c = grl;
    c.alpha = alpha;
    return c;
  }

  void validate() const {
    if (alpha < 0 || lambda < 0 || eta < 0 || gamma < 0 || lr < 0)
      throw Error(ErrorCode::InvalidSpec, "hyperparameters must be non-negative");
    if (batch_size == 0) throw Error(ErrorCode::InvalidSpec, "batch_size must be positive");
  }
};

namespace detail {

inline void check_one_hot(const Tensor& t, const char* what) {
  if (t.shape.size() != 2) throw Error(ErrorCode::ShapeMismatch, std::string(what) + " must be rank 2");
  const std::size_t cols = t.shape[1];
  for (std::size_t r = 0; r < t.shape[0]; ++r) {
    int ones = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = t.data[r * cols + c];
      if (v == 1.0) ++ones;
      else if (v != 0.0) throw Error(ErrorCode::NotOneHot, std::string(what) + " row " + std::to_string(r));
    }
    if (ones != 1) throw Error(ErrorCode::NotOneHot, std::string(what) + " row " + std::to_string(r));
  }
}

inline void check_same_shape(Var p, const Tensor& t, const char* what) {
  if (p.shape() != t.shape || p.shape().size() != 2)
    throw Error(ErrorCode::ShapeMismatch,
                std::string(what) + ": predictions " + shape_str(p.shape()) + " vs labels " + shape_str(t.shape));
}

}  // namespace detail

// -(1/n) sum_i d_i^T log(d_hat_i)
inline Var domain_loss(Var d_hat, const Tensor& d, LogClamp clamp = {}) {
  detail::check_same_shape(d_hat, d, "domain_loss");
  detail::check_one_hot(d, "domain label");
  auto& t = d_hat.tape();
  const double n = static_cast<double>(d.shape[0]);
  return affine(sum(mul(log(d_hat, clamp), t.constant(d))), -1.0 / n);
}

// -(1/n_s) sum_i y_i^T ((1 - y_hat_i)^gamma (.) log(y_hat_i))
inline Var focal_loss(Var y_hat, const Tensor& y, double gamma, LogClamp clamp = {}) {
  detail::check_same_shape(y_hat, y, "focal_loss");
  detail::check_one_hot(y, "class label");
  auto& t = y_hat.tape();
  const double n = static_cast<double>(y.shape[0]);
  Var modulator = pow(affine(y_hat, -1.0, 1.0), gamma);
  return affine(sum(mul(t.constant(y), mul(modulator, log(y_hat, clamp)))), -1.0 / n);
}

// -(1/(n_t + n_s)) sum_i y_hat_i^T log(y_hat_i)
inline Var entropy_loss(Var y_hat, LogClamp clamp = {}) {
  const Shape& s = y_hat.shape();
  if (s.size() != 2) throw Error(ErrorCode::ShapeMismatch, "entropy_loss expects [m, C], got " + shape_str(s));
  const double m = static_cast<double>(s[0]);
  return affine(sum(mul(y_hat, log(y_hat, clamp))), -1.0 / m);
}

// L_c = L_fo + eta * L_en
inline Var classification_loss(Var focal, Var entropy, double eta) {
  return add(focal, affine(entropy, eta));
}

}  // namespace m2dan
