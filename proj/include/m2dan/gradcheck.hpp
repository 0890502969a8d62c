#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "m2dan/tensor.hpp"

namespace m2dan {

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = true;
  std::size_t worst_index = 0;
};

// Autodiff gradient of f at x against central differences, coordinate by
// coordinate. Relative error is |a - b| / max(|a|, |b|, 1e-8).
inline GradCheckReport grad_check(const std::function<Var(Var)>& f, const Tensor& x, double h = 1e-4,
                                  double tol = 1e-4) {
  Tensor xt = x;
  xt.requires_grad = true;
  xt.grad.reset();
  {
    Tape t;
    t.backward(f(t.leaf(xt)));
  }
  const std::vector<double> analytic = xt.grad ? *xt.grad : std::vector<double>(x.size(), 0.0);
  auto value_at = [&](const Tensor& p) {
    Tape t(false);
    return f(t.constant(p)).item();
  };
  GradCheckReport rep;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double up = value_at(probe);
    probe.data[i] = orig - h;
    const double down = value_at(probe);
    probe.data[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double e = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (e > rep.max_rel_error) {
      rep.max_rel_error = e;
      rep.worst_index = i;
    }
  }
  rep.pass = rep.max_rel_error <= tol;
  return rep;
}

}  // namespace m2dan
