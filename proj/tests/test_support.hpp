#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "featsharp/autodiff.hpp"
#include "featsharp/rng.hpp"

namespace featsharp::test {

inline Grid random_grid(int h, int w, int c, Rng& rng, Real scale = 1.0) {
  Grid g(h, w, c);
  for (Real& v : g.raw()) v = scale * rng.normal();
  return g;
}

inline Grid random_image(int h, int w, Rng& rng) {
  Grid g(h, w, 3);
  for (Real& v : g.raw()) v = rng.uniform();
  return g;
}

inline double max_abs_diff(const Grid& a, const Grid& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
  }
  return m;
}

/// Central finite-difference check of every entry of every leaf against the
/// reverse-mode gradient. Relative error uses max(|analytic|, |numeric|, 1)
/// in the denominator. build_loss must rebuild the graph from the current
/// leaf values and return a scalar.
inline double finite_diff_check(const std::function<Var()>& build_loss,
                                std::vector<Var> leaves, double h = 1e-3) {
  for (Var& v : leaves) v.zero_grad();
  Var loss = build_loss();
  backward(loss);

  double max_rel = 0.0;
  for (Var& leaf : leaves) {
    Grid base = leaf.value();
    Grid analytic = leaf.node_->grad.empty()
                        ? Grid(base.height(), base.width(), base.channels())
                        : leaf.node_->grad;
    for (size_t i = 0; i < base.size(); ++i) {
      Grid up = base;
      up.raw()[i] += h;
      leaf.set_value(up);
      double fp = build_loss().value().scalar_value();
      Grid dn = base;
      dn.raw()[i] -= h;
      leaf.set_value(dn);
      double fm = build_loss().value().scalar_value();
      leaf.set_value(base);
      double numeric = (fp - fm) / (2.0 * h);
      double a = analytic.raw()[i];
      double rel = std::abs(a - numeric) /
                   std::max({std::abs(a), std::abs(numeric), 1.0});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace featsharp::test
