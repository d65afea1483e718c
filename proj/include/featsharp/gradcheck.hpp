#pragma once

#include <functional>
#include <string>
#include <vector>

#include "featsharp/autodiff.hpp"

namespace featsharp {

/// Central finite-difference check of every entry of every leaf against the
/// reverse-mode gradient; build_loss must rebuild the graph from the current
/// leaf values and return a scalar. Returns the worst relative error, with
/// max(|analytic|, |numeric|, 1) in the denominator.
double finite_diff_check(const std::function<Var()>& build_loss,
                         std::vector<Var> leaves, double step = 1e-3);

struct GradSuiteEntry {
  std::string group;
  double max_rel_err = 0.0;
};

/// Finite-difference sweep over every learnable family at small sizes:
/// JBU sigmas and range projector, the sharpen block, the de-bias buffer and
/// the downsampler, each driven through a composite forward pass.
std::vector<GradSuiteEntry> run_gradient_suite(uint64_t seed = 0);

}  // namespace featsharp
