#pragma once

#include <span>
#include <string>
#include <vector>

#include "featsharp/autodiff.hpp"
#include "featsharp/params.hpp"
#include "featsharp/rng.hpp"

namespace featsharp {

/// Ordered prime factors of the requested upsample amount, ascending;
/// stages are applied smallest-first.
struct StackPlan {
  std::vector<int> factors;

  int total() const {
    int t = 1;
    for (int f : factors) t *= f;
    return t;
  }
  bool empty() const { return factors.empty(); }
};

StackPlan build_stack(int z);

/// Learnable state of one joint-bilateral stage. Sigmas are stored as
/// log-values so they stay strictly positive.
struct JbuParams {
  Var log_sigma_spatial;  // (1,1,1)
  Var log_sigma_range;    // (1,1,1)
  Var w1, b1, w2, b2;     // range projector: guidance 3 -> D -> D
  int radius = 3;         // window is (2r+1)^2
  int range_dim = 32;
};

JbuParams make_jbu_params(ParameterStore& store, const std::string& prefix,
                          int radius, int range_dim, Rng& rng);

/// One joint-bilateral upsampling stage. Guidance spatial size must be
/// exactly factor x the low-res size. Per output pixel the range kernel is a
/// softmax of projected-guidance dot products over the window, multiplied by
/// a spatial Gaussian and renormalized to sum 1; low-res values are gathered
/// by bilinear lookup at the coarse coordinates of the window members.
/// Differentiable w.r.t. f_lr and every JbuParams entry.
Var jbu_upsample(const Var& f_lr, const Grid& guidance, const JbuParams& p,
                 int factor);

/// The full prime-factorized stack; guidance for each stage is the input
/// image resampled to that stage's output resolution.
Var jbu_stack_upsample(const Var& f_lr, const Grid& image,
                       std::span<const JbuParams> stage_params,
                       const StackPlan& plan);

/// Per-output-pixel mixing weights, (H, W, (2r+1)^2), for verification.
Grid jbu_weights(const Grid& guidance, const JbuParams& p);

}  // namespace featsharp
