#pragma once

#include <string>

#include "featsharp/autodiff.hpp"
#include "featsharp/params.hpp"
#include "featsharp/rng.hpp"

namespace featsharp {

/// Learned convex pooling: per low-res cell, a k x k hi-res window is
/// gathered around the cell center and combined with softmax weights
/// computed from a per-pixel salience score plus a learnable spatial bias.
struct DownsamplerParams {
  Var salience_w;    // (1, C, 1): linear map feature -> scalar logit
  Var spatial_bias;  // (k, k, 1) logits
  int k = 7;         // odd, >= factor
  int factor = 2;
};

DownsamplerParams make_downsampler_params(ParameterStore& store,
                                          const std::string& prefix,
                                          int channels, int k, int factor,
                                          Rng& rng);

/// Hi-res side must be divisible by the factor. Differentiable w.r.t. the
/// input features, the salience projector and the spatial bias.
Var attention_downsample(const Var& f_hr, const DownsamplerParams& p);

/// Pooling weights per output cell, (H_lo, W_lo, k*k), zeros in
/// edge-clipped slots.
Grid attention_downsample_weights(const Grid& f_hr,
                                  const DownsamplerParams& p);

}  // namespace featsharp
