#pragma once

#include <cstdint>
#include <string>

#include "featsharp/autodiff.hpp"
#include "featsharp/grid.hpp"

namespace featsharp {

enum class FeaturizerKind { patch_linear, smooth_conv, wrapped };

std::string to_string(FeaturizerKind k);
FeaturizerKind featurizer_kind_from_string(const std::string& s);

/// Frozen-encoder description. Toy featurizers stand in for pretrained
/// backbones: their weights are fixed functions of the seed, so every
/// downstream claim can be checked against an analytic oracle.
///   patch_linear — one fixed linear map per non-overlapping patch
///                  (exactly tile-equivariant).
///   smooth_conv  — fixed Gaussian blur + pointwise nonlinearity, then
///                  patch averaging (context-dependent across patches).
///   wrapped      — patch_linear plus a fixed additive bias grid, used to
///                  exercise the de-bias buffer.
struct FeaturizerSpec {
  FeaturizerKind kind = FeaturizerKind::patch_linear;
  int patch = 4;
  int channels = 16;
  int input_resolution = 64;
  uint64_t seed = 0;

  int grid_side() const { return input_resolution / patch; }
  void validate() const;
};

class Featurizer {
 public:
  explicit Featurizer(const FeaturizerSpec& spec);

  /// Strict native-resolution featurization: the image must be exactly
  /// R x R x 3, never silently resized.
  FeatureMap featurize(const Grid& image) const;

  /// Featurize at any square resolution whose side is a multiple of the
  /// patch size (used by tiling analyses).
  FeatureMap featurize_at(const Grid& image) const;

  const FeaturizerSpec& spec() const { return spec_; }
  int grid_side() const { return spec_.grid_side(); }

  /// The fixed bias grid of a wrapped featurizer (test oracle access).
  const Grid& injected_bias() const;

 private:
  FeatureMap run(const Grid& image) const;

  FeaturizerSpec spec_;
  Grid patch_weight_;  // (C, 3*p*p, 1)
  Grid patch_bias_;    // (1, 1, C)
  Grid point_weight_;  // (C, 3, 1), smooth_conv
  Grid point_bias_;    // (1, 1, C)
  std::vector<Real> blur_kernel_;  // separable, odd length
  Grid injected_bias_;  // (R/p, R/p, C), wrapped only
};

/// De-biased featurizer output: f(x) + g, applied identically to the global
/// view and to every tile.
Var debias_apply(const Var& features, const Var& bias);
FeatureMap debias_apply(const FeatureMap& features, const Grid& bias);

}  // namespace featsharp
