#pragma once

#include <span>
#include <vector>

#include "featsharp/autodiff.hpp"
#include "featsharp/grid.hpp"

namespace featsharp {

/// Distortion-free standardization statistics: centering, a single
/// orthogonal rotation (Hadamard composed with the PCA basis), and one
/// global scale. Invertible back to the original feature space.
struct DistributionStats {
  std::vector<Real> mean;  // length C
  Grid rotation;           // (C, C, 1), orthogonal
  Real scale = 1.0;

  int channels() const { return static_cast<int>(mean.size()); }
};

/// Fits statistics over the pooled feature vectors of the sample maps.
/// Requires at least C + 1 vectors; a rank-deficient covariance is
/// regularized with 1e-6 * I and a warning.
DistributionStats phi_s_fit(std::span<const FeatureMap> samples);

/// v -> rotation * (v - mean) / scale, per feature vector.
FeatureMap phi_s_apply(const FeatureMap& fm, const DistributionStats& s);
FeatureMap phi_s_invert(const FeatureMap& fm, const DistributionStats& s);

/// Graph version (fixed statistics; differentiable w.r.t. the features).
Var phi_s_apply(const Var& fm, const DistributionStats& s);

/// Normalized Hadamard matrix for power-of-two sizes; seeded random
/// orthogonal matrix otherwise.
Grid phi_s_rotation_factor(int channels);

}  // namespace featsharp
