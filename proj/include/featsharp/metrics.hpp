#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "featsharp/featurizer.hpp"
#include "featsharp/grid.hpp"
#include "featsharp/phi_s.hpp"

namespace featsharp {

/// MSE(Y, mean(Y)) / MSE(X, Y): how much better the predictions X explain
/// the targets Y than the constant per-channel mean predictor. One global
/// ratio over the whole set; higher is better. A zero prediction error is
/// reported as an explicit infinite flag, never as a silent number.
struct FidelityResult {
  double value = 0.0;
  bool infinite = false;
};
FidelityResult fidelity(std::span<const FeatureMap> predictions,
                        std::span<const FeatureMap> targets);

/// Mean squared difference between horizontally and vertically adjacent
/// feature vectors.
double tv_loss(const FeatureMap& f);

/// Diagnostic only, never part of any gradient: over all position pairs
/// within the given Chebyshev radius, the mean of w_ij * (1 - cos(F_i, F_j))
/// with w_ij = exp(-||g_i - g_j||^2 / (2 sigma_g^2)). Pairs with a zero-norm
/// feature vector are skipped and counted.
struct CrfResult {
  double value = 0.0;
  long skipped_pairs = 0;
};
CrfResult crf_loss(const FeatureMap& f, const Grid& guidance,
                   double sigma_g = 0.15, int radius = 3);

/// Unbiased two-sample MMD^2 with an RBF kernel exp(-gamma ||x - y||^2);
/// the two self terms exclude the i == j diagonal.
double mmd2_unbiased(const std::vector<std::vector<Real>>& x,
                     const std::vector<std::vector<Real>>& y, double gamma);

/// Median heuristic: gamma = 1 / median of pairwise squared distances
/// within x (i != j). All-identical points have no usable bandwidth.
double median_gamma(const std::vector<std::vector<Real>>& x);

std::vector<std::vector<Real>> flatten_vectors(const FeatureMap& fm);

/// Over-tiling analysis: for each tile level u, the image is resized to
/// R*u (so tiles are exact crops), featurized both whole and tiled, and the
/// two PHI-S-normalized maps are compared by MSE.
std::vector<std::pair<int, double>> tiling_error(
    const Featurizer& f, const Grid& image, std::span<const int> levels,
    const DistributionStats* stats = nullptr);

/// Relative cost of progressive tiled evaluation, f(x) = c*x(x+1)(2x+1)/6,
/// against running the base model on the hi-res input, g(x) = c*x^4.
struct CostRow {
  long long x = 0;
  double f = 0.0;
  double g = 0.0;
};
CostRow cost_model(long long x, double c);

/// Verifies the closed form against the loop sum and f <= g for all
/// 2 <= x <= max_x (with equality at x = 1), in exact integer arithmetic.
bool cost_proof_check(long long max_x);

struct ThroughputRow {
  std::string upsampler;
  int factor = 0;
  int featurizer_evals = 0;
  long long out_tokens = 0;
  double ms_per_image = 0.0;
  double us_per_token = 0.0;
};
void write_throughput_csv(std::ostream& os,
                          std::span<const ThroughputRow> rows);

struct MetricsReport {
  FidelityResult fidelity;
  double tv = 0.0;
  CrfResult crf;
  double mmd2 = 0.0;
  std::vector<std::pair<int, double>> tiling_errors;
  std::vector<CostRow> cost;
  uint64_t seed = 0;
  uint64_t config_digest = 0;

  void write_csv(std::ostream& os) const;
  std::string to_json() const;
};

}  // namespace featsharp
