#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featsharp/downsample.hpp"
#include "featsharp/featurizer.hpp"
#include "featsharp/jbu.hpp"
#include "featsharp/metrics.hpp"
#include "featsharp/params.hpp"
#include "featsharp/phi_s.hpp"
#include "featsharp/sharpen.hpp"
#include "featsharp/trainer.hpp"

namespace featsharp {

enum class UpsamplerKind { bilinear, jbu, tile, s2, featsharp };

std::string to_string(UpsamplerKind k);
UpsamplerKind upsampler_from_string(const std::string& s);

/// Owns every learnable tensor of one upsampling setup: JBU stage sigmas and
/// range projectors, the FeatSharp block, the de-bias buffer and the
/// attention downsampler, plus the frozen featurizer and PHI-S statistics.
class UpsamplerModel {
 public:
  UpsamplerModel(const FeaturizerSpec& fspec, const TrainConfig& cfg);

  /// Fits PHI-S statistics on raw featurizer outputs (before de-biasing) of
  /// the given hi-res images, each resized to the featurizer resolution.
  void fit_stats(std::span<const Grid> images_hr);
  void set_stats(DistributionStats s) { stats_ = std::move(s); }
  const DistributionStats& stats() const { return stats_; }

  const Featurizer& featurizer() const { return featurizer_; }
  const TrainConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  UpsamplerKind kind() const { return kind_; }

  int native_side() const { return featurizer_.grid_side(); }
  int hi_res_side() const { return native_side() * cfg_.factor; }
  bool has_debias() const { return debias_g_.defined(); }
  Var debias_buffer() const { return debias_g_; }

  /// featurize + de-bias + PHI-S at the native resolution (image must be
  /// exactly R x R).
  Var normalized_features(const Grid& image_r);

  /// Builds the configured upsampler's prediction from normalized low-res
  /// features, with the hi-res image (R * z per side) as guidance.
  Var upsample_from(const Var& f_lr_norm, const Grid& image_hr);

  /// Convenience: normalized_features of the resized image, then
  /// upsample_from.
  Var upsample(const Grid& image_hr);

  Var downsample(const Var& f_hr);

  /// Base-model inferences needed per image: 1 for single-view upsamplers,
  /// z^2 for tiling, z^2 + 1 when the global view is used as well.
  int featurizer_evals_per_image() const;

 private:
  TrainConfig cfg_;
  UpsamplerKind kind_;
  Featurizer featurizer_;
  ParameterStore params_;
  DistributionStats stats_;
  StackPlan plan_;
  std::vector<JbuParams> jbu_stages_;
  std::optional<SharpenParams> sharpen_;
  DownsamplerParams downsampler_;
  Var debias_g_;
};

/// Wall-clock timing of the configured upsamplers at desk scale. Asserts
/// nothing about absolute numbers; hardware-dependent.
std::vector<ThroughputRow> throughput_bench(
    const FeaturizerSpec& fspec, std::span<const UpsamplerKind> kinds,
    std::span<const int> factors, int repeats = 3);

}  // namespace featsharp
