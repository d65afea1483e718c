#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "featsharp/metrics.hpp"
#include "featsharp/optimizer.hpp"
#include "featsharp/rng.hpp"
#include "featsharp/view_transform.hpp"

namespace featsharp {

class UpsamplerModel;

/// Everything a training or evaluation run needs. Serialized 1:1 into the
/// JSON run config; unknown keys there are rejected.
struct TrainConfig {
  // schedule
  int steps = 3000;        // 9000 for the long recipe
  int batch_size = 4;      // per worker
  int num_workers = 1;     // images per step = batch_size * num_workers
  double learning_rate = 1e-4;
  int num_jitters = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // model
  int factor = 2;  // upsample amount z
  std::string upsampler = "featsharp";  // bilinear|jbu|tile|s2|featsharp
  bool use_debias = true;
  int window = 5;
  std::string block_mode = "attention_mlp";
  std::string featsharp_residual = "jbu";  // jbu|bilinear
  int jbu_radius = 3;
  int range_dim = 32;
  int downsampler_window = 7;
  double s2_beta = 0.5;
  // multi-view augmentation ranges
  double scale_min = 1.0;
  double scale_max = 1.8;
  double shift_max = 0.2;
  double hflip_prob = 0.5;
  double rotation_max_deg = 15.0;
  double perspective_max = 0.05;
  // misc
  uint64_t seed = 0;
  int checkpoint_interval = 1000;

  void validate() const;
  uint64_t digest() const;  // FNV-1a over the canonical field string
};

/// Draws one multi-view jitter. Field order of the draws is fixed: scale,
/// shift x/y, hflip, rotation, perspective[0..7].
ViewTransform sample_view_transform(Rng& rng, const TrainConfig& cfg);

struct TrainResult {
  std::vector<double> loss_trace;
  uint64_t final_step = 0;
};

/// Multi-view-consistency training: per image the de-biased, normalized
/// low-res features are upsampled once, then each jitter's warped prediction
/// is downsampled and regressed (plain MSE) onto the featurizer's output for
/// the identically warped image.
class Trainer {
 public:
  Trainer(UpsamplerModel& model, const TrainConfig& cfg);

  /// One optimizer update over a batch of hi-res (R * z) images.
  double training_step(std::span<const Grid> images_hr);

  /// Runs the step loop with periodic checkpointing (checkpoint_path empty
  /// disables writing).
  TrainResult train(std::span<const Grid> dataset_hr,
                    const std::string& checkpoint_path = "");

  const std::vector<double>& loss_trace() const { return loss_trace_; }

 private:
  UpsamplerModel& model_;
  TrainConfig cfg_;
  NAdam opt_;
  Rng aug_rng_;
  Rng batch_rng_;
  long long step_index_ = 0;
  std::vector<double> loss_trace_;
};

struct EvalConfig {
  uint64_t seed = 1234;
  int num_jitters = 5;
  int mmd_max_samples = 256;
};

/// Fidelity / TV / CRF / MMD on a held-out set; no gradient work.
MetricsReport evaluate(UpsamplerModel& model,
                       std::span<const Grid> dataset_hr,
                       const EvalConfig& eval_cfg);

}  // namespace featsharp
