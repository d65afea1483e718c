#include "featsharp/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "featsharp/checkpoint.hpp"
#include "featsharp/parallel.hpp"
#include "featsharp/upsampler.hpp"

namespace featsharp {

void TrainConfig::validate() const {
  if (steps < 0 || batch_size < 1 || num_workers < 1 || num_jitters < 1) {
    throw std::invalid_argument("train config: counts must be positive");
  }
  if (learning_rate <= 0 || eps <= 0 || beta1 < 0 || beta1 >= 1 ||
      beta2 < 0 || beta2 >= 1) {
    throw std::invalid_argument("train config: bad optimizer settings");
  }
  if (factor < 2) {
    throw std::invalid_argument("train config: factor must be >= 2");
  }
  if (scale_min < 1.0 || scale_max < scale_min || shift_max < 0 ||
      hflip_prob < 0 || hflip_prob > 1 || rotation_max_deg < 0 ||
      perspective_max < 0) {
    throw std::invalid_argument("train config: bad augmentation ranges");
  }
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("train config: window must be odd");
  }
  if (s2_beta < 0 || s2_beta > 1) {
    throw std::invalid_argument("train config: s2_beta must be in [0,1]");
  }
  (void)upsampler_from_string(upsampler);
  (void)block_mode_from_string(block_mode);
  if (featsharp_residual != "jbu" && featsharp_residual != "bilinear") {
    throw std::invalid_argument("train config: bad featsharp_residual");
  }
}

uint64_t TrainConfig::digest() const {
  char buf[1024];
  std::snprintf(
      buf, sizeof(buf),
      "%d|%d|%d|%.17g|%d|%.17g|%.17g|%.17g|%d|%s|%d|%d|%s|%s|%d|%d|%d|%.17g|"
      "%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%llu|%d",
      steps, batch_size, num_workers, learning_rate, num_jitters, beta1,
      beta2, eps, factor, upsampler.c_str(), use_debias ? 1 : 0, window,
      block_mode.c_str(), featsharp_residual.c_str(), jbu_radius, range_dim,
      downsampler_window, s2_beta, scale_min, scale_max, shift_max,
      hflip_prob, rotation_max_deg, perspective_max,
      static_cast<unsigned long long>(seed), checkpoint_interval);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = buf; *p; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  return h;
}

ViewTransform sample_view_transform(Rng& rng, const TrainConfig& cfg) {
  ViewTransform t;
  t.scale = rng.uniform(cfg.scale_min, cfg.scale_max);
  t.shift_x = rng.uniform(-cfg.shift_max, cfg.shift_max);
  t.shift_y = rng.uniform(-cfg.shift_max, cfg.shift_max);
  t.hflip = rng.bernoulli(cfg.hflip_prob);
  double rot_max = cfg.rotation_max_deg * 3.14159265358979323846 / 180.0;
  t.rotation = rng.uniform(-rot_max, rot_max);
  for (double& p : t.perspective) {
    p = rng.uniform(-cfg.perspective_max, cfg.perspective_max);
  }
  return t;
}

Trainer::Trainer(UpsamplerModel& model, const TrainConfig& cfg)
    : model_(model),
      cfg_(cfg),
      opt_(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps),
      aug_rng_(Rng::mix(cfg.seed, 0xA06)),
      batch_rng_(Rng::mix(cfg.seed, 0xBA7C)) {
  cfg_.validate();
}

double Trainer::training_step(std::span<const Grid> images_hr) {
  int r = model_.featurizer().spec().input_resolution;
  int hi = model_.hi_res_side();

  model_.params().zero_grads();
  Var total;
  int terms = 0;
  for (const Grid& image_hr : images_hr) {
    Grid image_r = (image_hr.height() == r && image_hr.width() == r)
                       ? image_hr
                       : bilinear_resample(image_hr, r, r);
    Var f_lr = model_.normalized_features(image_r);
    Var f_hr = model_.upsample_from(f_lr, image_hr);
    for (int j = 0; j < cfg_.num_jitters; ++j) {
      ViewTransform t = sample_view_transform(aug_rng_, cfg_);
      Var pred = model_.downsample(warp_apply(f_hr, t, hi, hi));
      Grid warped_img = warp_apply(image_r, t, r, r);
      Var target = model_.normalized_features(warped_img);
      Var term = mse(pred, target);
      total = total.defined() ? add(total, term) : term;
      ++terms;
    }
  }
  Var loss = scale(total, 1.0 / static_cast<double>(terms));
  double loss_val = loss.value().scalar_value();
  if (!std::isfinite(loss_val)) {
    throw std::runtime_error(
        "non-finite loss at step " + std::to_string(step_index_) +
        " (config seed " + std::to_string(cfg_.seed) + ")");
  }
  backward(loss);
  opt_.step(model_.params());
  ++step_index_;
  return loss_val;
}

TrainResult Trainer::train(std::span<const Grid> dataset_hr,
                           const std::string& checkpoint_path) {
  if (dataset_hr.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  int per_step = cfg_.batch_size * cfg_.num_workers;
  std::vector<Grid> batch;
  for (int step = 0; step < cfg_.steps; ++step) {
    batch.clear();
    for (int i = 0; i < per_step; ++i) {
      size_t idx = static_cast<size_t>(batch_rng_.next_u64() %
                                       dataset_hr.size());
      batch.push_back(dataset_hr[idx]);
    }
    loss_trace_.push_back(training_step(batch));
    if (!checkpoint_path.empty() && cfg_.checkpoint_interval > 0 &&
        (step + 1) % cfg_.checkpoint_interval == 0) {
      Checkpoint::from_model(model_, static_cast<uint64_t>(step + 1))
          .save(checkpoint_path);
    }
  }
  if (!checkpoint_path.empty()) {
    Checkpoint::from_model(model_, static_cast<uint64_t>(cfg_.steps))
        .save(checkpoint_path);
  }
  TrainResult result;
  result.loss_trace = loss_trace_;
  result.final_step = static_cast<uint64_t>(cfg_.steps);
  return result;
}

MetricsReport evaluate(UpsamplerModel& model,
                       std::span<const Grid> dataset_hr,
                       const EvalConfig& eval_cfg) {
  if (dataset_hr.empty()) {
    throw std::invalid_argument("evaluate: empty dataset");
  }
  const TrainConfig& cfg = model.config();
  int r = model.featurizer().spec().input_resolution;
  int hi = model.hi_res_side();
  int n = static_cast<int>(dataset_hr.size());

  struct PerImage {
    std::vector<FeatureMap> preds, targets;
    double tv = 0.0;
    CrfResult crf;
    FeatureMap f_lr, f_hr;
  };
  std::vector<PerImage> slots(n);

  parallel_for(0, n, [&](int i) {
    const Grid& image_hr = dataset_hr[i];
    PerImage& out = slots[i];
    Grid image_r = (image_hr.height() == r && image_hr.width() == r)
                       ? image_hr
                       : bilinear_resample(image_hr, r, r);
    Var f_lr = model.normalized_features(image_r);
    Var f_hr = model.upsample_from(f_lr, image_hr);
    out.f_lr = f_lr.value();
    out.f_hr = f_hr.value();
    out.tv = tv_loss(f_hr.value());
    Grid guidance = bilinear_resample(image_hr, hi, hi);
    out.crf = crf_loss(f_hr.value(), guidance);
    Rng rng(Rng::mix(eval_cfg.seed, static_cast<uint64_t>(i)));
    for (int j = 0; j < eval_cfg.num_jitters; ++j) {
      ViewTransform t = sample_view_transform(rng, cfg);
      out.preds.push_back(
          model.downsample(warp_apply(f_hr, t, hi, hi)).value());
      Grid warped_img = warp_apply(image_r, t, r, r);
      out.targets.push_back(model.normalized_features(warped_img).value());
    }
  });

  std::vector<FeatureMap> preds, targets;
  double tv_acc = 0.0;
  CrfResult crf_acc;
  std::vector<std::vector<Real>> lo_vecs, hi_vecs;
  for (int i = 0; i < n; ++i) {
    PerImage& s = slots[i];
    for (auto& p : s.preds) preds.push_back(std::move(p));
    for (auto& t : s.targets) targets.push_back(std::move(t));
    tv_acc += s.tv;
    crf_acc.value += s.crf.value;
    crf_acc.skipped_pairs += s.crf.skipped_pairs;
    for (auto& v : flatten_vectors(s.f_lr)) lo_vecs.push_back(std::move(v));
    for (auto& v : flatten_vectors(s.f_hr)) hi_vecs.push_back(std::move(v));
  }

  auto subsample = [](std::vector<std::vector<Real>>& vecs, size_t cap) {
    if (vecs.size() <= cap) return;
    std::vector<std::vector<Real>> picked;
    picked.reserve(cap);
    double stride = static_cast<double>(vecs.size()) / static_cast<double>(cap);
    for (size_t i = 0; i < cap; ++i) {
      picked.push_back(std::move(vecs[static_cast<size_t>(i * stride)]));
    }
    vecs.swap(picked);
  };
  subsample(lo_vecs, static_cast<size_t>(eval_cfg.mmd_max_samples));
  subsample(hi_vecs, static_cast<size_t>(eval_cfg.mmd_max_samples));

  MetricsReport report;
  report.fidelity = fidelity(preds, targets);
  report.tv = tv_acc / n;
  report.crf.value = crf_acc.value / n;
  report.crf.skipped_pairs = crf_acc.skipped_pairs;
  report.mmd2 = mmd2_unbiased(lo_vecs, hi_vecs, median_gamma(lo_vecs));
  report.seed = eval_cfg.seed;
  report.config_digest = cfg.digest();
  return report;
}

}  // namespace featsharp
