#include "featsharp/upsampler.hpp"

#include <chrono>
#include <sstream>
#include <stdexcept>

#include "featsharp/tiler.hpp"

namespace featsharp {

std::string to_string(UpsamplerKind k) {
  switch (k) {
    case UpsamplerKind::bilinear: return "bilinear";
    case UpsamplerKind::jbu: return "jbu";
    case UpsamplerKind::tile: return "tile";
    case UpsamplerKind::s2: return "s2";
    case UpsamplerKind::featsharp: return "featsharp";
  }
  return "?";
}

UpsamplerKind upsampler_from_string(const std::string& s) {
  if (s == "bilinear") return UpsamplerKind::bilinear;
  if (s == "jbu") return UpsamplerKind::jbu;
  if (s == "tile") return UpsamplerKind::tile;
  if (s == "s2") return UpsamplerKind::s2;
  if (s == "featsharp") return UpsamplerKind::featsharp;
  throw std::invalid_argument("unknown upsampler: " + s);
}

UpsamplerModel::UpsamplerModel(const FeaturizerSpec& fspec,
                               const TrainConfig& cfg)
    : cfg_(cfg),
      kind_(upsampler_from_string(cfg.upsampler)),
      featurizer_(fspec) {
  cfg_.validate();
  int c = fspec.channels;
  Rng rng(Rng::mix(cfg_.seed, 0xC0DE));

  if (cfg_.use_debias) {
    int side = featurizer_.grid_side();
    debias_g_ = params_.create("debias.g", Grid(side, side, c));
  }

  bool wants_jbu =
      kind_ == UpsamplerKind::jbu ||
      (kind_ == UpsamplerKind::featsharp && cfg_.featsharp_residual == "jbu");
  plan_ = build_stack(cfg_.factor);
  if (wants_jbu) {
    for (size_t s = 0; s < plan_.factors.size(); ++s) {
      jbu_stages_.push_back(make_jbu_params(params_,
                                            "jbu." + std::to_string(s),
                                            cfg_.jbu_radius, cfg_.range_dim,
                                            rng));
    }
  }

  if (kind_ == UpsamplerKind::featsharp) {
    sharpen_ = make_sharpen_params(params_, "sharpen", 2 * c, cfg_.window,
                                   block_mode_from_string(cfg_.block_mode),
                                   rng);
  }

  int k = cfg_.downsampler_window;
  while (k < cfg_.factor) k += 2;  // keep k odd and >= factor
  downsampler_ =
      make_downsampler_params(params_, "downsampler", c, k, cfg_.factor, rng);

  // Identity statistics until fitted.
  stats_.mean.assign(c, 0.0);
  stats_.rotation = Grid(c, c, 1);
  for (int i = 0; i < c; ++i) stats_.rotation.at(i, i, 0) = 1.0;
  stats_.scale = 1.0;
}

void UpsamplerModel::fit_stats(std::span<const Grid> images_hr) {
  int r = featurizer_.spec().input_resolution;
  std::vector<FeatureMap> samples;
  samples.reserve(images_hr.size());
  for (const Grid& img : images_hr) {
    Grid at_r = (img.height() == r && img.width() == r)
                    ? img
                    : bilinear_resample(img, r, r);
    samples.push_back(featurizer_.featurize(at_r));
  }
  stats_ = phi_s_fit(samples);
}

Var UpsamplerModel::normalized_features(const Grid& image_r) {
  Var f = Var::constant(featurizer_.featurize(image_r));
  if (debias_g_.defined()) f = debias_apply(f, debias_g_);
  return phi_s_apply(f, stats_);
}

Var UpsamplerModel::upsample_from(const Var& f_lr_norm, const Grid& image_hr) {
  int hi = hi_res_side();
  switch (kind_) {
    case UpsamplerKind::bilinear:
      return bilinear_resample(f_lr_norm, hi, hi);
    case UpsamplerKind::jbu:
      return jbu_stack_upsample(f_lr_norm, image_hr, jbu_stages_, plan_);
    case UpsamplerKind::tile:
      return tile_mosaic(featurizer_, image_hr, cfg_.factor, debias_g_,
                         &stats_);
    case UpsamplerKind::s2: {
      Var lo = bilinear_resample(f_lr_norm, hi, hi);
      Var mosaic = tile_mosaic(featurizer_, image_hr, cfg_.factor, debias_g_,
                               &stats_);
      return s2_combine(lo, mosaic, cfg_.s2_beta);
    }
    case UpsamplerKind::featsharp: {
      Var residual = cfg_.featsharp_residual == "jbu"
                         ? jbu_stack_upsample(f_lr_norm, image_hr,
                                              jbu_stages_, plan_)
                         : bilinear_resample(f_lr_norm, hi, hi);
      Var mosaic = tile_mosaic(featurizer_, image_hr, cfg_.factor, debias_g_,
                               &stats_);
      return featsharp_combine(residual, mosaic, *sharpen_);
    }
  }
  throw std::logic_error("unreachable upsampler kind");
}

Var UpsamplerModel::upsample(const Grid& image_hr) {
  int r = featurizer_.spec().input_resolution;
  Grid image_r = (image_hr.height() == r && image_hr.width() == r)
                     ? image_hr
                     : bilinear_resample(image_hr, r, r);
  return upsample_from(normalized_features(image_r), image_hr);
}

Var UpsamplerModel::downsample(const Var& f_hr) {
  return attention_downsample(f_hr, downsampler_);
}

int UpsamplerModel::featurizer_evals_per_image() const {
  int z = cfg_.factor;
  switch (kind_) {
    case UpsamplerKind::bilinear:
    case UpsamplerKind::jbu:
      return 1;
    case UpsamplerKind::tile:
      return z * z;
    case UpsamplerKind::s2:
    case UpsamplerKind::featsharp:
      return z * z + 1;
  }
  return 1;
}

std::vector<ThroughputRow> throughput_bench(
    const FeaturizerSpec& fspec, std::span<const UpsamplerKind> kinds,
    std::span<const int> factors, int repeats) {
  std::vector<ThroughputRow> rows;
  for (UpsamplerKind kind : kinds) {
    for (int z : factors) {
      TrainConfig cfg;
      cfg.factor = z;
      cfg.upsampler = to_string(kind);
      UpsamplerModel model(fspec, cfg);
      Rng rng(1);
      int hi_px = fspec.input_resolution * z;
      Grid image(hi_px, hi_px, 3);
      for (Real& v : image.raw()) v = rng.uniform();
      std::vector<Grid> one = {image};
      model.fit_stats(one);

      model.upsample(image);  // warm up
      auto t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < repeats; ++i) (void)model.upsample(image);
      auto t1 = std::chrono::steady_clock::now();
      double ms =
          std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;

      ThroughputRow row;
      row.upsampler = to_string(kind);
      row.factor = z;
      row.featurizer_evals = model.featurizer_evals_per_image();
      row.out_tokens = static_cast<long long>(model.hi_res_side()) *
                       model.hi_res_side();
      row.ms_per_image = ms;
      row.us_per_token = 1000.0 * ms / static_cast<double>(row.out_tokens);
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace featsharp
