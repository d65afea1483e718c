#include "featsharp/featurizer.hpp"

#include <cmath>
#include <stdexcept>

#include "featsharp/rng.hpp"

namespace featsharp {

std::string to_string(FeaturizerKind k) {
  switch (k) {
    case FeaturizerKind::patch_linear: return "patch_linear";
    case FeaturizerKind::smooth_conv: return "smooth_conv";
    case FeaturizerKind::wrapped: return "wrapped";
  }
  return "?";
}

FeaturizerKind featurizer_kind_from_string(const std::string& s) {
  if (s == "patch_linear") return FeaturizerKind::patch_linear;
  if (s == "smooth_conv") return FeaturizerKind::smooth_conv;
  if (s == "wrapped") return FeaturizerKind::wrapped;
  throw std::invalid_argument("unknown featurizer kind: " + s);
}

void FeaturizerSpec::validate() const {
  if (patch < 1 || channels < 1 || input_resolution < 1) {
    throw std::invalid_argument("featurizer spec: fields must be positive");
  }
  if (input_resolution % patch != 0) {
    throw std::invalid_argument(
        "featurizer spec: input_resolution must be a multiple of patch");
  }
}

namespace {

constexpr int kBlurRadius = 4;
constexpr Real kBlurSigma = 2.0;
constexpr Real kWrappedBiasAmp = 0.1;

Grid random_matrix(int rows, int cols, Real stddev, Rng& rng) {
  Grid g(rows, cols, 1);
  for (Real& v : g.raw()) v = stddev * rng.normal();
  return g;
}

}  // namespace

Featurizer::Featurizer(const FeaturizerSpec& spec) : spec_(spec) {
  spec_.validate();
  int p = spec_.patch;
  int c = spec_.channels;
  Rng rng(Rng::mix(spec_.seed, 0x5ea7));
  patch_weight_ = random_matrix(c, 3 * p * p, 1.0 / std::sqrt(3.0 * p * p), rng);
  patch_bias_ = Grid(1, 1, c);
  for (int k = 0; k < c; ++k) patch_bias_.at(0, 0, k) = 0.1 * rng.normal();

  point_weight_ = random_matrix(c, 3, 1.0, rng);
  point_bias_ = Grid(1, 1, c);
  for (int k = 0; k < c; ++k) point_bias_.at(0, 0, k) = 0.2 * rng.normal();

  blur_kernel_.resize(2 * kBlurRadius + 1);
  Real norm = 0.0;
  for (int i = -kBlurRadius; i <= kBlurRadius; ++i) {
    Real w = std::exp(-0.5 * i * i / (kBlurSigma * kBlurSigma));
    blur_kernel_[i + kBlurRadius] = w;
    norm += w;
  }
  for (Real& w : blur_kernel_) w /= norm;

  if (spec_.kind == FeaturizerKind::wrapped) {
    int side = spec_.grid_side();
    injected_bias_ = Grid(side, side, c);
    Rng brng(Rng::mix(spec_.seed, 0xb1a5));
    for (Real& v : injected_bias_.raw()) v = kWrappedBiasAmp * brng.normal();
  }
}

const Grid& Featurizer::injected_bias() const {
  if (spec_.kind != FeaturizerKind::wrapped) {
    throw std::runtime_error("featurizer has no injected bias");
  }
  return injected_bias_;
}

FeatureMap Featurizer::featurize(const Grid& image) const {
  if (image.height() != spec_.input_resolution ||
      image.width() != spec_.input_resolution) {
    throw std::invalid_argument("resolution mismatch");
  }
  return run(image);
}

FeatureMap Featurizer::featurize_at(const Grid& image) const {
  if (image.height() != image.width() || image.height() % spec_.patch != 0 ||
      image.height() == 0) {
    throw std::invalid_argument("resolution mismatch");
  }
  return run(image);
}

FeatureMap Featurizer::run(const Grid& image) const {
  if (image.channels() != 3) {
    throw std::invalid_argument("featurize expects a 3-channel image");
  }
  int p = spec_.patch;
  int c = spec_.channels;
  int side = image.height() / p;

  FeatureMap out(side, side, c);
  if (spec_.kind == FeaturizerKind::patch_linear ||
      spec_.kind == FeaturizerKind::wrapped) {
    std::vector<Real> patch_vec(3 * p * p);
    for (int gy = 0; gy < side; ++gy) {
      for (int gx = 0; gx < side; ++gx) {
        int idx = 0;
        for (int y = 0; y < p; ++y) {
          const Real* row = image.row(gy * p + y, gx * p);
          for (int k = 0; k < 3 * p; ++k) patch_vec[idx++] = row[k];
        }
        Real* orow = out.row(gy, gx);
        for (int co = 0; co < c; ++co) {
          const Real* wr = patch_weight_.row(co, 0);
          Real acc = patch_bias_.at(0, 0, co);
          for (int i = 0; i < 3 * p * p; ++i) acc += wr[i] * patch_vec[i];
          orow[co] = acc;
        }
      }
    }
    if (spec_.kind == FeaturizerKind::wrapped) {
      const Grid* bias = &injected_bias_;
      Grid resized;
      if (side != injected_bias_.height()) {
        resized = bilinear_resample(injected_bias_, side, side);
        bias = &resized;
      }
      for (size_t i = 0; i < out.size(); ++i) {
        out.raw()[i] += bias->raw()[i];
      }
    }
    return out;
  }

  // smooth_conv: separable Gaussian blur with replicate padding, a fixed
  // pointwise 3->C map through tanh, then patch averaging.
  int res = image.height();
  Grid blur_h(res, res, 3);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        Real acc = 0.0;
        for (int i = -kBlurRadius; i <= kBlurRadius; ++i) {
          acc += blur_kernel_[i + kBlurRadius] *
                 image.at(y, clamp_index(x + i, res), ch);
        }
        blur_h.at(y, x, ch) = acc;
      }
    }
  }
  Grid blurred(res, res, 3);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        Real acc = 0.0;
        for (int i = -kBlurRadius; i <= kBlurRadius; ++i) {
          acc += blur_kernel_[i + kBlurRadius] *
                 blur_h.at(clamp_index(y + i, res), x, ch);
        }
        blurred.at(y, x, ch) = acc;
      }
    }
  }
  Real inv_area = 1.0 / (static_cast<Real>(p) * p);
  for (int gy = 0; gy < side; ++gy) {
    for (int gx = 0; gx < side; ++gx) {
      Real* orow = out.row(gy, gx);
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          const Real* px = blurred.row(gy * p + y, gx * p + x);
          for (int co = 0; co < c; ++co) {
            const Real* wr = point_weight_.row(co, 0);
            Real z = point_bias_.at(0, 0, co) + wr[0] * px[0] +
                     wr[1] * px[1] + wr[2] * px[2];
            orow[co] += std::tanh(z);
          }
        }
      }
      for (int co = 0; co < c; ++co) orow[co] *= inv_area;
    }
  }
  return out;
}

Var debias_apply(const Var& features, const Var& bias) {
  if (!features.value().same_shape(bias.value())) {
    throw std::invalid_argument("debias: shape mismatch");
  }
  return add(features, bias);
}

FeatureMap debias_apply(const FeatureMap& features, const Grid& bias) {
  if (!features.same_shape(bias)) {
    throw std::invalid_argument("debias: shape mismatch");
  }
  FeatureMap out = features;
  for (size_t i = 0; i < out.size(); ++i) out.raw()[i] += bias.raw()[i];
  return out;
}

}  // namespace featsharp
