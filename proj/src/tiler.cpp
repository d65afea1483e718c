#include "featsharp/tiler.hpp"

#include <stdexcept>

namespace featsharp {

Grid crop(const Grid& src, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || y0 + h > src.height() || x0 + w > src.width()) {
    throw std::invalid_argument("crop out of bounds");
  }
  Grid out(h, w, src.channels());
  for (int y = 0; y < h; ++y) {
    const Real* srow = src.row(y0 + y, x0);
    Real* drow = out.row(y, 0);
    std::copy(srow, srow + static_cast<size_t>(w) * src.channels(), drow);
  }
  return out;
}

std::vector<Grid> make_tiles(const Grid& image, int per_side, int out_res) {
  if (per_side < 1) throw std::invalid_argument("tiles per side must be >= 1");
  if (image.empty()) throw std::invalid_argument("empty grid");
  int bh = image.height() / per_side;
  int bw = image.width() / per_side;
  if (bh < 1 || bw < 1) {
    throw std::invalid_argument("make_tiles: image smaller than tile grid");
  }
  std::vector<Grid> tiles;
  tiles.reserve(static_cast<size_t>(per_side) * per_side);
  for (int i = 0; i < per_side; ++i) {
    int y0 = i * bh;
    int h = (i == per_side - 1) ? image.height() - y0 : bh;
    for (int j = 0; j < per_side; ++j) {
      int x0 = j * bw;
      int w = (j == per_side - 1) ? image.width() - x0 : bw;
      Grid region = crop(image, y0, x0, h, w);
      if (h == out_res && w == out_res) {
        tiles.push_back(std::move(region));
      } else {
        tiles.push_back(bilinear_resample(region, out_res, out_res));
      }
    }
  }
  return tiles;
}

FeatureMap stitch(const TileGrid& tg) {
  if (tg.per_side < 1 ||
      tg.tiles.size() != static_cast<size_t>(tg.per_side) * tg.per_side) {
    throw std::invalid_argument("stitch: tile count mismatch");
  }
  std::vector<Var> vars;
  vars.reserve(tg.tiles.size());
  for (const FeatureMap& t : tg.tiles) vars.push_back(Var::constant(t));
  return stitch_blocks(vars, tg.per_side).value();
}

FeatureMap tile_upsample(const Featurizer& f, const Grid& image, int per_side,
                         const Grid* debias_bias) {
  std::vector<Grid> tiles =
      make_tiles(image, per_side, f.spec().input_resolution);
  TileGrid tg;
  tg.per_side = per_side;
  for (const Grid& t : tiles) {
    FeatureMap fm = f.featurize(t);
    if (debias_bias) fm = debias_apply(fm, *debias_bias);
    tg.tiles.push_back(std::move(fm));
  }
  return stitch(tg);
}

Var tile_mosaic(const Featurizer& f, const Grid& image, int per_side,
                const Var& debias_bias, const DistributionStats* stats) {
  std::vector<Grid> tiles =
      make_tiles(image, per_side, f.spec().input_resolution);
  std::vector<Var> feats;
  feats.reserve(tiles.size());
  for (const Grid& t : tiles) {
    Var fm = Var::constant(f.featurize(t));
    if (debias_bias.defined()) fm = debias_apply(fm, debias_bias);
    if (stats) fm = phi_s_apply(fm, *stats);
    feats.push_back(fm);
  }
  return stitch_blocks(feats, per_side);
}

Var s2_combine(const Var& lowres_up, const Var& mosaic, Real beta) {
  if (beta < 0.0 || beta > 1.0) {
    throw std::invalid_argument("s2: beta must be in [0, 1]");
  }
  if (!lowres_up.value().same_shape(mosaic.value())) {
    throw std::invalid_argument("s2: shape mismatch");
  }
  return affine_combine(lowres_up, mosaic, beta, 1.0 - beta);
}

FeatureMap s2_combine(const FeatureMap& lowres_up, const FeatureMap& mosaic,
                      Real beta) {
  return s2_combine(Var::constant(lowres_up), Var::constant(mosaic), beta)
      .value();
}

}  // namespace featsharp
