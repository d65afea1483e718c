#pragma once

#include <vector>

#include "featsharp/autodiff.hpp"
#include "featsharp/featurizer.hpp"
#include "featsharp/phi_s.hpp"

namespace featsharp {

/// u x u tile mosaic in row-major tile order; all tiles share one shape.
struct TileGrid {
  int per_side = 1;
  std::vector<FeatureMap> tiles;
};

Grid crop(const Grid& src, int y0, int x0, int h, int w);

/// Partition into per_side x per_side regions (floor-sized; the last
/// row/column absorbs any remainder) and resize each to out_res x out_res.
/// When the image side is exactly per_side * out_res the tiles are exact
/// crops.
std::vector<Grid> make_tiles(const Grid& image, int per_side, int out_res);

/// Reassemble: tile (i, j) occupies block (i, j); output side is
/// per_side * tile side.
FeatureMap stitch(const TileGrid& tg);

/// The Tile baseline: featurize every tile (de-bias applied when given) and
/// stitch. Works in raw feature space.
FeatureMap tile_upsample(const Featurizer& f, const Grid& image, int per_side,
                         const Grid* debias_bias = nullptr);

/// Graph-building mosaic used inside the trained upsamplers: featurize each
/// tile, add the learnable de-bias buffer (if defined), normalize, stitch.
Var tile_mosaic(const Featurizer& f, const Grid& image, int per_side,
                const Var& debias_bias, const DistributionStats* stats);

/// y = beta * lowres_up + (1 - beta) * mosaic, elementwise.
Var s2_combine(const Var& lowres_up, const Var& mosaic, Real beta);
FeatureMap s2_combine(const FeatureMap& lowres_up, const FeatureMap& mosaic,
                      Real beta);

}  // namespace featsharp
