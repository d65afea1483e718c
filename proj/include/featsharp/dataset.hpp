#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "featsharp/grid.hpp"
#include "featsharp/rng.hpp"

namespace featsharp {

/// Either a folder of PNG/PPM images or a seeded synthetic set of Voronoi
/// and step-edge images.
struct DatasetSpec {
  std::string path;         // empty selects synthetic generation
  int synthetic_count = 0;  // number of synthetic images
  uint64_t seed = 0;
  int resolution = 128;     // square output side
};

/// Decoded images at the configured resolution. Unreadable files are
/// skipped with a warning; an empty result is an error.
std::vector<Grid> ingest_dataset(const DatasetSpec& spec);

Grid synth_voronoi(int res, Rng& rng);
Grid synth_step_edge(int res, Rng& rng);

/// Aspect-preserving resize (short side to target) followed by a centered
/// target x target crop.
Grid center_crop_resize(const Grid& img, int target);

}  // namespace featsharp
