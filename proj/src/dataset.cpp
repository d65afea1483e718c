#include "featsharp/dataset.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <stdexcept>

#include "featsharp/autodiff.hpp"
#include "featsharp/image_io.hpp"

namespace featsharp {

Grid synth_voronoi(int res, Rng& rng) {
  int n_sites = rng.uniform_int(4, 12);
  std::vector<double> sy(n_sites), sx(n_sites);
  std::vector<std::array<double, 3>> color(n_sites);
  for (int i = 0; i < n_sites; ++i) {
    sy[i] = rng.uniform(0, res);
    sx[i] = rng.uniform(0, res);
    color[i] = {rng.uniform(), rng.uniform(), rng.uniform()};
  }
  Grid img(res, res, 3);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      double best = 1e300;
      int who = 0;
      for (int i = 0; i < n_sites; ++i) {
        double dy = y + 0.5 - sy[i], dx = x + 0.5 - sx[i];
        double d = dy * dy + dx * dx;
        if (d < best) {
          best = d;
          who = i;
        }
      }
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[who][c];
    }
  }
  return img;
}

Grid synth_step_edge(int res, Rng& rng) {
  double theta = rng.uniform(0, 3.14159265358979323846);
  double cx = rng.uniform(0.3, 0.7) * res;
  double cy = rng.uniform(0.3, 0.7) * res;
  std::array<double, 3> a = {rng.uniform(), rng.uniform(), rng.uniform()};
  std::array<double, 3> b = {rng.uniform(), rng.uniform(), rng.uniform()};
  double nx = std::cos(theta), ny = std::sin(theta);
  Grid img(res, res, 3);
  for (int y = 0; y < res; ++y) {
    for (int x = 0; x < res; ++x) {
      double side = (x + 0.5 - cx) * nx + (y + 0.5 - cy) * ny;
      const auto& col = side > 0 ? a : b;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
    }
  }
  return img;
}

Grid center_crop_resize(const Grid& img, int target) {
  int h = img.height(), w = img.width();
  int new_h, new_w;
  if (h <= w) {
    new_h = target;
    new_w = static_cast<int>(std::lround(
        static_cast<double>(w) * target / static_cast<double>(h)));
  } else {
    new_w = target;
    new_h = static_cast<int>(std::lround(
        static_cast<double>(h) * target / static_cast<double>(w)));
  }
  Grid resized = bilinear_resample(img, new_h, new_w);
  int oy = (new_h - target) / 2;
  int ox = (new_w - target) / 2;
  Grid out(target, target, img.channels());
  for (int y = 0; y < target; ++y) {
    const Real* srow = resized.row(oy + y, ox);
    std::copy(srow, srow + static_cast<size_t>(target) * img.channels(),
              out.row(y, 0));
  }
  return out;
}

std::vector<Grid> ingest_dataset(const DatasetSpec& spec) {
  if (spec.resolution < 1) {
    throw std::invalid_argument("dataset: resolution must be positive");
  }
  std::vector<Grid> images;
  if (spec.path.empty()) {
    if (spec.synthetic_count < 1) {
      throw std::invalid_argument("empty dataset");
    }
    for (int i = 0; i < spec.synthetic_count; ++i) {
      Rng rng(Rng::mix(spec.seed, static_cast<uint64_t>(i)));
      images.push_back(i % 2 == 0 ? synth_voronoi(spec.resolution, rng)
                                  : synth_step_edge(spec.resolution, rng));
    }
    return images;
  }

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(spec.path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      Grid img = decode_image_file(file.string());
      images.push_back(center_crop_resize(img, spec.resolution));
    } catch (const std::exception& e) {
      std::cerr << "[dataset] warning: skipping " << file << ": " << e.what()
                << '\n';
    }
  }
  if (images.empty()) throw std::runtime_error("empty dataset");
  return images;
}

}  // namespace featsharp
