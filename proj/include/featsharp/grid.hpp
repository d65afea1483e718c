#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace featsharp {

using Real = double;

/// Dense rank-3 grid (height x width x channels), row-major with channels
/// innermost. The universal value type of the pipeline: images, feature
/// maps, and parameter tensors are all Grids.
class Grid {
 public:
  Grid() = default;

  Grid(int height, int width, int channels, Real fill = 0.0)
      : h_(height), w_(width), c_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0) {
      throw std::invalid_argument("empty grid");
    }
    data_.assign(static_cast<size_t>(height) * width * channels, fill);
  }

  static Grid from_data(int height, int width, int channels,
                        std::vector<Real> data) {
    Grid g(height, width, channels);
    if (data.size() != g.data_.size()) {
      throw std::invalid_argument("grid data length mismatch");
    }
    g.data_ = std::move(data);
    return g;
  }

  static Grid scalar(Real v) {
    Grid g(1, 1, 1);
    g.data_[0] = v;
    return g;
  }

  int height() const { return h_; }
  int width() const { return w_; }
  int channels() const { return c_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  Real& at(int y, int x, int c) {
    return data_[(static_cast<size_t>(y) * w_ + x) * c_ + c];
  }
  Real at(int y, int x, int c) const {
    return data_[(static_cast<size_t>(y) * w_ + x) * c_ + c];
  }

  Real* row(int y, int x) { return &data_[(static_cast<size_t>(y) * w_ + x) * c_]; }
  const Real* row(int y, int x) const {
    return &data_[(static_cast<size_t>(y) * w_ + x) * c_];
  }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::vector<Real>& raw() { return data_; }
  const std::vector<Real>& raw() const { return data_; }

  bool same_shape(const Grid& o) const {
    return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
  }

  bool is_scalar() const { return h_ == 1 && w_ == 1 && c_ == 1; }

  Real scalar_value() const {
    if (!is_scalar()) throw std::runtime_error("grid is not scalar");
    return data_[0];
  }

  void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (Real v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  int h_ = 0, w_ = 0, c_ = 0;
  std::vector<Real> data_;
};

/// Feature maps are grids with one feature vector per spatial cell.
using FeatureMap = Grid;

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

/// Bilinear lookup at fractional pixel coordinates, clamping to the edge.
/// Coordinates are pixel-centered: (0, 0) is the center of the top-left pixel.
inline Real sample_bilinear(const Grid& g, Real y, Real x, int c) {
  int y0 = static_cast<int>(std::floor(y));
  int x0 = static_cast<int>(std::floor(x));
  Real fy = y - y0;
  Real fx = x - x0;
  int y0c = clamp_index(y0, g.height());
  int y1c = clamp_index(y0 + 1, g.height());
  int x0c = clamp_index(x0, g.width());
  int x1c = clamp_index(x0 + 1, g.width());
  Real v00 = g.at(y0c, x0c, c);
  Real v01 = g.at(y0c, x1c, c);
  Real v10 = g.at(y1c, x0c, c);
  Real v11 = g.at(y1c, x1c, c);
  Real top = v00 + (v01 - v00) * fx;
  Real bot = v10 + (v11 - v10) * fx;
  return top + (bot - top) * fy;
}

}  // namespace featsharp
