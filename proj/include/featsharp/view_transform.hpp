#pragma once

#include <array>

namespace featsharp {

/// 3x3 homography acting on normalized image coordinates (u, v) in [0, 1]^2.
struct Homography {
  // row-major
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return Homography{}; }
  static Homography translation(double dx, double dy);
  static Homography scaling(double sx, double sy);
  static Homography rotation(double radians);

  Homography operator*(const Homography& o) const;
  double determinant() const;
  Homography inverse() const;  // throws "degenerate transform" if singular

  /// Apply to a point; projective divide included.
  void apply(double u, double v, double& ou, double& ov) const;
};

/// Parametric 2D view jitter: scale (zoom-in), shift, horizontal flip,
/// rotation and a small projective perturbation. Works in normalized
/// coordinates so the same transform applies consistently to images and
/// feature maps of any resolution.
struct ViewTransform {
  double scale = 1.0;  // >= 1 zooms into the central 1/scale crop
  double shift_x = 0.0, shift_y = 0.0;  // normalized units
  bool hflip = false;
  double rotation = 0.0;  // radians
  std::array<double, 8> perspective{};  // homography perturbation, row-major
                                        // on top of identity, H[2][2] fixed 1

  bool is_identity() const;

  /// Map from source coordinates to view coordinates. Centered ops (scale,
  /// flip, rotation, perspective) act about (0.5, 0.5); the shift translates
  /// the result.
  Homography forward() const;
};

}  // namespace featsharp
