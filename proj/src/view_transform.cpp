#include "featsharp/view_transform.hpp"

#include <cmath>
#include <stdexcept>

namespace featsharp {

Homography Homography::translation(double dx, double dy) {
  Homography h;
  h.m = {1, 0, dx, 0, 1, dy, 0, 0, 1};
  return h;
}

Homography Homography::scaling(double sx, double sy) {
  Homography h;
  h.m = {sx, 0, 0, 0, sy, 0, 0, 0, 1};
  return h;
}

Homography Homography::rotation(double radians) {
  double c = std::cos(radians), s = std::sin(radians);
  Homography h;
  h.m = {c, -s, 0, s, c, 0, 0, 0, 1};
  return h;
}

Homography Homography::operator*(const Homography& o) const {
  Homography r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += m[i * 3 + k] * o.m[k * 3 + j];
      r.m[i * 3 + j] = acc;
    }
  }
  return r;
}

double Homography::determinant() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) -
         m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
  double det = determinant();
  if (std::abs(det) < 1e-12 || !std::isfinite(det)) {
    throw std::runtime_error("degenerate transform");
  }
  double inv = 1.0 / det;
  Homography r;
  r.m[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
  r.m[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
  r.m[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
  r.m[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
  r.m[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
  r.m[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
  r.m[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
  r.m[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
  r.m[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
  return r;
}

void Homography::apply(double u, double v, double& ou, double& ov) const {
  double x = m[0] * u + m[1] * v + m[2];
  double y = m[3] * u + m[4] * v + m[5];
  double w = m[6] * u + m[7] * v + m[8];
  ou = x / w;
  ov = y / w;
}

bool ViewTransform::is_identity() const {
  if (scale != 1.0 || shift_x != 0.0 || shift_y != 0.0 || hflip ||
      rotation != 0.0) {
    return false;
  }
  for (double p : perspective) {
    if (p != 0.0) return false;
  }
  return true;
}

Homography ViewTransform::forward() const {
  Homography center = Homography::translation(0.5, 0.5);
  Homography uncenter = Homography::translation(-0.5, -0.5);
  Homography s = Homography::scaling(scale, scale);
  Homography f = Homography::scaling(hflip ? -1.0 : 1.0, 1.0);
  Homography r = Homography::rotation(rotation);
  Homography p;
  p.m = {1.0 + perspective[0], perspective[1],       perspective[2],
         perspective[3],       1.0 + perspective[4], perspective[5],
         perspective[6],       perspective[7],       1.0};
  Homography shift = Homography::translation(shift_x, shift_y);
  return shift * center * p * r * f * s * uncenter;
}

}  // namespace featsharp
