#include "featsharp/phi_s.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "featsharp/rng.hpp"

namespace featsharp {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void check_channels(const FeatureMap& fm, const DistributionStats& s) {
  if (fm.channels() != s.channels()) {
    throw std::invalid_argument("phi-s: stats channel count mismatch");
  }
}

}  // namespace

Grid phi_s_rotation_factor(int channels) {
  Grid h(channels, channels, 1);
  if (is_power_of_two(channels)) {
    // Sylvester construction, normalized to orthonormal rows.
    Real norm = 1.0 / std::sqrt(static_cast<Real>(channels));
    for (int i = 0; i < channels; ++i) {
      for (int j = 0; j < channels; ++j) {
        int bits = i & j;
        int parity = __builtin_popcount(static_cast<unsigned>(bits)) & 1;
        h.at(i, j, 0) = parity ? -norm : norm;
      }
    }
    return h;
  }
  // No Hadamard construction wired for this size: any fixed orthogonal
  // rotation keeps the isometry property, so use a seeded random one.
  Rng rng(0x9a11ad);
  Eigen::MatrixXd a(channels, channels);
  for (int i = 0; i < channels; ++i) {
    for (int j = 0; j < channels; ++j) a(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < channels; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  for (int i = 0; i < channels; ++i) {
    for (int j = 0; j < channels; ++j) h.at(i, j, 0) = q(i, j);
  }
  return h;
}

DistributionStats phi_s_fit(std::span<const FeatureMap> samples) {
  if (samples.empty()) throw std::invalid_argument("phi-s fit: no samples");
  int c = samples[0].channels();
  long long n = 0;
  for (const FeatureMap& fm : samples) {
    if (fm.channels() != c) {
      throw std::invalid_argument("phi-s fit: channel count mismatch");
    }
    n += static_cast<long long>(fm.height()) * fm.width();
  }
  if (n < c + 1) {
    throw std::invalid_argument("phi-s fit: need at least C + 1 vectors");
  }

  DistributionStats stats;
  stats.mean.assign(c, 0.0);
  for (const FeatureMap& fm : samples) {
    int positions = fm.height() * fm.width();
    for (int p = 0; p < positions; ++p) {
      const Real* row = fm.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) stats.mean[k] += row[k];
    }
  }
  for (Real& m : stats.mean) m /= static_cast<Real>(n);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(c, c);
  Eigen::VectorXd v(c);
  for (const FeatureMap& fm : samples) {
    int positions = fm.height() * fm.width();
    for (int p = 0; p < positions; ++p) {
      const Real* row = fm.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) v(k) = row[k] - stats.mean[k];
      cov.noalias() += v * v.transpose();
    }
  }
  cov /= static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  Eigen::VectorXd lambda = eig.eigenvalues();
  Eigen::MatrixXd u = eig.eigenvectors();
  double lmax = lambda.maxCoeff();
  if (lambda.minCoeff() <= 1e-12 * std::max(lmax, 1.0)) {
    std::cerr << "[phi-s] warning: rank-deficient covariance, "
                 "regularizing with 1e-6 * I\n";
    lambda.array() += 1e-6;
  }

  Grid hada = phi_s_rotation_factor(c);
  stats.rotation = Grid(c, c, 1);
  // rotation = H * U^T
  for (int i = 0; i < c; ++i) {
    for (int j = 0; j < c; ++j) {
      Real acc = 0.0;
      for (int k = 0; k < c; ++k) acc += hada.at(i, k, 0) * u(j, k);
      stats.rotation.at(i, j, 0) = acc;
    }
  }
  stats.scale = std::sqrt(lambda.mean());
  return stats;
}

FeatureMap phi_s_apply(const FeatureMap& fm, const DistributionStats& s) {
  check_channels(fm, s);
  int c = s.channels();
  int positions = fm.height() * fm.width();
  FeatureMap out(fm.height(), fm.width(), c);
  Real inv_scale = 1.0 / s.scale;
  std::vector<Real> centered(c);
  for (int p = 0; p < positions; ++p) {
    const Real* row = fm.data() + static_cast<size_t>(p) * c;
    for (int k = 0; k < c; ++k) centered[k] = row[k] - s.mean[k];
    Real* orow = out.data() + static_cast<size_t>(p) * c;
    for (int i = 0; i < c; ++i) {
      const Real* rr = s.rotation.row(i, 0);
      Real acc = 0.0;
      for (int k = 0; k < c; ++k) acc += rr[k] * centered[k];
      orow[i] = acc * inv_scale;
    }
  }
  return out;
}

FeatureMap phi_s_invert(const FeatureMap& fm, const DistributionStats& s) {
  check_channels(fm, s);
  int c = s.channels();
  int positions = fm.height() * fm.width();
  FeatureMap out(fm.height(), fm.width(), c);
  for (int p = 0; p < positions; ++p) {
    const Real* row = fm.data() + static_cast<size_t>(p) * c;
    Real* orow = out.data() + static_cast<size_t>(p) * c;
    for (int k = 0; k < c; ++k) {
      // R^T row, transpose indexing
      Real acc = 0.0;
      for (int i = 0; i < c; ++i) acc += s.rotation.at(i, k, 0) * row[i];
      orow[k] = acc * s.scale + s.mean[k];
    }
  }
  return out;
}

Var phi_s_apply(const Var& fm, const DistributionStats& s) {
  check_channels(fm.value(), s);
  int c = s.channels();
  Grid w(c, c, 1);
  Grid b(1, 1, c);
  Real inv_scale = 1.0 / s.scale;
  for (int i = 0; i < c; ++i) {
    Real shift = 0.0;
    for (int k = 0; k < c; ++k) {
      Real r = s.rotation.at(i, k, 0) * inv_scale;
      w.at(i, k, 0) = r;
      shift -= r * s.mean[k];
    }
    b.at(0, 0, i) = shift;
  }
  return channel_linear(fm, Var::constant(std::move(w)),
                        Var::constant(std::move(b)));
}

}  // namespace featsharp
