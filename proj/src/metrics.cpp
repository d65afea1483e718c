#include "featsharp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "featsharp/tiler.hpp"

namespace featsharp {

FidelityResult fidelity(std::span<const FeatureMap> predictions,
                        std::span<const FeatureMap> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw std::invalid_argument("fidelity: prediction/target count mismatch");
  }
  int c = targets[0].channels();
  std::vector<double> mu(c, 0.0);
  long long n_vec = 0;
  for (size_t s = 0; s < targets.size(); ++s) {
    if (!predictions[s].same_shape(targets[s])) {
      throw std::invalid_argument("fidelity: shape mismatch");
    }
    const FeatureMap& y = targets[s];
    int positions = y.height() * y.width();
    for (int p = 0; p < positions; ++p) {
      const Real* row = y.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) mu[k] += row[k];
    }
    n_vec += positions;
  }
  for (double& m : mu) m /= static_cast<double>(n_vec);

  double mse_mean = 0.0, mse_pred = 0.0;
  for (size_t s = 0; s < targets.size(); ++s) {
    const FeatureMap& y = targets[s];
    const FeatureMap& x = predictions[s];
    int positions = y.height() * y.width();
    for (int p = 0; p < positions; ++p) {
      const Real* yr = y.data() + static_cast<size_t>(p) * c;
      const Real* xr = x.data() + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) {
        double dm = yr[k] - mu[k];
        double dp = xr[k] - yr[k];
        mse_mean += dm * dm;
        mse_pred += dp * dp;
      }
    }
  }
  FidelityResult r;
  if (mse_pred == 0.0) {
    r.infinite = true;
    r.value = std::numeric_limits<double>::infinity();
    return r;
  }
  r.value = mse_mean / mse_pred;
  return r;
}

double tv_loss(const FeatureMap& f) {
  int h = f.height(), w = f.width(), c = f.channels();
  long long pairs = 0;
  double acc = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      const Real* a = f.row(y, x);
      const Real* b = f.row(y, x + 1);
      for (int k = 0; k < c; ++k) {
        double d = a[k] - b[k];
        acc += d * d;
      }
      ++pairs;
    }
  }
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Real* a = f.row(y, x);
      const Real* b = f.row(y + 1, x);
      for (int k = 0; k < c; ++k) {
        double d = a[k] - b[k];
        acc += d * d;
      }
      ++pairs;
    }
  }
  return pairs == 0 ? 0.0 : acc / static_cast<double>(pairs);
}

CrfResult crf_loss(const FeatureMap& f, const Grid& guidance, double sigma_g,
                   int radius) {
  if (guidance.height() != f.height() || guidance.width() != f.width()) {
    throw std::invalid_argument("crf: guidance spatial shape mismatch");
  }
  int h = f.height(), w = f.width(), c = f.channels();
  int gc = guidance.channels();
  CrfResult r;
  long long pairs = 0;
  double acc = 0.0;
  double inv = 1.0 / (2.0 * sigma_g * sigma_g);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int dy = 0; dy <= radius; ++dy) {
        int y2 = y + dy;
        if (y2 >= h) break;
        int dx0 = (dy == 0) ? 1 : -radius;
        for (int dx = dx0; dx <= radius; ++dx) {
          int x2 = x + dx;
          if (x2 < 0 || x2 >= w) continue;
          const Real* fa = f.row(y, x);
          const Real* fb = f.row(y2, x2);
          double na = 0.0, nb = 0.0, dot = 0.0;
          for (int k = 0; k < c; ++k) {
            na += fa[k] * fa[k];
            nb += fb[k] * fb[k];
            dot += fa[k] * fb[k];
          }
          if (na == 0.0 || nb == 0.0) {
            ++r.skipped_pairs;
            continue;
          }
          const Real* ga = guidance.row(y, x);
          const Real* gb = guidance.row(y2, x2);
          double gd = 0.0;
          for (int k = 0; k < gc; ++k) {
            double d = ga[k] - gb[k];
            gd += d * d;
          }
          double wij = std::exp(-gd * inv);
          acc += wij * (1.0 - dot / std::sqrt(na * nb));
          ++pairs;
        }
      }
    }
  }
  r.value = pairs == 0 ? 0.0 : acc / static_cast<double>(pairs);
  return r;
}

namespace {

inline double sq_dist(const std::vector<Real>& a, const std::vector<Real>& b) {
  double d = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    double t = a[k] - b[k];
    d += t * t;
  }
  return d;
}

}  // namespace

double mmd2_unbiased(const std::vector<std::vector<Real>>& x,
                     const std::vector<std::vector<Real>>& y, double gamma) {
  size_t m = x.size(), n = y.size();
  if (m < 2 || n < 2) {
    throw std::invalid_argument("mmd: need at least two samples per set");
  }
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      xx += std::exp(-gamma * sq_dist(x[i], x[j]));
    }
  }
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      yy += std::exp(-gamma * sq_dist(y[i], y[j]));
    }
  }
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < n; ++j) {
      xy += std::exp(-gamma * sq_dist(x[i], y[j]));
    }
  }
  return xx / (static_cast<double>(m) * (m - 1)) +
         yy / (static_cast<double>(n) * (n - 1)) -
         2.0 * xy / (static_cast<double>(m) * n);
}

double median_gamma(const std::vector<std::vector<Real>>& x) {
  size_t m = x.size();
  if (m < 2) throw std::invalid_argument("mmd: need at least two samples");
  std::vector<double> dists;
  dists.reserve(m * (m - 1) / 2);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = i + 1; j < m; ++j) dists.push_back(sq_dist(x[i], x[j]));
  }
  std::sort(dists.begin(), dists.end());
  double med;
  size_t k = dists.size();
  if (k % 2 == 1) {
    med = dists[k / 2];
  } else {
    med = 0.5 * (dists[k / 2 - 1] + dists[k / 2]);
  }
  if (med <= 0.0) throw std::runtime_error("degenerate bandwidth");
  return 1.0 / med;
}

std::vector<std::vector<Real>> flatten_vectors(const FeatureMap& fm) {
  int c = fm.channels();
  int positions = fm.height() * fm.width();
  std::vector<std::vector<Real>> out(positions, std::vector<Real>(c));
  for (int p = 0; p < positions; ++p) {
    const Real* row = fm.data() + static_cast<size_t>(p) * c;
    std::copy(row, row + c, out[p].begin());
  }
  return out;
}

std::vector<std::pair<int, double>> tiling_error(
    const Featurizer& f, const Grid& image, std::span<const int> levels,
    const DistributionStats* stats) {
  constexpr int kMaxSide = 4096;
  int r = f.spec().input_resolution;

  DistributionStats local;
  if (!stats) {
    std::vector<FeatureMap> sample = {
        f.featurize(bilinear_resample(image, r, r))};
    local = phi_s_fit(sample);
    stats = &local;
  }

  std::vector<std::pair<int, double>> out;
  for (int u : levels) {
    if (u < 1) continue;
    long long side = static_cast<long long>(r) * u;
    if (side > kMaxSide) {
      std::cerr << "[tiling-error] warning: level " << u
                << " exceeds the resolution cap, skipping\n";
      continue;
    }
    Grid scaled = bilinear_resample(image, static_cast<int>(side),
                                    static_cast<int>(side));
    FeatureMap ref = phi_s_apply(f.featurize_at(scaled), *stats);
    FeatureMap mosaic = phi_s_apply(tile_upsample(f, scaled, u), *stats);
    double acc = 0.0;
    for (size_t i = 0; i < ref.size(); ++i) {
      double d = ref.raw()[i] - mosaic.raw()[i];
      acc += d * d;
    }
    out.emplace_back(u, acc / static_cast<double>(ref.size()));
  }
  return out;
}

CostRow cost_model(long long x, double c) {
  if (x < 1) throw std::invalid_argument("cost model: x must be >= 1");
  CostRow r;
  r.x = x;
  r.f = c * static_cast<double>(x * (x + 1) * (2 * x + 1) / 6);
  double x2 = static_cast<double>(x) * x;
  r.g = c * x2 * x2;
  return r;
}

bool cost_proof_check(long long max_x) {
  long long loop_sum = 0;
  for (long long x = 1; x <= max_x; ++x) {
    loop_sum += x * x;
    long long closed = x * (x + 1) * (2 * x + 1) / 6;
    if (closed != loop_sum) return false;
    long long x4 = x * x * x * x;
    if (x == 1) {
      if (closed != x4) return false;  // equality at the boundary
    } else if (closed > x4) {
      return false;
    }
  }
  return true;
}

void write_throughput_csv(std::ostream& os,
                          std::span<const ThroughputRow> rows) {
  os << "upsampler,factor,featurizer_evals,out_tokens,ms_per_image,"
        "us_per_token\n";
  for (const ThroughputRow& r : rows) {
    os << r.upsampler << ',' << r.factor << ',' << r.featurizer_evals << ','
       << r.out_tokens << ',' << r.ms_per_image << ',' << r.us_per_token
       << '\n';
  }
}

void MetricsReport::write_csv(std::ostream& os) const {
  os << "metric,value\n";
  os << "fidelity," << fidelity.value << '\n';
  os << "fidelity_infinite," << (fidelity.infinite ? 1 : 0) << '\n';
  os << "tv," << tv << '\n';
  os << "crf," << crf.value << '\n';
  os << "crf_skipped_pairs," << crf.skipped_pairs << '\n';
  os << "mmd2," << mmd2 << '\n';
  for (const auto& [u, e] : tiling_errors) {
    os << "tiling_error_u" << u << ',' << e << '\n';
  }
  for (const CostRow& r : cost) {
    os << "cost_x" << r.x << "_f," << r.f << '\n';
    os << "cost_x" << r.x << "_g," << r.g << '\n';
  }
  os << "seed," << seed << '\n';
  os << "config_digest," << config_digest << '\n';
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["fidelity"] = fidelity.infinite
                      ? nlohmann::json("inf")
                      : nlohmann::json(fidelity.value);
  j["fidelity_infinite"] = fidelity.infinite;
  j["tv"] = tv;
  j["crf"] = crf.value;
  j["crf_skipped_pairs"] = crf.skipped_pairs;
  j["mmd2"] = mmd2;
  nlohmann::json te = nlohmann::json::array();
  for (const auto& [u, e] : tiling_errors) {
    te.push_back({{"u", u}, {"mse", e}});
  }
  j["tiling_error"] = te;
  nlohmann::json co = nlohmann::json::array();
  for (const CostRow& r : cost) {
    co.push_back({{"x", r.x}, {"f", r.f}, {"g", r.g}});
  }
  j["cost"] = co;
  j["seed"] = seed;
  j["config_digest"] = config_digest;
  return j.dump(2);
}

}  // namespace featsharp
