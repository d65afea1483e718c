#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "featsharp/downsample.hpp"
#include "test_support.hpp"

using namespace featsharp;
using featsharp::test::finite_diff_check;
using featsharp::test::max_abs_diff;
using featsharp::test::random_grid;

namespace {

// Double-loop oracle with its own window/softmax arithmetic.
Grid downsample_reference(const Grid& f_hr, const DownsamplerParams& p) {
  int hi = f_hr.height(), c = f_hr.channels();
  int k = p.k, factor = p.factor;
  int lo = hi / factor;
  Grid out(lo, lo, c);
  for (int I = 0; I < lo; ++I) {
    for (int J = 0; J < lo; ++J) {
      Real cy = (I + 0.5) * factor - 0.5;
      Real cx = (J + 0.5) * factor - 0.5;
      int ys = static_cast<int>(std::floor(cy + 0.5)) - (k - 1) / 2;
      int xs = static_cast<int>(std::floor(cx + 0.5)) - (k - 1) / 2;
      double z = 0.0;
      std::vector<double> w(k * k, 0.0);
      for (int m = 0; m < k * k; ++m) {
        int a = ys + m / k, b = xs + m % k;
        if (a < 0 || a >= hi || b < 0 || b >= f_hr.width()) continue;
        double logit = p.spatial_bias.value().at(m / k, m % k, 0);
        for (int t = 0; t < c; ++t) {
          logit += p.salience_w.value().at(0, t, 0) * f_hr.at(a, b, t);
        }
        w[m] = std::exp(logit);
        z += w[m];
      }
      for (int m = 0; m < k * k; ++m) {
        if (w[m] == 0.0) continue;
        int a = ys + m / k, b = xs + m % k;
        for (int t = 0; t < c; ++t) {
          out.at(I, J, t) += (w[m] / z) * f_hr.at(a, b, t);
        }
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("downsampler: constant input maps to the same constant") {
  Rng rng(90);
  ParameterStore store;
  DownsamplerParams p = make_downsampler_params(store, "ds", 3, 7, 2, rng);
  Grid f_hr(8, 8, 3);
  for (int t = 0; t < 3; ++t) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) f_hr.at(y, x, t) = 1.5 - t;
    }
  }
  Grid out = attention_downsample(Var::constant(f_hr), p).value();
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      for (int t = 0; t < 3; ++t) {
        CHECK(out.at(y, x, t) == doctest::Approx(1.5 - t).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("downsampler: uniform logits with k == factor is average pooling") {
  ParameterStore store;
  Rng rng(91);
  DownsamplerParams p = make_downsampler_params(store, "ds", 2, 3, 3, rng);
  // zero salience and bias -> uniform weights
  p.salience_w.set_value(Grid(1, 2, 1, 0.0));
  p.spatial_bias.set_value(Grid(3, 3, 1, 0.0));
  Grid f_hr = random_grid(9, 9, 2, rng);
  Grid out = attention_downsample(Var::constant(f_hr), p).value();
  for (int I = 0; I < 3; ++I) {
    for (int J = 0; J < 3; ++J) {
      for (int t = 0; t < 2; ++t) {
        Real avg = 0.0;
        for (int y = 0; y < 3; ++y) {
          for (int x = 0; x < 3; ++x) avg += f_hr.at(3 * I + y, 3 * J + x, t);
        }
        avg /= 9.0;
        CHECK(out.at(I, J, t) == doctest::Approx(avg).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("downsampler: 8x8 -> 4x4 matches the double-loop oracle") {
  Rng rng(92);
  for (int k : {3, 7}) {
    ParameterStore store;
    DownsamplerParams p = make_downsampler_params(store, "ds", 4, k, 2, rng);
    Grid f_hr = random_grid(8, 8, 4, rng);
    Grid got = attention_downsample(Var::constant(f_hr), p).value();
    Grid want = downsample_reference(f_hr, p);
    CHECK(max_abs_diff(got, want) < 1e-6);
  }
}

TEST_CASE("downsampler: output stays in the per-channel window hull") {
  Rng rng(93);
  ParameterStore store;
  DownsamplerParams p = make_downsampler_params(store, "ds", 3, 7, 2, rng);
  Grid f_hr = random_grid(12, 12, 3, rng);
  Grid out = attention_downsample(Var::constant(f_hr), p).value();
  int k = p.k;
  for (int I = 0; I < 6; ++I) {
    for (int J = 0; J < 6; ++J) {
      int ys = static_cast<int>(std::floor((I + 0.5) * 2 - 0.5 + 0.5)) - (k - 1) / 2;
      int xs = static_cast<int>(std::floor((J + 0.5) * 2 - 0.5 + 0.5)) - (k - 1) / 2;
      for (int t = 0; t < 3; ++t) {
        Real lo = 1e300, hi = -1e300;
        for (int m = 0; m < k * k; ++m) {
          int a = ys + m / k, b = xs + m % k;
          if (a < 0 || a >= 12 || b < 0 || b >= 12) continue;
          lo = std::min(lo, f_hr.at(a, b, t));
          hi = std::max(hi, f_hr.at(a, b, t));
        }
        CHECK(out.at(I, J, t) >= lo - 1e-12);
        CHECK(out.at(I, J, t) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("downsampler: weights sum to 1 within 1e-8") {
  Rng rng(94);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    DownsamplerParams p = make_downsampler_params(store, "ds", 3, 7, 2, rng);
    Grid f_hr = random_grid(8, 8, 3, rng);
    Grid w = attention_downsample_weights(f_hr, p);
    for (int y = 0; y < w.height(); ++y) {
      for (int x = 0; x < w.width(); ++x) {
        Real s = 0.0;
        for (int m = 0; m < w.channels(); ++m) s += w.at(y, x, m);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("downsampler: indivisible sizes rejected") {
  Rng rng(95);
  ParameterStore store;
  DownsamplerParams p = make_downsampler_params(store, "ds", 2, 7, 2, rng);
  Grid f_hr = random_grid(7, 8, 2, rng);
  CHECK_THROWS((void)attention_downsample(Var::constant(f_hr), p));
}

TEST_CASE("downsampler: gradient check for features, salience and bias") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(900 + seed);
    ParameterStore store;
    DownsamplerParams p = make_downsampler_params(store, "ds", 2, 3, 2, rng);
    Var f_hr = Var::leaf(random_grid(6, 6, 2, rng));
    Grid target = random_grid(3, 3, 2, rng);
    auto build = [&]() -> Var {
      return mse(attention_downsample(f_hr, p), Var::constant(target));
    };
    worst = std::max(worst, finite_diff_check(
        build, {f_hr, p.salience_w, p.spatial_bias}));
  }
  CHECK(worst < 1e-4);
}
