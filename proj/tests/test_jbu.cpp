#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "featsharp/jbu.hpp"
#include "test_support.hpp"

using namespace featsharp;
using featsharp::test::finite_diff_check;
using featsharp::test::max_abs_diff;
using featsharp::test::random_grid;
using featsharp::test::random_image;

namespace {

// Brute-force reference for one stage: evaluates the range softmax, the
// spatial Gaussian and the explicit Z normalization separately, with its own
// naive projector forward. Independent of the fused softmax route.
Grid jbu_reference(const Grid& f_lr, const Grid& guidance, const JbuParams& p,
                   int factor) {
  int out_h = guidance.height(), out_w = guidance.width();
  int c = f_lr.channels();
  int r = p.radius, win = 2 * r + 1, nm = win * win;
  int d = p.range_dim;
  Real sigma_sp = std::exp(p.log_sigma_spatial.value().scalar_value());
  Real sigma_r = std::exp(p.log_sigma_range.value().scalar_value());

  // naive projector: h = W2 * silu(W1 * g + b1) + b2
  auto project = [&](int y, int x, std::vector<Real>& out) {
    std::vector<Real> hidden(d);
    for (int i = 0; i < d; ++i) {
      Real acc = p.b1.value().at(0, 0, i);
      for (int k = 0; k < 3; ++k) {
        acc += p.w1.value().at(i, k, 0) * guidance.at(y, x, k);
      }
      hidden[i] = acc / (1.0 + std::exp(-acc));
    }
    for (int i = 0; i < d; ++i) {
      Real acc = p.b2.value().at(0, 0, i);
      for (int k = 0; k < d; ++k) acc += p.w2.value().at(i, k, 0) * hidden[k];
      out[i] = acc;
    }
  };

  Grid out(out_h, out_w, c);
  std::vector<Real> q(d), kvec(d), fv(c);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      project(i, j, q);
      // range kernel: softmax over the window of dot / sigma_r^2
      std::vector<Real> range(nm), spatial(nm);
      for (int m = 0; m < nm; ++m) {
        int di = m / win - r, dj = m % win - r;
        int ac = clamp_index(i + di, out_h), bc = clamp_index(j + dj, out_w);
        project(ac, bc, kvec);
        Real dot = 0.0;
        for (int t = 0; t < d; ++t) dot += q[t] * kvec[t];
        range[m] = dot / (sigma_r * sigma_r);
        spatial[m] = std::exp(-(di * di + dj * dj) /
                              (2.0 * sigma_sp * sigma_sp));
      }
      Real rz = 0.0;
      for (int m = 0; m < nm; ++m) rz += std::exp(range[m]);
      Real z = 0.0;
      std::vector<Real> w(nm);
      for (int m = 0; m < nm; ++m) {
        w[m] = (std::exp(range[m]) / rz) * spatial[m];
        z += w[m];
      }
      for (int m = 0; m < nm; ++m) {
        int di = m / win - r, dj = m % win - r;
        Real sy = (i + di + 0.5) / factor - 0.5;
        Real sx = (j + dj + 0.5) / factor - 0.5;
        for (int t = 0; t < c; ++t) fv[t] = sample_bilinear(f_lr, sy, sx, t);
        for (int t = 0; t < c; ++t) out.at(i, j, t) += (w[m] / z) * fv[t];
      }
    }
  }
  return out;
}

JbuParams test_params(ParameterStore& store, Rng& rng, int radius = 3,
                      int range_dim = 8) {
  return make_jbu_params(store, "jbu", radius, range_dim, rng);
}

}  // namespace

TEST_CASE("build_stack: paper factorization 14 -> [2, 7]") {
  StackPlan p = build_stack(14);
  CHECK(p.factors == std::vector<int>{2, 7});
}

TEST_CASE("build_stack: powers of two and mixed factors") {
  CHECK(build_stack(8).factors == std::vector<int>{2, 2, 2});
  CHECK(build_stack(12).factors == std::vector<int>{2, 2, 3});
  CHECK(build_stack(1).factors.empty());
  CHECK_THROWS((void)build_stack(0));
  CHECK_THROWS((void)build_stack(-3));
}

TEST_CASE("build_stack: product equals z for z in 2..64, ascending primes") {
  for (int z = 2; z <= 64; ++z) {
    StackPlan p = build_stack(z);
    CHECK(p.total() == z);
    for (size_t i = 1; i < p.factors.size(); ++i) {
      CHECK(p.factors[i - 1] <= p.factors[i]);
    }
    for (int f : p.factors) {
      bool prime = f >= 2;
      for (int q = 2; q * q <= f; ++q) {
        if (f % q == 0) prime = false;
      }
      CHECK(prime);
    }
  }
}

TEST_CASE("jbu: brute-force oracle equivalence on a step-edge guidance") {
  Rng rng(50);
  ParameterStore store;
  JbuParams p = test_params(store, rng);
  Grid f_lr = random_grid(2, 2, 3, rng);
  Grid guidance(4, 4, 3);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) {
      Real v = x < 2 ? 0.1 : 0.9;
      guidance.at(y, x, 0) = v;
      guidance.at(y, x, 1) = v;
      guidance.at(y, x, 2) = 1.0 - v;
    }
  }
  Grid got = jbu_upsample(Var::constant(f_lr), guidance, p, 2).value();
  Grid want = jbu_reference(f_lr, guidance, p, 2);
  CHECK(max_abs_diff(got, want) < 1e-6);
}

TEST_CASE("jbu: oracle equivalence, 4x4x2 onto 8x8 guidance") {
  Rng rng(51);
  ParameterStore store;
  JbuParams p = test_params(store, rng);
  Grid f_lr = random_grid(4, 4, 2, rng);
  Grid guidance = random_image(8, 8, rng);
  Grid got = jbu_upsample(Var::constant(f_lr), guidance, p, 2).value();
  Grid want = jbu_reference(f_lr, guidance, p, 2);
  CHECK(max_abs_diff(got, want) < 1e-6);
}

TEST_CASE("jbu: 1x1 input produces a constant map with that value") {
  Rng rng(52);
  ParameterStore store;
  JbuParams p = test_params(store, rng, 2);
  Grid f_lr(1, 1, 2);
  f_lr.at(0, 0, 0) = 3.5;
  f_lr.at(0, 0, 1) = -1.25;
  Grid guidance = random_image(3, 3, rng);
  Grid out = jbu_upsample(Var::constant(f_lr), guidance, p, 3).value();
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      CHECK(out.at(y, x, 0) == doctest::Approx(3.5).epsilon(1e-9));
      CHECK(out.at(y, x, 1) == doctest::Approx(-1.25).epsilon(1e-9));
    }
  }
}

TEST_CASE("jbu: constant guidance reduces to pure spatial interpolation") {
  Rng rng(53);
  ParameterStore store;
  JbuParams p = test_params(store, rng);
  Grid f_lr = random_grid(3, 3, 2, rng);
  Grid guidance(6, 6, 3, 0.5);
  Grid got = jbu_upsample(Var::constant(f_lr), guidance, p, 2).value();

  // Direct evaluation with uniform range weights: only the spatial Gaussian
  // remains after normalization.
  int r = p.radius, win = 2 * r + 1;
  Real sigma_sp = std::exp(p.log_sigma_spatial.value().scalar_value());
  Grid want(6, 6, 2);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      Real z = 0.0;
      for (int m = 0; m < win * win; ++m) {
        int di = m / win - r, dj = m % win - r;
        z += std::exp(-(di * di + dj * dj) / (2 * sigma_sp * sigma_sp));
      }
      for (int m = 0; m < win * win; ++m) {
        int di = m / win - r, dj = m % win - r;
        Real w = std::exp(-(di * di + dj * dj) / (2 * sigma_sp * sigma_sp)) / z;
        for (int t = 0; t < 2; ++t) {
          want.at(i, j, t) += w * sample_bilinear(
              f_lr, (i + di + 0.5) / 2.0 - 0.5, (j + dj + 0.5) / 2.0 - 0.5, t);
        }
      }
    }
  }
  CHECK(max_abs_diff(got, want) < 1e-9);
}

TEST_CASE("jbu: weights sum to 1 per output pixel") {
  Rng rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    JbuParams p = test_params(store, rng, 1 + trial % 3);
    Grid guidance = random_image(6, 6, rng);
    Grid w = jbu_weights(guidance, p);
    for (int i = 0; i < w.height(); ++i) {
      for (int j = 0; j < w.width(); ++j) {
        Real s = 0.0;
        for (int m = 0; m < w.channels(); ++m) s += w.at(i, j, m);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("jbu: channel permutation of the input permutes the output") {
  Rng rng(55);
  ParameterStore store;
  JbuParams p = test_params(store, rng);
  Grid f_lr = random_grid(3, 3, 4, rng);
  Grid guidance = random_image(6, 6, rng);
  Grid base = jbu_upsample(Var::constant(f_lr), guidance, p, 2).value();

  int perm[4] = {2, 0, 3, 1};
  Grid shuffled(3, 3, 4);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) {
      for (int c = 0; c < 4; ++c) {
        shuffled.at(y, x, c) = f_lr.at(y, x, perm[c]);
      }
    }
  }
  Grid out = jbu_upsample(Var::constant(shuffled), guidance, p, 2).value();
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      for (int c = 0; c < 4; ++c) {
        CHECK(out.at(y, x, c) == base.at(y, x, perm[c]));
      }
    }
  }
}

TEST_CASE("jbu: errors on size mismatch and non-finite guidance") {
  Rng rng(56);
  ParameterStore store;
  JbuParams p = test_params(store, rng);
  Grid f_lr = random_grid(3, 3, 2, rng);
  Grid bad_guidance = random_image(5, 6, rng);
  CHECK_THROWS((void)jbu_upsample(Var::constant(f_lr), bad_guidance, p, 2));
  Grid nan_guidance = random_image(6, 6, rng);
  nan_guidance.at(1, 1, 1) = std::nan("");
  CHECK_THROWS((void)jbu_upsample(Var::constant(f_lr), nan_guidance, p, 2));
  CHECK_THROWS((void)jbu_upsample(Var::constant(f_lr), random_image(3, 3, rng), p, 1));
}

TEST_CASE("jbu: gradient check for features, sigmas and projector") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(600 + seed);
    ParameterStore store;
    JbuParams p = make_jbu_params(store, "jbu", 1, 4, rng);
    Var f_lr = Var::leaf(random_grid(2, 2, 2, rng));
    Grid guidance = random_image(4, 4, rng);
    Grid target = random_grid(4, 4, 2, rng);
    auto build = [&]() -> Var {
      return mse(jbu_upsample(f_lr, guidance, p, 2), Var::constant(target));
    };
    std::vector<Var> leaves = {f_lr, p.log_sigma_spatial, p.log_sigma_range,
                               p.w1, p.b1, p.w2, p.b2};
    worst = std::max(worst, finite_diff_check(build, leaves));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("jbu stack: empty plan returns the input unchanged") {
  Rng rng(57);
  Grid f_lr = random_grid(3, 3, 2, rng);
  Grid image = random_image(12, 12, rng);
  StackPlan plan = build_stack(1);
  Var out = jbu_stack_upsample(Var::constant(f_lr), image, {}, plan);
  CHECK(max_abs_diff(out.value(), f_lr) == 0.0);
}

TEST_CASE("jbu stack: [2,3] takes 2x2 to 12x12 via factor 6") {
  Rng rng(58);
  ParameterStore store;
  std::vector<JbuParams> stages;
  stages.push_back(make_jbu_params(store, "s0", 2, 4, rng));
  stages.push_back(make_jbu_params(store, "s1", 2, 4, rng));
  Grid f_lr = random_grid(2, 2, 2, rng);
  Grid image = random_image(12, 12, rng);
  StackPlan plan = build_stack(6);
  CHECK(plan.factors == std::vector<int>{2, 3});
  Var out = jbu_stack_upsample(Var::constant(f_lr), image, stages, plan);
  CHECK(out.value().height() == 12);
  CHECK(out.value().width() == 12);

  // Stage-by-stage oracle: guidance is the image resampled per stage.
  Grid g1 = bilinear_resample(image, 4, 4);
  Grid m1 = jbu_reference(f_lr, g1, stages[0], 2);
  Grid g2 = bilinear_resample(image, 12, 12);
  Grid m2 = jbu_reference(m1, g2, stages[1], 3);
  CHECK(max_abs_diff(out.value(), m2) < 1e-6);
}

TEST_CASE("jbu stack: plan [2,2] equals build_stack(4)") {
  StackPlan a = build_stack(4);
  CHECK(a.factors == std::vector<int>{2, 2});
}
