#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "featsharp/sharpen.hpp"
#include "test_support.hpp"

using namespace featsharp;
using featsharp::test::finite_diff_check;
using featsharp::test::max_abs_diff;
using featsharp::test::random_grid;

namespace {

SharpenParams rand_params(ParameterStore& store, int dim, int window,
                          BlockMode mode, Rng& rng, bool randomize_out) {
  SharpenParams p = make_sharpen_params(store, "blk", dim, window, mode, rng);
  if (randomize_out) {
    auto fill = [&](Var v, Real s) {
      Grid g = v.value();
      for (Real& x : g.raw()) x = s * rng.normal();
      v.set_value(g);
    };
    fill(p.wo, 0.3);
    fill(p.bo, 0.1);
    fill(p.down_w, 0.3);
    fill(p.down_b, 0.1);
    fill(p.lin_w, 0.3);
  }
  return p;
}

// Dense masked-global-attention oracle (its own projections and softmax).
Grid masked_attention_reference(const Grid& tokens, const SharpenParams& p,
                                int window) {
  int hgt = tokens.height(), wid = tokens.width(), d = tokens.channels();
  int n = hgt * wid;
  auto proj = [&](const Var& w, const Var& b, int y, int x, std::vector<Real>& out) {
    for (int i = 0; i < d; ++i) {
      Real acc = b.value().at(0, 0, i);
      for (int k = 0; k < d; ++k) {
        acc += w.value().at(i, k, 0) * tokens.at(y, x, k);
      }
      out[i] = acc;
    }
  };
  std::vector<std::vector<Real>> q(n, std::vector<Real>(d)), k(q), v(q);
  for (int y = 0; y < hgt; ++y) {
    for (int x = 0; x < wid; ++x) {
      proj(p.wq, p.bq, y, x, q[y * wid + x]);
      proj(p.wk, p.bk, y, x, k[y * wid + x]);
      proj(p.wv, p.bv, y, x, v[y * wid + x]);
    }
  }
  Grid out(hgt, wid, d);
  int hw = window / 2;
  for (int y = 0; y < hgt; ++y) {
    for (int x = 0; x < wid; ++x) {
      std::vector<Real> scores(n, -1e30);
      Real smax = -1e30;
      for (int yy = 0; yy < hgt; ++yy) {
        for (int xx = 0; xx < wid; ++xx) {
          if (std::abs(yy - y) > hw || std::abs(xx - x) > hw) continue;
          Real dot = 0.0;
          for (int t = 0; t < d; ++t) {
            dot += q[y * wid + x][t] * k[yy * wid + xx][t];
          }
          scores[yy * wid + xx] = dot / std::sqrt(static_cast<Real>(d));
          smax = std::max(smax, scores[yy * wid + xx]);
        }
      }
      Real z = 0.0;
      for (int m = 0; m < n; ++m) {
        if (scores[m] == -1e30) continue;
        z += std::exp(scores[m] - smax);
      }
      for (int m = 0; m < n; ++m) {
        if (scores[m] == -1e30) continue;
        Real w = std::exp(scores[m] - smax) / z;
        for (int t = 0; t < d; ++t) out.at(y, x, t) += w * v[m][t];
      }
    }
  }
  return out;
}

// Straight-line reference for the full combine (attention_mlp), built on the
// masked-attention oracle plus naive norm / SwiGLU arithmetic.
Grid combine_reference(const Grid& residual, const Grid& mosaic,
                       const SharpenParams& p) {
  int hgt = residual.height(), wid = residual.width(), c = residual.channels();
  int d = 2 * c;
  Grid x(hgt, wid, d);
  for (int y = 0; y < hgt; ++y) {
    for (int xx = 0; xx < wid; ++xx) {
      for (int t = 0; t < c; ++t) {
        x.at(y, xx, t) = residual.at(y, xx, t);
        x.at(y, xx, c + t) = mosaic.at(y, xx, t);
      }
    }
  }
  auto norm = [&](const Grid& in, const Var& gain) {
    Grid out(hgt, wid, d);
    for (int y = 0; y < hgt; ++y) {
      for (int xx = 0; xx < wid; ++xx) {
        Real m2 = 0.0;
        for (int t = 0; t < d; ++t) m2 += in.at(y, xx, t) * in.at(y, xx, t);
        Real inv = 1.0 / std::sqrt(m2 / d + 1e-6);
        for (int t = 0; t < d; ++t) {
          out.at(y, xx, t) = in.at(y, xx, t) * inv * gain.value().at(0, 0, t);
        }
      }
    }
    return out;
  };
  auto lin = [&](const Grid& in, const Var& w, const Var& b) {
    int rows = w.value().height(), cols = w.value().width();
    Grid out(hgt, wid, rows);
    for (int y = 0; y < hgt; ++y) {
      for (int xx = 0; xx < wid; ++xx) {
        for (int i = 0; i < rows; ++i) {
          Real acc = b.value().at(0, 0, i);
          for (int k = 0; k < cols; ++k) {
            acc += w.value().at(i, k, 0) * in.at(y, xx, k);
          }
          out.at(y, xx, i) = acc;
        }
      }
    }
    return out;
  };

  Grid attn_in = norm(x, p.gain_attn);
  Grid attn = masked_attention_reference(attn_in, p, p.window);
  Grid attn_out = lin(attn, p.wo, p.bo);
  for (size_t i = 0; i < x.size(); ++i) x.raw()[i] += attn_out.raw()[i];

  Grid mlp_in = norm(x, p.gain_mlp);
  Grid gate = lin(mlp_in, p.gate_w, p.gate_b);
  Grid up = lin(mlp_in, p.up_w, p.up_b);
  Grid hidden(hgt, wid, gate.channels());
  for (size_t i = 0; i < hidden.size(); ++i) {
    Real g = gate.raw()[i];
    hidden.raw()[i] = (g / (1.0 + std::exp(-g))) * up.raw()[i];
  }
  Grid down = lin(hidden, p.down_w, p.down_b);
  for (size_t i = 0; i < x.size(); ++i) x.raw()[i] += down.raw()[i];

  Grid out(hgt, wid, c);
  for (int y = 0; y < hgt; ++y) {
    for (int xx = 0; xx < wid; ++xx) {
      for (int t = 0; t < c; ++t) out.at(y, xx, t) = x.at(y, xx, t);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("swiglu hidden dims round up to multiples of 8") {
  CHECK(swiglu_hidden_dim(32) == 88);   // 85.33 -> 88
  CHECK(swiglu_hidden_dim(8) == 24);    // 21.33 -> 24
  CHECK(swiglu_hidden_dim(12) == 32);   // 32 exactly
  CHECK(swiglu_hidden_dim(3) == 8);
}

TEST_CASE("local attention: window covering the grid equals global attention") {
  Rng rng(70);
  ParameterStore store;
  SharpenParams p =
      rand_params(store, 6, 7, BlockMode::attention_mlp, rng, true);
  Grid tokens = random_grid(3, 3, 6, rng);
  // w = 7 >= 2*3-1, so every position sees every other one
  Grid got = local_attention(Var::constant(tokens), p, 7).value();
  Grid global = masked_attention_reference(tokens, p, 99);
  CHECK(max_abs_diff(got, global) < 1e-5);
}

TEST_CASE("local attention: w = 1 is the value projection of each token") {
  Rng rng(71);
  ParameterStore store;
  SharpenParams p =
      rand_params(store, 4, 1, BlockMode::attention_mlp, rng, true);
  Grid tokens = random_grid(4, 5, 4, rng);
  Grid got = local_attention(Var::constant(tokens), p, 1).value();
  Grid vproj = channel_linear(Var::constant(tokens), p.wv, p.bv).value();
  CHECK(max_abs_diff(got, vproj) < 1e-12);
}

TEST_CASE("local attention: 3x3 grid, w = 3, masked-global oracle") {
  Rng rng(72);
  ParameterStore store;
  SharpenParams p =
      rand_params(store, 6, 3, BlockMode::attention_mlp, rng, true);
  Grid tokens = random_grid(3, 3, 6, rng);
  Grid got = local_attention(Var::constant(tokens), p, 3).value();
  Grid want = masked_attention_reference(tokens, p, 3);
  CHECK(max_abs_diff(got, want) < 1e-6);
}

TEST_CASE("local attention: even window rejected, NaN tokens rejected") {
  Rng rng(73);
  ParameterStore store;
  SharpenParams p =
      rand_params(store, 4, 3, BlockMode::attention_mlp, rng, false);
  Grid tokens = random_grid(3, 3, 4, rng);
  CHECK_THROWS((void)local_attention(Var::constant(tokens), p, 4));
  tokens.at(0, 0, 0) = std::nan("");
  CHECK_THROWS((void)local_attention(Var::constant(tokens), p, 3));
}

TEST_CASE("local attention rows sum to 1 within 1e-8") {
  Rng rng(74);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore store;
    SharpenParams p =
        rand_params(store, 4, 3, BlockMode::attention_mlp, rng, true);
    Grid tokens = random_grid(4, 4, 4, rng);
    Grid w = local_attention_weights(tokens, p, 3);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        Real s = 0.0;
        for (int m = 0; m < w.channels(); ++m) s += w.at(y, x, m);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("combine: zero-initialized output projections give residual exactly") {
  Rng rng(75);
  ParameterStore store;
  SharpenParams p =
      make_sharpen_params(store, "blk", 12, 5, BlockMode::attention_mlp, rng);
  Grid residual = random_grid(5, 5, 6, rng);
  Grid mosaic = random_grid(5, 5, 6, rng);
  Grid out = featsharp_combine(Var::constant(residual), Var::constant(mosaic),
                               p).value();
  for (size_t i = 0; i < out.size(); ++i) {
    CHECK(out.raw()[i] == residual.raw()[i]);
  }
}

TEST_CASE("combine: zero weights with mosaic == residual is still residual") {
  Rng rng(76);
  ParameterStore store;
  SharpenParams p =
      make_sharpen_params(store, "blk", 8, 3, BlockMode::attention_mlp, rng);
  Grid residual = random_grid(4, 4, 4, rng);
  Grid out = featsharp_combine(Var::constant(residual), Var::constant(residual),
                               p).value();
  for (size_t i = 0; i < out.size(); ++i) {
    CHECK(out.raw()[i] == residual.raw()[i]);
  }
}

TEST_CASE("combine: random instance matches the dense reference") {
  Rng rng(77);
  ParameterStore store;
  SharpenParams p =
      rand_params(store, 8, 3, BlockMode::attention_mlp, rng, true);
  Grid residual = random_grid(4, 4, 4, rng);
  Grid mosaic = random_grid(4, 4, 4, rng);
  Grid got = featsharp_combine(Var::constant(residual), Var::constant(mosaic),
                               p).value();
  Grid want = combine_reference(residual, mosaic, p);
  CHECK(max_abs_diff(got, want) < 1e-6);
}

TEST_CASE("combine: shape mismatch rejected") {
  Rng rng(78);
  ParameterStore store;
  SharpenParams p =
      make_sharpen_params(store, "blk", 8, 3, BlockMode::attention_mlp, rng);
  Grid a = random_grid(4, 4, 4, rng);
  Grid b = random_grid(4, 3, 4, rng);
  CHECK_THROWS((void)featsharp_combine(Var::constant(a), Var::constant(b), p));
}

TEST_CASE("combine: all four block modes run and keep shape") {
  Rng rng(79);
  for (BlockMode mode : {BlockMode::linear_only, BlockMode::attention_only,
                         BlockMode::mlp_only, BlockMode::attention_mlp}) {
    ParameterStore store;
    SharpenParams p = rand_params(store, 8, 3, mode, rng, true);
    Grid residual = random_grid(4, 4, 4, rng);
    Grid mosaic = random_grid(4, 4, 4, rng);
    Grid out = featsharp_combine(Var::constant(residual),
                                 Var::constant(mosaic), p).value();
    CHECK(out.height() == 4);
    CHECK(out.width() == 4);
    CHECK(out.channels() == 4);
    CHECK(out.all_finite());
  }
}

TEST_CASE("combine: translation co-variance on interior positions") {
  Rng rng(80);
  ParameterStore store;
  SharpenParams p =
      rand_params(store, 8, 3, BlockMode::attention_mlp, rng, true);
  int n = 10;
  Grid res_a = random_grid(n, n, 4, rng);
  Grid mos_a = random_grid(n, n, 4, rng);
  // shift down-right by one cell
  Grid res_b(n, n, 4), mos_b(n, n, 4);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < 4; ++c) {
        res_b.at(y, x, c) = res_a.at(clamp_index(y - 1, n), clamp_index(x - 1, n), c);
        mos_b.at(y, x, c) = mos_a.at(clamp_index(y - 1, n), clamp_index(x - 1, n), c);
      }
    }
  }
  Grid out_a = featsharp_combine(Var::constant(res_a), Var::constant(mos_a), p).value();
  Grid out_b = featsharp_combine(Var::constant(res_b), Var::constant(mos_b), p).value();
  int w = p.window;
  for (int y = w; y < n - w; ++y) {
    for (int x = w; x < n - w; ++x) {
      for (int c = 0; c < 4; ++c) {
        CHECK(out_b.at(y, x, c) ==
              doctest::Approx(out_a.at(y - 1, x - 1, c)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("combine: gradient check over every sharpen parameter") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(8000 + seed);
    ParameterStore store;
    SharpenParams p =
        rand_params(store, 8, 3, BlockMode::attention_mlp, rng, true);
    Var residual = Var::leaf(random_grid(3, 3, 4, rng));
    Var mosaic = Var::leaf(random_grid(3, 3, 4, rng));
    Grid target = random_grid(3, 3, 4, rng);
    auto build = [&]() -> Var {
      return mse(featsharp_combine(residual, mosaic, p),
                 Var::constant(target));
    };
    std::vector<Var> leaves = {residual, mosaic};
    for (const Parameter& prm : store.all()) leaves.push_back(prm.var);
    worst = std::max(worst, finite_diff_check(build, leaves));
  }
  CHECK(worst < 1e-4);
}
