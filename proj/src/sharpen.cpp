#include "featsharp/sharpen.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace featsharp {

std::string to_string(BlockMode m) {
  switch (m) {
    case BlockMode::linear_only: return "linear";
    case BlockMode::attention_only: return "attention";
    case BlockMode::mlp_only: return "mlp";
    case BlockMode::attention_mlp: return "attention_mlp";
  }
  return "?";
}

BlockMode block_mode_from_string(const std::string& s) {
  if (s == "linear") return BlockMode::linear_only;
  if (s == "attention") return BlockMode::attention_only;
  if (s == "mlp") return BlockMode::mlp_only;
  if (s == "attention_mlp") return BlockMode::attention_mlp;
  throw std::invalid_argument("unknown block mode: " + s);
}

int swiglu_hidden_dim(int token_dim) {
  return ((8 * token_dim + 23) / 24) * 8;
}

SharpenParams make_sharpen_params(ParameterStore& store,
                                  const std::string& prefix, int token_dim,
                                  int window, BlockMode mode, Rng& rng) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("sharpen: window must be odd and positive");
  }
  SharpenParams p;
  p.window = window;
  p.mode = mode;
  int d = token_dim;
  int hd = swiglu_hidden_dim(d);
  auto mat = [&](int rows, int cols, Real stddev) {
    Grid g(rows, cols, 1);
    for (Real& v : g.raw()) v = stddev * rng.normal();
    return g;
  };
  Real s = 1.0 / std::sqrt(static_cast<Real>(d));
  p.wq = store.create(prefix + ".wq", mat(d, d, s));
  p.bq = store.create(prefix + ".bq", Grid(1, 1, d));
  p.wk = store.create(prefix + ".wk", mat(d, d, s));
  p.bk = store.create(prefix + ".bk", Grid(1, 1, d));
  p.wv = store.create(prefix + ".wv", mat(d, d, s));
  p.bv = store.create(prefix + ".bv", Grid(1, 1, d));
  p.wo = store.create(prefix + ".wo", Grid(d, d, 1));
  p.bo = store.create(prefix + ".bo", Grid(1, 1, d));
  p.gate_w = store.create(prefix + ".gate_w", mat(hd, d, s));
  p.gate_b = store.create(prefix + ".gate_b", Grid(1, 1, hd));
  p.up_w = store.create(prefix + ".up_w", mat(hd, d, s));
  p.up_b = store.create(prefix + ".up_b", Grid(1, 1, hd));
  p.down_w = store.create(prefix + ".down_w", Grid(d, hd, 1));
  p.down_b = store.create(prefix + ".down_b", Grid(1, 1, d));
  p.lin_w = store.create(prefix + ".lin_w", Grid(d, d, 1));
  p.lin_b = store.create(prefix + ".lin_b", Grid(1, 1, d));
  p.gain_attn = store.create(prefix + ".gain_attn", Grid(1, 1, d, 1.0));
  p.gain_mlp = store.create(prefix + ".gain_mlp", Grid(1, 1, d, 1.0));
  return p;
}

namespace {

// Softmax(q k^T / sqrt(d)) v over edge-clipped w x w windows.
Var window_attention(const Var& q, const Var& k, const Var& v, int window) {
  const Grid& qv = q.value();
  int hgt = qv.height(), wid = qv.width(), d = qv.channels();
  int hw = window / 2;
  int nm = window * window;
  Real att_scale = 1.0 / std::sqrt(static_cast<Real>(d));

  auto weights =
      std::make_shared<std::vector<Real>>(static_cast<size_t>(hgt) * wid * nm,
                                          0.0);
  Grid out(hgt, wid, d);
  {
    const Grid& kv = k.value();
    const Grid& vv = v.value();
    std::vector<Real> scores(nm);
    for (int i = 0; i < hgt; ++i) {
      for (int j = 0; j < wid; ++j) {
        const Real* qr = qv.row(i, j);
        size_t base = (static_cast<size_t>(i) * wid + j) * nm;
        Real smax = -1e300;
        for (int m = 0; m < nm; ++m) {
          int a = i + m / window - hw, b = j + m % window - hw;
          if (a < 0 || a >= hgt || b < 0 || b >= wid) {
            scores[m] = -1e300;
            continue;
          }
          const Real* kr = kv.row(a, b);
          Real dot = 0.0;
          for (int t = 0; t < d; ++t) dot += qr[t] * kr[t];
          scores[m] = dot * att_scale;
          if (scores[m] > smax) smax = scores[m];
        }
        Real z = 0.0;
        for (int m = 0; m < nm; ++m) {
          if (scores[m] == -1e300) continue;
          Real e = std::exp(scores[m] - smax);
          (*weights)[base + m] = e;
          z += e;
        }
        Real inv_z = 1.0 / z;
        Real* orow = out.row(i, j);
        for (int m = 0; m < nm; ++m) {
          Real wm = (*weights)[base + m];
          if (wm == 0.0) continue;
          wm *= inv_z;
          (*weights)[base + m] = wm;
          const Real* vr = vv.row(i + m / window - hw, j + m % window - hw);
          for (int t = 0; t < d; ++t) orow[t] += wm * vr[t];
        }
      }
    }
  }

  return make_op(
      std::move(out), {q, k, v},
      [q, k, v, weights, hgt, wid, d, window, hw, nm,
       att_scale](const Grid& gout) {
        const Grid& qv = q.value();
        const Grid& kv = k.value();
        const Grid& vv = v.value();
        Grid dq(hgt, wid, d), dk(hgt, wid, d), dv(hgt, wid, d);
        std::vector<Real> dw(nm);
        for (int i = 0; i < hgt; ++i) {
          for (int j = 0; j < wid; ++j) {
            size_t base = (static_cast<size_t>(i) * wid + j) * nm;
            const Real* grow = gout.row(i, j);
            Real dsum = 0.0;
            for (int m = 0; m < nm; ++m) {
              Real wm = (*weights)[base + m];
              if (wm == 0.0) {
                dw[m] = 0.0;
                continue;
              }
              int a = i + m / window - hw, b = j + m % window - hw;
              const Real* vr = vv.row(a, b);
              Real dot = 0.0;
              for (int t = 0; t < d; ++t) dot += grow[t] * vr[t];
              dw[m] = dot;
              dsum += wm * dot;
              Real* dvr = dv.row(a, b);
              for (int t = 0; t < d; ++t) dvr[t] += wm * grow[t];
            }
            const Real* qr = qv.row(i, j);
            Real* dqr = dq.row(i, j);
            for (int m = 0; m < nm; ++m) {
              Real wm = (*weights)[base + m];
              if (wm == 0.0) continue;
              Real dsm = wm * (dw[m] - dsum) * att_scale;
              int a = i + m / window - hw, b = j + m % window - hw;
              const Real* kr = kv.row(a, b);
              Real* dkr = dk.row(a, b);
              for (int t = 0; t < d; ++t) {
                dqr[t] += dsm * kr[t];
                dkr[t] += dsm * qr[t];
              }
            }
          }
        }
        if (q.requires_grad()) Var(q).accumulate_grad(dq);
        if (k.requires_grad()) Var(k).accumulate_grad(dk);
        if (v.requires_grad()) Var(v).accumulate_grad(dv);
      });
}

void check_window(int window) {
  if (window < 1 || window % 2 == 0) {
    throw std::invalid_argument("local attention: window must be odd");
  }
}

}  // namespace

Var local_attention(const Var& tokens, const SharpenParams& p, int window) {
  check_window(window);
  if (!tokens.value().all_finite()) {
    throw std::invalid_argument("local attention: non-finite tokens");
  }
  Var q = channel_linear(tokens, p.wq, p.bq);
  Var k = channel_linear(tokens, p.wk, p.bk);
  Var v = channel_linear(tokens, p.wv, p.bv);
  return window_attention(q, k, v, window);
}

Var featsharp_combine(const Var& residual_up, const Var& mosaic,
                      const SharpenParams& p) {
  if (!residual_up.value().same_shape(mosaic.value())) {
    throw std::invalid_argument("featsharp: shape mismatch");
  }
  int c = residual_up.value().channels();
  Var x = concat_channels(residual_up, mosaic);
  if (p.mode == BlockMode::linear_only) {
    Var xn = rms_norm(x, p.gain_attn);
    x = add(x, channel_linear(xn, p.lin_w, p.lin_b));
  }
  if (p.mode == BlockMode::attention_only ||
      p.mode == BlockMode::attention_mlp) {
    Var xn = rms_norm(x, p.gain_attn);
    Var attn = local_attention(xn, p, p.window);
    x = add(x, channel_linear(attn, p.wo, p.bo));
  }
  if (p.mode == BlockMode::mlp_only || p.mode == BlockMode::attention_mlp) {
    Var xn = rms_norm(x, p.gain_mlp);
    Var gate = silu(channel_linear(xn, p.gate_w, p.gate_b));
    Var up = channel_linear(xn, p.up_w, p.up_b);
    x = add(x, channel_linear(mul(gate, up), p.down_w, p.down_b));
  }
  return slice_channels(x, 0, c);
}

Grid local_attention_weights(const Grid& tokens, const SharpenParams& p,
                             int window) {
  check_window(window);
  Var q = channel_linear(Var::constant(tokens), p.wq, p.bq);
  Var k = channel_linear(Var::constant(tokens), p.wk, p.bk);
  const Grid& qv = q.value();
  const Grid& kv = k.value();
  int hgt = qv.height(), wid = qv.width(), d = qv.channels();
  int hw = window / 2, nm = window * window;
  Real att_scale = 1.0 / std::sqrt(static_cast<Real>(d));
  Grid out(hgt, wid, nm);
  std::vector<Real> scores(nm);
  for (int i = 0; i < hgt; ++i) {
    for (int j = 0; j < wid; ++j) {
      const Real* qr = qv.row(i, j);
      Real smax = -1e300;
      for (int m = 0; m < nm; ++m) {
        int a = i + m / window - hw, b = j + m % window - hw;
        if (a < 0 || a >= hgt || b < 0 || b >= wid) {
          scores[m] = -1e300;
          continue;
        }
        const Real* kr = kv.row(a, b);
        Real dot = 0.0;
        for (int t = 0; t < d; ++t) dot += qr[t] * kr[t];
        scores[m] = dot * att_scale;
        if (scores[m] > smax) smax = scores[m];
      }
      Real z = 0.0;
      for (int m = 0; m < nm; ++m) {
        if (scores[m] == -1e300) continue;
        z += std::exp(scores[m] - smax);
      }
      for (int m = 0; m < nm; ++m) {
        if (scores[m] == -1e300) continue;
        out.at(i, j, m) = std::exp(scores[m] - smax) / z;
      }
    }
  }
  return out;
}

}  // namespace featsharp
