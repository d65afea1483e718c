#include "featsharp/downsample.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

namespace featsharp {

DownsamplerParams make_downsampler_params(ParameterStore& store,
                                          const std::string& prefix,
                                          int channels, int k, int factor,
                                          Rng& rng) {
  if (k % 2 == 0 || k < factor) {
    throw std::invalid_argument("downsampler: k must be odd and >= factor");
  }
  DownsamplerParams p;
  p.k = k;
  p.factor = factor;
  Grid sal(1, channels, 1);
  for (Real& v : sal.raw()) {
    v = rng.normal() / std::sqrt(static_cast<Real>(channels));
  }
  p.salience_w = store.create(prefix + ".salience_w", std::move(sal));
  p.spatial_bias = store.create(prefix + ".spatial_bias", Grid(k, k, 1));
  return p;
}

namespace {

// Top-left corner of the k x k window for low-res cell index I. Cell
// centers fall between hi-res pixels for even factors; the window is
// anchored on the nearest pixel (round half up).
inline int window_start(int cell, int factor, int k) {
  Real center = (cell + 0.5) * factor - 0.5;
  int c = static_cast<int>(std::floor(center + 0.5));
  return c - (k - 1) / 2;
}

}  // namespace

Grid attention_downsample_weights(const Grid& f_hr,
                                  const DownsamplerParams& p) {
  int hi_h = f_hr.height(), hi_w = f_hr.width(), c = f_hr.channels();
  int factor = p.factor, k = p.k;
  if (hi_h % factor != 0 || hi_w % factor != 0) {
    throw std::invalid_argument("attention downsample: indivisible sizes");
  }
  int lo_h = hi_h / factor, lo_w = hi_w / factor;
  const Real* sal = p.salience_w.value().data();
  const Grid& bias = p.spatial_bias.value();
  Grid out(lo_h, lo_w, k * k);
  std::vector<Real> logits(k * k);
  for (int I = 0; I < lo_h; ++I) {
    int ys = window_start(I, factor, k);
    for (int J = 0; J < lo_w; ++J) {
      int xs = window_start(J, factor, k);
      Real smax = -1e300;
      for (int m = 0; m < k * k; ++m) {
        int a = ys + m / k, b = xs + m % k;
        if (a < 0 || a >= hi_h || b < 0 || b >= hi_w) {
          logits[m] = -1e300;
          continue;
        }
        const Real* fr = f_hr.row(a, b);
        Real s = bias.at(m / k, m % k, 0);
        for (int t = 0; t < c; ++t) s += sal[t] * fr[t];
        logits[m] = s;
        if (s > smax) smax = s;
      }
      Real z = 0.0;
      for (int m = 0; m < k * k; ++m) {
        if (logits[m] == -1e300) continue;
        z += std::exp(logits[m] - smax);
      }
      for (int m = 0; m < k * k; ++m) {
        if (logits[m] == -1e300) continue;
        out.at(I, J, m) = std::exp(logits[m] - smax) / z;
      }
    }
  }
  return out;
}

Var attention_downsample(const Var& f_hr, const DownsamplerParams& p) {
  const Grid& hv = f_hr.value();
  int hi_h = hv.height(), hi_w = hv.width(), c = hv.channels();
  int factor = p.factor, k = p.k;
  if (hi_h % factor != 0 || hi_w % factor != 0) {
    throw std::invalid_argument("attention downsample: indivisible sizes");
  }
  if (p.salience_w.value().width() != c) {
    throw std::invalid_argument("attention downsample: channel mismatch");
  }
  int lo_h = hi_h / factor, lo_w = hi_w / factor;
  int nm = k * k;

  auto weights = std::make_shared<Grid>(
      attention_downsample_weights(hv, p));
  Grid out(lo_h, lo_w, c);
  for (int I = 0; I < lo_h; ++I) {
    int ys = window_start(I, factor, k);
    for (int J = 0; J < lo_w; ++J) {
      int xs = window_start(J, factor, k);
      const Real* wr = weights->row(I, J);
      Real* orow = out.row(I, J);
      for (int m = 0; m < nm; ++m) {
        Real wm = wr[m];
        if (wm == 0.0) continue;
        const Real* fr = hv.row(ys + m / k, xs + m % k);
        for (int t = 0; t < c; ++t) orow[t] += wm * fr[t];
      }
    }
  }

  Var sal = p.salience_w;
  Var bias = p.spatial_bias;
  return make_op(
      std::move(out), {f_hr, sal, bias},
      [f_hr, sal, bias, weights, lo_h, lo_w, hi_h, hi_w, c, k, nm,
       factor](const Grid& gout) {
        const Grid& hv = f_hr.value();
        const Real* salv = sal.value().data();
        Grid dhr(hi_h, hi_w, c);
        Grid dsal(1, c, 1);
        Grid dbias(k, k, 1);
        std::vector<Real> dw(nm);
        for (int I = 0; I < lo_h; ++I) {
          int ys = window_start(I, factor, k);
          for (int J = 0; J < lo_w; ++J) {
            int xs = window_start(J, factor, k);
            const Real* wr = weights->row(I, J);
            const Real* grow = gout.row(I, J);
            Real dsum = 0.0;
            for (int m = 0; m < nm; ++m) {
              Real wm = wr[m];
              if (wm == 0.0) {
                dw[m] = 0.0;
                continue;
              }
              int a = ys + m / k, b = xs + m % k;
              const Real* fr = hv.row(a, b);
              Real dot = 0.0;
              for (int t = 0; t < c; ++t) dot += grow[t] * fr[t];
              dw[m] = dot;
              dsum += wm * dot;
              // value-path gradient
              Real* dr = dhr.row(a, b);
              for (int t = 0; t < c; ++t) dr[t] += wm * grow[t];
            }
            for (int m = 0; m < nm; ++m) {
              Real wm = wr[m];
              if (wm == 0.0) continue;
              Real dsm = wm * (dw[m] - dsum);
              int a = ys + m / k, b = xs + m % k;
              const Real* fr = hv.row(a, b);
              Real* dr = dhr.row(a, b);
              dbias.at(m / k, m % k, 0) += dsm;
              for (int t = 0; t < c; ++t) {
                dr[t] += dsm * salv[t];
                dsal.at(0, t, 0) += dsm * fr[t];
              }
            }
          }
        }
        if (f_hr.requires_grad()) Var(f_hr).accumulate_grad(dhr);
        if (sal.requires_grad()) Var(sal).accumulate_grad(dsal);
        if (bias.requires_grad()) Var(bias).accumulate_grad(dbias);
      });
}

}  // namespace featsharp
