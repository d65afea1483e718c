#include "featsharp/jbu.hpp"

#include <cmath>
#include <stdexcept>

namespace featsharp {

StackPlan build_stack(int z) {
  if (z <= 0) throw std::invalid_argument("upsample factor must be positive");
  StackPlan plan;
  int rest = z;
  for (int f = 2; rest > 1; ++f) {
    while (rest % f == 0) {
      plan.factors.push_back(f);
      rest /= f;
    }
  }
  return plan;
}

JbuParams make_jbu_params(ParameterStore& store, const std::string& prefix,
                          int radius, int range_dim, Rng& rng) {
  JbuParams p;
  p.radius = radius;
  p.range_dim = range_dim;
  p.log_sigma_spatial =
      store.create(prefix + ".log_sigma_spatial", Grid::scalar(std::log(2.0)));
  p.log_sigma_range =
      store.create(prefix + ".log_sigma_range", Grid::scalar(0.0));
  Grid w1(range_dim, 3, 1);
  for (Real& v : w1.raw()) v = rng.normal() / std::sqrt(3.0);
  Grid w2(range_dim, range_dim, 1);
  for (Real& v : w2.raw()) v = rng.normal() / std::sqrt(static_cast<Real>(range_dim));
  p.w1 = store.create(prefix + ".range_w1", std::move(w1));
  p.b1 = store.create(prefix + ".range_b1", Grid(1, 1, range_dim));
  p.w2 = store.create(prefix + ".range_w2", std::move(w2));
  p.b2 = store.create(prefix + ".range_b2", Grid(1, 1, range_dim));
  return p;
}

namespace {

struct GatherCoef {
  int y0, y1, x0, x1;
  Real fy, fx;
};

// Bilinear lookup coefficients into the low-res grid for every nominal
// hi-res position in [-r, H+r) x [-r, W+r).
std::vector<GatherCoef> coarse_gather_table(int out_h, int out_w, int lr_h,
                                            int lr_w, int factor, int radius) {
  int gh = out_h + 2 * radius, gw = out_w + 2 * radius;
  std::vector<GatherCoef> table(static_cast<size_t>(gh) * gw);
  for (int a = -radius; a < out_h + radius; ++a) {
    Real sy = (a + 0.5) / factor - 0.5;
    int y0 = static_cast<int>(std::floor(sy));
    Real fy = sy - y0;
    for (int b = -radius; b < out_w + radius; ++b) {
      Real sx = (b + 0.5) / factor - 0.5;
      int x0 = static_cast<int>(std::floor(sx));
      GatherCoef g;
      g.fy = fy;
      g.fx = sx - x0;
      g.y0 = clamp_index(y0, lr_h);
      g.y1 = clamp_index(y0 + 1, lr_h);
      g.x0 = clamp_index(x0, lr_w);
      g.x1 = clamp_index(x0 + 1, lr_w);
      table[static_cast<size_t>(a + radius) * gw + (b + radius)] = g;
    }
  }
  return table;
}

// Combined range*spatial mixing weights. The normalized product of the
// range softmax and the spatial Gaussian equals a single softmax over
// dot/sigma_r^2 - dist^2/(2 sigma_sp^2); the separate-normalization route is
// kept in the tests as the independent oracle.
void compute_weights(const Grid& h, Real log_sigma_spatial,
                     Real log_sigma_range, int radius,
                     std::vector<Real>& weights, std::vector<Real>& dots) {
  int out_h = h.height(), out_w = h.width(), d = h.channels();
  int win = 2 * radius + 1;
  int nm = win * win;
  weights.resize(static_cast<size_t>(out_h) * out_w * nm);
  dots.resize(weights.size());
  Real inv_sr2 = std::exp(-2.0 * log_sigma_range);
  Real inv_2sp2 = 0.5 * std::exp(-2.0 * log_sigma_spatial);
  std::vector<Real> scores(nm);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      const Real* q = h.row(i, j);
      size_t base = (static_cast<size_t>(i) * out_w + j) * nm;
      Real smax = -1e300;
      for (int m = 0; m < nm; ++m) {
        int di = m / win - radius, dj = m % win - radius;
        const Real* k =
            h.row(clamp_index(i + di, out_h), clamp_index(j + dj, out_w));
        Real dot = 0.0;
        for (int t = 0; t < d; ++t) dot += q[t] * k[t];
        dots[base + m] = dot;
        Real s = dot * inv_sr2 -
                 static_cast<Real>(di * di + dj * dj) * inv_2sp2;
        scores[m] = s;
        if (s > smax) smax = s;
      }
      Real z = 0.0;
      for (int m = 0; m < nm; ++m) {
        Real e = std::exp(scores[m] - smax);
        weights[base + m] = e;
        z += e;
      }
      Real inv_z = 1.0 / z;
      for (int m = 0; m < nm; ++m) weights[base + m] *= inv_z;
    }
  }
}

}  // namespace

Grid jbu_weights(const Grid& guidance, const JbuParams& p) {
  Var h = channel_linear(
      silu(channel_linear(Var::constant(guidance), p.w1, p.b1)), p.w2, p.b2);
  std::vector<Real> weights, dots;
  compute_weights(h.value(), p.log_sigma_spatial.value().scalar_value(),
                  p.log_sigma_range.value().scalar_value(), p.radius, weights,
                  dots);
  int nm = (2 * p.radius + 1) * (2 * p.radius + 1);
  return Grid::from_data(guidance.height(), guidance.width(), nm,
                         std::move(weights));
}

Var jbu_upsample(const Var& f_lr, const Grid& guidance, const JbuParams& p,
                 int factor) {
  const Grid& lr = f_lr.value();
  if (lr.empty()) throw std::invalid_argument("empty grid");
  if (factor < 2) throw std::invalid_argument("jbu: factor must be >= 2");
  if (guidance.height() != factor * lr.height() ||
      guidance.width() != factor * lr.width()) {
    throw std::invalid_argument("jbu: guidance size mismatch");
  }
  if (!guidance.all_finite()) {
    throw std::invalid_argument("jbu: non-finite guidance");
  }

  Var h = channel_linear(
      silu(channel_linear(Var::constant(guidance), p.w1, p.b1)), p.w2, p.b2);

  int out_h = guidance.height(), out_w = guidance.width();
  int lr_h = lr.height(), lr_w = lr.width(), c = lr.channels();
  int radius = p.radius;
  int win = 2 * radius + 1, nm = win * win;

  auto weights = std::make_shared<std::vector<Real>>();
  auto dots = std::make_shared<std::vector<Real>>();
  compute_weights(h.value(), p.log_sigma_spatial.value().scalar_value(),
                  p.log_sigma_range.value().scalar_value(), radius, *weights,
                  *dots);
  auto table =
      std::make_shared<std::vector<GatherCoef>>(coarse_gather_table(
          out_h, out_w, lr_h, lr_w, factor, radius));

  int gw = out_w + 2 * radius;
  Grid out(out_h, out_w, c);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      size_t base = (static_cast<size_t>(i) * out_w + j) * nm;
      Real* orow = out.row(i, j);
      for (int m = 0; m < nm; ++m) {
        int di = m / win - radius, dj = m % win - radius;
        const GatherCoef& g =
            (*table)[static_cast<size_t>(i + di + radius) * gw +
                     (j + dj + radius)];
        Real w00 = (1.0 - g.fy) * (1.0 - g.fx), w01 = (1.0 - g.fy) * g.fx;
        Real w10 = g.fy * (1.0 - g.fx), w11 = g.fy * g.fx;
        const Real* r00 = lr.row(g.y0, g.x0);
        const Real* r01 = lr.row(g.y0, g.x1);
        const Real* r10 = lr.row(g.y1, g.x0);
        const Real* r11 = lr.row(g.y1, g.x1);
        Real wm = (*weights)[base + m];
        for (int t = 0; t < c; ++t) {
          orow[t] += wm * (w00 * r00[t] + w01 * r01[t] + w10 * r10[t] +
                           w11 * r11[t]);
        }
      }
    }
  }

  Var ls_sp = p.log_sigma_spatial;
  Var ls_r = p.log_sigma_range;
  return make_op(
      std::move(out), {f_lr, h, ls_sp, ls_r},
      [f_lr, h, ls_sp, ls_r, weights, dots, table, out_h, out_w, lr_h, lr_w,
       c, radius, win, nm, gw](const Grid& gout) {
        const Grid& lr = f_lr.value();
        const Grid& hv = h.value();
        int d = hv.channels();
        Real inv_sr2 = std::exp(-2.0 * ls_r.value().scalar_value());
        Real inv_2sp2 =
            0.5 * std::exp(-2.0 * ls_sp.value().scalar_value());

        Grid dlr(lr_h, lr_w, c);
        Grid dh(out_h, out_w, d);
        Real d_inv_sr2 = 0.0, d_inv_2sp2 = 0.0;
        std::vector<Real> dw(nm);
        bool need_flr = f_lr.requires_grad();
        for (int i = 0; i < out_h; ++i) {
          for (int j = 0; j < out_w; ++j) {
            size_t base = (static_cast<size_t>(i) * out_w + j) * nm;
            const Real* grow = gout.row(i, j);
            Real dsum = 0.0;
            for (int m = 0; m < nm; ++m) {
              int di = m / win - radius, dj = m % win - radius;
              const GatherCoef& g =
                  (*table)[static_cast<size_t>(i + di + radius) * gw +
                           (j + dj + radius)];
              Real w00 = (1.0 - g.fy) * (1.0 - g.fx),
                   w01 = (1.0 - g.fy) * g.fx;
              Real w10 = g.fy * (1.0 - g.fx), w11 = g.fy * g.fx;
              const Real* r00 = lr.row(g.y0, g.x0);
              const Real* r01 = lr.row(g.y0, g.x1);
              const Real* r10 = lr.row(g.y1, g.x0);
              const Real* r11 = lr.row(g.y1, g.x1);
              Real dot_gf = 0.0;
              for (int t = 0; t < c; ++t) {
                Real fv = w00 * r00[t] + w01 * r01[t] + w10 * r10[t] +
                          w11 * r11[t];
                dot_gf += grow[t] * fv;
              }
              dw[m] = dot_gf;
              Real wm = (*weights)[base + m];
              dsum += wm * dot_gf;
              if (need_flr) {
                // d out / d f_lr: scatter wm * gout through the bilinear taps
                Real s = wm;
                Real* q00 = dlr.row(g.y0, g.x0);
                Real* q01 = dlr.row(g.y0, g.x1);
                Real* q10 = dlr.row(g.y1, g.x0);
                Real* q11 = dlr.row(g.y1, g.x1);
                for (int t = 0; t < c; ++t) {
                  Real gv = s * grow[t];
                  q00[t] += w00 * gv;
                  q01[t] += w01 * gv;
                  q10[t] += w10 * gv;
                  q11[t] += w11 * gv;
                }
              }
            }
            const Real* q = hv.row(i, j);
            Real* dq = dh.row(i, j);
            for (int m = 0; m < nm; ++m) {
              Real wm = (*weights)[base + m];
              Real dsm = wm * (dw[m] - dsum);  // softmax backward
              int di = m / win - radius, dj = m % win - radius;
              d_inv_sr2 += dsm * (*dots)[base + m];
              d_inv_2sp2 -= dsm * static_cast<Real>(di * di + dj * dj);
              const Real* k = hv.row(clamp_index(i + di, out_h),
                                     clamp_index(j + dj, out_w));
              Real* dk = dh.row(clamp_index(i + di, out_h),
                                clamp_index(j + dj, out_w));
              Real cq = dsm * inv_sr2;
              for (int t = 0; t < d; ++t) {
                dq[t] += cq * k[t];
                dk[t] += cq * q[t];
              }
            }
          }
        }
        if (need_flr) Var(f_lr).accumulate_grad(dlr);
        if (h.requires_grad()) Var(h).accumulate_grad(dh);
        if (ls_r.requires_grad()) {
          Var(ls_r).accumulate_grad(
              Grid::scalar(d_inv_sr2 * -2.0 * inv_sr2));
        }
        if (ls_sp.requires_grad()) {
          Var(ls_sp).accumulate_grad(
              Grid::scalar(d_inv_2sp2 * -2.0 * inv_2sp2));
        }
      });
}

Var jbu_stack_upsample(const Var& f_lr, const Grid& image,
                       std::span<const JbuParams> stage_params,
                       const StackPlan& plan) {
  if (stage_params.size() < plan.factors.size()) {
    throw std::invalid_argument("jbu stack: missing stage parameters");
  }
  Var cur = f_lr;
  for (size_t s = 0; s < plan.factors.size(); ++s) {
    int factor = plan.factors[s];
    int gh = cur.value().height() * factor;
    int gwd = cur.value().width() * factor;
    Grid guidance = bilinear_resample(image, gh, gwd);
    cur = jbu_upsample(cur, guidance, stage_params[s], factor);
  }
  return cur;
}

}  // namespace featsharp
