#include "featsharp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace featsharp {

using detail::Node;

Var Var::constant(Grid v) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(v);
  return out;
}

Var Var::leaf(Grid v) {
  Var out = constant(std::move(v));
  out.node_->requires_grad = true;
  return out;
}

const Grid& Var::grad() const {
  if (!node_ || node_->grad.empty()) {
    throw std::runtime_error("no gradient accumulated");
  }
  return node_->grad;
}

void Var::zero_grad() {
  if (node_) node_->grad = Grid();
}

void Var::accumulate_grad(const Grid& g) {
  if (!node_->requires_grad) return;
  if (node_->grad.empty()) {
    node_->grad = Grid(node_->value.height(), node_->value.width(),
                       node_->value.channels());
  }
  Real* dst = node_->grad.data();
  const Real* src = g.data();
  size_t n = node_->grad.size();
  for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void Var::set_value(Grid v) {
  if (!node_->parents.empty()) {
    throw std::runtime_error("set_value on non-leaf node");
  }
  node_->value = std::move(v);
}

Var make_op(Grid value, std::vector<Var> inputs,
            std::function<void(const Grid& out_grad)> backward_fn) {
  Var out;
  out.node_ = std::make_shared<Node>();
  out.node_->value = std::move(value);
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.requires_grad()) {
      needs = true;
      break;
    }
  }
  if (needs) {
    out.node_->requires_grad = true;
    out.node_->backward = std::move(backward_fn);
    out.node_->parents.reserve(inputs.size());
    for (Var& v : inputs) out.node_->parents.push_back(v.node_);
  }
  return out;
}

void backward(const Var& loss) {
  if (!loss.defined()) throw std::runtime_error("backward on undefined var");
  if (!loss.value().is_scalar()) {
    throw std::runtime_error("backward requires a scalar loss");
  }
  // Topological order: every node appears after all of its parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node_.get(), 0});
  visited.insert(loss.node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  if (loss.node_->requires_grad) {
    loss.node_->grad = Grid(1, 1, 1, 0.0);
  } else {
    return;  // nothing reachable requires gradients
  }
  loss.node_->grad.data()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;      // leaf
    if (n->grad.empty()) continue;   // received no contribution
    n->backward(n->grad);
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* what) {
  if (!a.value().same_shape(b.value())) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch");
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Grid out = a.value();
  const Real* pb = b.value().data();
  Real* po = out.data();
  for (size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return make_op(std::move(out), {a, b}, [a, b](const Grid& g) {
    Var(a).accumulate_grad(g);
    Var(b).accumulate_grad(g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Grid out = a.value();
  const Real* pb = b.value().data();
  Real* po = out.data();
  for (size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  return make_op(std::move(out), {a, b}, [a, b](const Grid& g) {
    Var(a).accumulate_grad(g);
    if (b.requires_grad()) {
      Grid neg = g;
      for (Real& v : neg.raw()) v = -v;
      Var(b).accumulate_grad(neg);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Grid out = a.value();
  const Real* pb = b.value().data();
  Real* po = out.data();
  for (size_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
  return make_op(std::move(out), {a, b}, [a, b](const Grid& g) {
    if (a.requires_grad()) {
      Grid da = g;
      const Real* pb = b.value().data();
      Real* p = da.data();
      for (size_t i = 0; i < da.size(); ++i) p[i] *= pb[i];
      Var(a).accumulate_grad(da);
    }
    if (b.requires_grad()) {
      Grid db = g;
      const Real* pa = a.value().data();
      Real* p = db.data();
      for (size_t i = 0; i < db.size(); ++i) p[i] *= pa[i];
      Var(b).accumulate_grad(db);
    }
  });
}

Var scale(const Var& a, Real s) {
  Grid out = a.value();
  for (Real& v : out.raw()) v *= s;
  return make_op(std::move(out), {a}, [a, s](const Grid& g) {
    Grid da = g;
    for (Real& v : da.raw()) v *= s;
    Var(a).accumulate_grad(da);
  });
}

Var affine_combine(const Var& a, const Var& b, Real alpha, Real beta) {
  check_same_shape(a, b, "affine_combine");
  Grid out = a.value();
  const Real* pb = b.value().data();
  Real* po = out.data();
  for (size_t i = 0; i < out.size(); ++i) po[i] = alpha * po[i] + beta * pb[i];
  return make_op(std::move(out), {a, b}, [a, b, alpha, beta](const Grid& g) {
    if (a.requires_grad()) {
      Grid da = g;
      for (Real& v : da.raw()) v *= alpha;
      Var(a).accumulate_grad(da);
    }
    if (b.requires_grad()) {
      Grid db = g;
      for (Real& v : db.raw()) v *= beta;
      Var(b).accumulate_grad(db);
    }
  });
}

Var sum(const Var& a) {
  Real acc = 0.0;
  for (Real v : a.value().raw()) acc += v;
  return make_op(Grid::scalar(acc), {a}, [a](const Grid& g) {
    Real g0 = g.data()[0];
    Grid da(a.value().height(), a.value().width(), a.value().channels(), g0);
    Var(a).accumulate_grad(da);
  });
}

Var mean_all(const Var& a) {
  return scale(sum(a), 1.0 / static_cast<Real>(a.value().size()));
}

Var mse(const Var& a, const Var& b) {
  check_same_shape(a, b, "mse");
  const Real* pa = a.value().data();
  const Real* pb = b.value().data();
  size_t n = a.value().size();
  Real acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    Real d = pa[i] - pb[i];
    acc += d * d;
  }
  Real inv_n = 1.0 / static_cast<Real>(n);
  return make_op(Grid::scalar(acc * inv_n), {a, b},
                 [a, b, inv_n](const Grid& g) {
    Real c = 2.0 * inv_n * g.data()[0];
    const Real* pa = a.value().data();
    const Real* pb = b.value().data();
    size_t n = a.value().size();
    if (a.requires_grad()) {
      Grid da(a.value().height(), a.value().width(), a.value().channels());
      Real* p = da.data();
      for (size_t i = 0; i < n; ++i) p[i] = c * (pa[i] - pb[i]);
      Var(a).accumulate_grad(da);
    }
    if (b.requires_grad()) {
      Grid db(b.value().height(), b.value().width(), b.value().channels());
      Real* p = db.data();
      for (size_t i = 0; i < n; ++i) p[i] = c * (pb[i] - pa[i]);
      Var(b).accumulate_grad(db);
    }
  });
}

Var channel_linear(const Var& x, const Var& w, const Var& b) {
  const Grid& xv = x.value();
  const Grid& wv = w.value();
  int cin = xv.channels();
  int cout = wv.height();
  if (wv.width() != cin || wv.channels() != 1) {
    throw std::invalid_argument("channel_linear: weight shape mismatch");
  }
  if (b.defined() &&
      (b.value().channels() != cout || b.value().height() != 1 ||
       b.value().width() != 1)) {
    throw std::invalid_argument("channel_linear: bias shape mismatch");
  }
  int positions = xv.height() * xv.width();
  Grid out(xv.height(), xv.width(), cout);
  const Real* px = xv.data();
  const Real* pw = wv.data();
  const Real* pb = b.defined() ? b.value().data() : nullptr;
  Real* po = out.data();
  for (int p = 0; p < positions; ++p) {
    const Real* xr = px + static_cast<size_t>(p) * cin;
    Real* orow = po + static_cast<size_t>(p) * cout;
    for (int co = 0; co < cout; ++co) {
      const Real* wr = pw + static_cast<size_t>(co) * cin;
      Real acc = pb ? pb[co] : 0.0;
      for (int ci = 0; ci < cin; ++ci) acc += wr[ci] * xr[ci];
      orow[co] = acc;
    }
  }
  std::vector<Var> inputs = {x, w};
  if (b.defined()) inputs.push_back(b);
  return make_op(std::move(out), std::move(inputs),
                 [x, w, b, cin, cout, positions](const Grid& g) {
    const Real* px = x.value().data();
    const Real* pw = w.value().data();
    const Real* pg = g.data();
    if (x.requires_grad()) {
      Grid dx(x.value().height(), x.value().width(), cin);
      Real* pdx = dx.data();
      for (int p = 0; p < positions; ++p) {
        const Real* gr = pg + static_cast<size_t>(p) * cout;
        Real* dxr = pdx + static_cast<size_t>(p) * cin;
        for (int co = 0; co < cout; ++co) {
          Real gc = gr[co];
          const Real* wr = pw + static_cast<size_t>(co) * cin;
          for (int ci = 0; ci < cin; ++ci) dxr[ci] += gc * wr[ci];
        }
      }
      Var(x).accumulate_grad(dx);
    }
    if (w.requires_grad()) {
      Grid dw(cout, cin, 1);
      Real* pdw = dw.data();
      for (int p = 0; p < positions; ++p) {
        const Real* gr = pg + static_cast<size_t>(p) * cout;
        const Real* xr = px + static_cast<size_t>(p) * cin;
        for (int co = 0; co < cout; ++co) {
          Real gc = gr[co];
          Real* dwr = pdw + static_cast<size_t>(co) * cin;
          for (int ci = 0; ci < cin; ++ci) dwr[ci] += gc * xr[ci];
        }
      }
      Var(w).accumulate_grad(dw);
    }
    if (b.defined() && b.requires_grad()) {
      Grid db(1, 1, cout);
      Real* pdb = db.data();
      for (int p = 0; p < positions; ++p) {
        const Real* gr = pg + static_cast<size_t>(p) * cout;
        for (int co = 0; co < cout; ++co) pdb[co] += gr[co];
      }
      Var(b).accumulate_grad(db);
    }
  });
}

Var rms_norm(const Var& x, const Var& gain, Real eps) {
  const Grid& xv = x.value();
  int c = xv.channels();
  if (gain.value().channels() != c || gain.value().height() != 1 ||
      gain.value().width() != 1) {
    throw std::invalid_argument("rms_norm: gain shape mismatch");
  }
  int positions = xv.height() * xv.width();
  Grid out(xv.height(), xv.width(), c);
  std::vector<Real> inv_rms(positions);
  const Real* px = xv.data();
  const Real* pgain = gain.value().data();
  Real* po = out.data();
  for (int p = 0; p < positions; ++p) {
    const Real* xr = px + static_cast<size_t>(p) * c;
    Real m2 = 0.0;
    for (int k = 0; k < c; ++k) m2 += xr[k] * xr[k];
    m2 /= c;
    Real inv = 1.0 / std::sqrt(m2 + eps);
    inv_rms[p] = inv;
    Real* orow = po + static_cast<size_t>(p) * c;
    for (int k = 0; k < c; ++k) orow[k] = xr[k] * inv * pgain[k];
  }
  return make_op(std::move(out), {x, gain},
                 [x, gain, c, positions, inv_rms](const Grid& g) {
    const Real* px = x.value().data();
    const Real* pgain = gain.value().data();
    const Real* pg = g.data();
    Grid dx(x.value().height(), x.value().width(), c);
    Grid dgain(1, 1, c);
    Real* pdx = dx.data();
    Real* pdg = dgain.data();
    for (int p = 0; p < positions; ++p) {
      const Real* xr = px + static_cast<size_t>(p) * c;
      const Real* gr = pg + static_cast<size_t>(p) * c;
      Real inv = inv_rms[p];
      Real dot = 0.0;  // sum_k g_k * gain_k * x_k
      for (int k = 0; k < c; ++k) dot += gr[k] * pgain[k] * xr[k];
      Real coeff = dot * inv * inv * inv / c;
      Real* dxr = pdx + static_cast<size_t>(p) * c;
      for (int k = 0; k < c; ++k) {
        dxr[k] = gr[k] * pgain[k] * inv - xr[k] * coeff;
        pdg[k] += gr[k] * xr[k] * inv;
      }
    }
    if (x.requires_grad()) Var(x).accumulate_grad(dx);
    if (gain.requires_grad()) Var(gain).accumulate_grad(dgain);
  });
}

Var silu(const Var& x) {
  Grid out = x.value();
  for (Real& v : out.raw()) v = v / (1.0 + std::exp(-v));
  return make_op(std::move(out), {x}, [x](const Grid& g) {
    const Real* px = x.value().data();
    const Real* pg = g.data();
    Grid dx(x.value().height(), x.value().width(), x.value().channels());
    Real* pdx = dx.data();
    for (size_t i = 0; i < dx.size(); ++i) {
      Real s = 1.0 / (1.0 + std::exp(-px[i]));
      pdx[i] = pg[i] * s * (1.0 + px[i] * (1.0 - s));
    }
    Var(x).accumulate_grad(dx);
  });
}

Var concat_channels(const Var& a, const Var& b) {
  const Grid& av = a.value();
  const Grid& bv = b.value();
  if (av.height() != bv.height() || av.width() != bv.width()) {
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  }
  int ca = av.channels(), cb = bv.channels();
  int positions = av.height() * av.width();
  Grid out(av.height(), av.width(), ca + cb);
  for (int p = 0; p < positions; ++p) {
    const Real* ra = av.data() + static_cast<size_t>(p) * ca;
    const Real* rb = bv.data() + static_cast<size_t>(p) * cb;
    Real* ro = out.data() + static_cast<size_t>(p) * (ca + cb);
    std::copy(ra, ra + ca, ro);
    std::copy(rb, rb + cb, ro + ca);
  }
  return make_op(std::move(out), {a, b},
                 [a, b, ca, cb, positions](const Grid& g) {
    if (a.requires_grad()) {
      Grid da(a.value().height(), a.value().width(), ca);
      for (int p = 0; p < positions; ++p) {
        const Real* rg = g.data() + static_cast<size_t>(p) * (ca + cb);
        Real* rd = da.data() + static_cast<size_t>(p) * ca;
        std::copy(rg, rg + ca, rd);
      }
      Var(a).accumulate_grad(da);
    }
    if (b.requires_grad()) {
      Grid db(b.value().height(), b.value().width(), cb);
      for (int p = 0; p < positions; ++p) {
        const Real* rg = g.data() + static_cast<size_t>(p) * (ca + cb) + ca;
        Real* rd = db.data() + static_cast<size_t>(p) * cb;
        std::copy(rg, rg + cb, rd);
      }
      Var(b).accumulate_grad(db);
    }
  });
}

Var slice_channels(const Var& x, int c_begin, int c_end) {
  const Grid& xv = x.value();
  if (c_begin < 0 || c_end > xv.channels() || c_begin >= c_end) {
    throw std::invalid_argument("slice_channels: bad range");
  }
  int c = xv.channels();
  int cs = c_end - c_begin;
  int positions = xv.height() * xv.width();
  Grid out(xv.height(), xv.width(), cs);
  for (int p = 0; p < positions; ++p) {
    const Real* rx = xv.data() + static_cast<size_t>(p) * c + c_begin;
    Real* ro = out.data() + static_cast<size_t>(p) * cs;
    std::copy(rx, rx + cs, ro);
  }
  return make_op(std::move(out), {x},
                 [x, c, cs, c_begin, positions](const Grid& g) {
    Grid dx(x.value().height(), x.value().width(), c);
    for (int p = 0; p < positions; ++p) {
      const Real* rg = g.data() + static_cast<size_t>(p) * cs;
      Real* rd = dx.data() + static_cast<size_t>(p) * c + c_begin;
      std::copy(rg, rg + cs, rd);
    }
    Var(x).accumulate_grad(dx);
  });
}

namespace {

struct SampleCoef {
  int y0, y1, x0, x1;
  Real fy, fx;
};

inline SampleCoef make_coef(Real sy, Real sx, int h, int w) {
  if (!std::isfinite(sy)) sy = 0.0;
  if (!std::isfinite(sx)) sx = 0.0;
  SampleCoef c;
  int y0 = static_cast<int>(std::floor(sy));
  int x0 = static_cast<int>(std::floor(sx));
  c.fy = sy - y0;
  c.fx = sx - x0;
  c.y0 = clamp_index(y0, h);
  c.y1 = clamp_index(y0 + 1, h);
  c.x0 = clamp_index(x0, w);
  c.x1 = clamp_index(x0 + 1, w);
  return c;
}

Grid gather_bilinear(const Grid& src, const std::vector<SampleCoef>& coef,
                     int out_h, int out_w) {
  int c = src.channels();
  Grid out(out_h, out_w, c);
  Real* po = out.data();
  for (int p = 0; p < out_h * out_w; ++p) {
    const SampleCoef& s = coef[p];
    const Real* r00 = src.row(s.y0, s.x0);
    const Real* r01 = src.row(s.y0, s.x1);
    const Real* r10 = src.row(s.y1, s.x0);
    const Real* r11 = src.row(s.y1, s.x1);
    Real w00 = (1.0 - s.fy) * (1.0 - s.fx);
    Real w01 = (1.0 - s.fy) * s.fx;
    Real w10 = s.fy * (1.0 - s.fx);
    Real w11 = s.fy * s.fx;
    Real* orow = po + static_cast<size_t>(p) * c;
    for (int k = 0; k < c; ++k) {
      orow[k] = w00 * r00[k] + w01 * r01[k] + w10 * r10[k] + w11 * r11[k];
    }
  }
  return out;
}

void scatter_bilinear(Grid& dsrc, const std::vector<SampleCoef>& coef,
                      const Grid& g) {
  int c = dsrc.channels();
  const Real* pg = g.data();
  for (int p = 0; p < g.height() * g.width(); ++p) {
    const SampleCoef& s = coef[p];
    Real w00 = (1.0 - s.fy) * (1.0 - s.fx);
    Real w01 = (1.0 - s.fy) * s.fx;
    Real w10 = s.fy * (1.0 - s.fx);
    Real w11 = s.fy * s.fx;
    const Real* gr = pg + static_cast<size_t>(p) * c;
    Real* r00 = dsrc.row(s.y0, s.x0);
    Real* r01 = dsrc.row(s.y0, s.x1);
    Real* r10 = dsrc.row(s.y1, s.x0);
    Real* r11 = dsrc.row(s.y1, s.x1);
    for (int k = 0; k < c; ++k) {
      r00[k] += w00 * gr[k];
      r01[k] += w01 * gr[k];
      r10[k] += w10 * gr[k];
      r11[k] += w11 * gr[k];
    }
  }
}

Var sampled_gather_op(const Var& src, std::vector<SampleCoef> coef, int out_h,
                      int out_w) {
  Grid out = gather_bilinear(src.value(), coef, out_h, out_w);
  return make_op(std::move(out), {src},
                 [src, coef = std::move(coef)](const Grid& g) {
    Grid dsrc(src.value().height(), src.value().width(),
              src.value().channels());
    scatter_bilinear(dsrc, coef, g);
    Var(src).accumulate_grad(dsrc);
  });
}

}  // namespace

Var bilinear_resample(const Var& src, int out_h, int out_w) {
  const Grid& sv = src.value();
  if (sv.empty()) throw std::invalid_argument("empty grid");
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("bilinear_resample: bad output size");
  }
  Real ry = static_cast<Real>(sv.height()) / out_h;
  Real rx = static_cast<Real>(sv.width()) / out_w;
  std::vector<SampleCoef> coef(static_cast<size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    Real sy = (oy + 0.5) * ry - 0.5;
    for (int ox = 0; ox < out_w; ++ox) {
      Real sx = (ox + 0.5) * rx - 0.5;
      coef[static_cast<size_t>(oy) * out_w + ox] =
          make_coef(sy, sx, sv.height(), sv.width());
    }
  }
  return sampled_gather_op(src, std::move(coef), out_h, out_w);
}

Var warp_apply(const Var& src, const ViewTransform& t, int out_h, int out_w) {
  const Grid& sv = src.value();
  if (sv.empty()) throw std::invalid_argument("empty grid");
  Homography inv = t.forward().inverse();  // throws on degenerate transform
  std::vector<SampleCoef> coef(static_cast<size_t>(out_h) * out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    Real v = (oy + 0.5) / out_h;
    for (int ox = 0; ox < out_w; ++ox) {
      Real u = (ox + 0.5) / out_w;
      double su, sv2;
      inv.apply(u, v, su, sv2);
      Real sx = su * sv.width() - 0.5;
      Real sy = sv2 * sv.height() - 0.5;
      coef[static_cast<size_t>(oy) * out_w + ox] =
          make_coef(sy, sx, sv.height(), sv.width());
    }
  }
  return sampled_gather_op(src, std::move(coef), out_h, out_w);
}

Var stitch_blocks(std::span<const Var> tiles, int per_side) {
  if (per_side < 1 ||
      tiles.size() != static_cast<size_t>(per_side) * per_side) {
    throw std::invalid_argument("stitch: tile count mismatch");
  }
  const Grid& first = tiles[0].value();
  for (const Var& t : tiles) {
    if (!t.value().same_shape(first)) {
      throw std::invalid_argument("heterogeneous tiles");
    }
  }
  int th = first.height(), tw = first.width(), c = first.channels();
  Grid out(per_side * th, per_side * tw, c);
  for (int ti = 0; ti < per_side; ++ti) {
    for (int tj = 0; tj < per_side; ++tj) {
      const Grid& tile = tiles[static_cast<size_t>(ti) * per_side + tj].value();
      for (int y = 0; y < th; ++y) {
        const Real* srow = tile.row(y, 0);
        Real* drow = out.row(ti * th + y, tj * tw);
        std::copy(srow, srow + static_cast<size_t>(tw) * c, drow);
      }
    }
  }
  std::vector<Var> inputs(tiles.begin(), tiles.end());
  return make_op(std::move(out), inputs,
                 [inputs, per_side, th, tw, c](const Grid& g) {
    for (int ti = 0; ti < per_side; ++ti) {
      for (int tj = 0; tj < per_side; ++tj) {
        const Var& tile = inputs[static_cast<size_t>(ti) * per_side + tj];
        if (!tile.requires_grad()) continue;
        Grid dt(th, tw, c);
        for (int y = 0; y < th; ++y) {
          const Real* srow = g.row(ti * th + y, tj * tw);
          Real* drow = dt.row(y, 0);
          std::copy(srow, srow + static_cast<size_t>(tw) * c, drow);
        }
        Var(tile).accumulate_grad(dt);
      }
    }
  });
}

Grid bilinear_resample(const Grid& src, int out_h, int out_w) {
  return bilinear_resample(Var::constant(src), out_h, out_w).value();
}

Grid warp_apply(const Grid& src, const ViewTransform& t, int out_h,
                int out_w) {
  return warp_apply(Var::constant(src), t, out_h, out_w).value();
}

}  // namespace featsharp
