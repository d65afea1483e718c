#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "featsharp/grid.hpp"
#include "featsharp/view_transform.hpp"

namespace featsharp {

namespace detail {
struct Node {
  Grid value;
  Grid grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives this node's output gradient; accumulates into parents. Must not
  // capture the node itself (that would make a reference cycle).
  std::function<void(const Grid& out_grad)> backward;
};
}  // namespace detail

/// Handle to a node of the reverse-mode computation graph. Grids are
/// immutable once produced; a Var shares ownership of its node, so graphs
/// stay alive exactly as long as some output references them. Parameters are
/// leaf Vars that persist across steps and accumulate gradients additively
/// until zero_grad().
class Var {
 public:
  Var() = default;

  static Var constant(Grid v);
  static Var leaf(Grid v);  // requires_grad = true

  bool defined() const { return node_ != nullptr; }
  const Grid& value() const { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient accumulated by the last backward() calls. Throws if none.
  const Grid& grad() const;
  void zero_grad();
  void accumulate_grad(const Grid& g);

  /// In-place overwrite of a leaf's value (optimizer updates). Only valid
  /// for leaves; graph nodes are immutable.
  void set_value(Grid v);

  std::shared_ptr<detail::Node> node_;
};

/// Builds a graph node from a computed value. `backward` receives the output
/// gradient and is responsible for accumulating into the inputs it captured.
/// If no input requires a gradient the closure is dropped.
Var make_op(Grid value, std::vector<Var> inputs,
            std::function<void(const Grid& out_grad)> backward);

/// Reverse-mode sweep from a scalar loss. Gradients accumulate additively
/// into every reachable Var that requires them; call zero_grad between
/// passes to reset.
void backward(const Var& loss);

// ---- elementary differentiable operations ----

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);          // Hadamard
Var scale(const Var& a, Real s);
/// alpha * a + beta * b
Var affine_combine(const Var& a, const Var& b, Real alpha, Real beta);

Var sum(const Var& a);       // -> scalar
Var mean_all(const Var& a);  // -> scalar
Var mse(const Var& a, const Var& b);  // mean squared elementwise difference

/// Per-position projection: out[y,x,:] = w * in[y,x,:] + b.
/// w has shape (Cout, Cin, 1); b has shape (1, 1, Cout) or may be undefined.
Var channel_linear(const Var& x, const Var& w, const Var& b);

/// Per-position RMS normalization over channels with learnable gain (1,1,C).
Var rms_norm(const Var& x, const Var& gain, Real eps = 1e-6);

Var silu(const Var& x);

Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int c_begin, int c_end);

/// Half-pixel-center bilinear resampling, clamped at edges.
Var bilinear_resample(const Var& src, int out_h, int out_w);

/// Inverse-warp with bilinear sampling; out-of-bounds samples clamp to edge.
Var warp_apply(const Var& src, const ViewTransform& t, int out_h, int out_w);

/// Assemble a per_side x per_side block mosaic from equally shaped tiles
/// (row-major tile order).
Var stitch_blocks(std::span<const Var> tiles, int per_side);

// Grid-level conveniences for the non-learned paths.
Grid bilinear_resample(const Grid& src, int out_h, int out_w);
Grid warp_apply(const Grid& src, const ViewTransform& t, int out_h, int out_w);

}  // namespace featsharp
