#pragma once

#include <string>

#include "featsharp/autodiff.hpp"
#include "featsharp/params.hpp"
#include "featsharp/rng.hpp"

namespace featsharp {

/// Which sub-layers of the refinement block are active. Mirrors the block
/// composition ablation; attention_mlp is the full block.
enum class BlockMode { linear_only, attention_only, mlp_only, attention_mlp };

std::string to_string(BlockMode m);
BlockMode block_mode_from_string(const std::string& s);

int swiglu_hidden_dim(int token_dim);  // 4*dim*2/3, rounded up to 8

/// Single-head transformer block over 2C-dim tokens: pre-norm 2D local
/// attention and pre-norm SwiGLU, both with residual adds. Output
/// projections start at zero so the block is born as the identity.
struct SharpenParams {
  Var wq, bq, wk, bk, wv, bv;  // (2C,2C,1) / (1,1,2C)
  Var wo, bo;                  // attention output projection, zero-init
  Var gate_w, gate_b, up_w, up_b;  // SwiGLU in-projections
  Var down_w, down_b;              // SwiGLU out-projection, zero-init
  Var lin_w, lin_b;                // linear_only ablation path, zero-init
  Var gain_attn, gain_mlp;         // pre-norm gains
  int window = 5;                  // odd
  BlockMode mode = BlockMode::attention_mlp;
};

SharpenParams make_sharpen_params(ParameterStore& store,
                                  const std::string& prefix, int token_dim,
                                  int window, BlockMode mode, Rng& rng);

/// Windowed self-attention: each position attends over the w x w window
/// centered on it, edge-clipped; softmax over the valid members only.
/// Applies the q/k/v projections of `p`; no output projection.
Var local_attention(const Var& tokens, const SharpenParams& p, int window);

/// The FeatSharp combine: concat(residual_up, mosaic) -> block -> first C
/// channels. With zeroed output projections this is exactly residual_up.
Var featsharp_combine(const Var& residual_up, const Var& mosaic,
                      const SharpenParams& p);

/// Attention weights per query, (H, W, w*w), zeros in edge-clipped slots.
Grid local_attention_weights(const Grid& tokens, const SharpenParams& p,
                             int window);

}  // namespace featsharp
