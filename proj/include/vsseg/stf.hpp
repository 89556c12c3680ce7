#pragma once

#include <string>

#include "vsseg/attention.hpp"
#include "vsseg/layers.hpp"
#include "vsseg/params.hpp"

namespace vsseg {

struct StfConfig {
  int d = 8;
  int heads = 2;
  int d_ff = 16;
  int layers = 1;
  BlockPartition partition{2, 2};
  Activation activation = Activation::Gelu;
  double ln_eps = 1e-5;
};

/// Registers encoder/decoder parameters for frames of size H x W under
/// the "stf." prefix. Positional encodings start at zero so initial
/// behavior is encoding-free.
void init_stf_params(ParamStore& ps, const StfConfig& cfg, int H, int W, const SeedBank& sb);

/// Concatenates three single-frame volumes along T and runs the encoder
/// stack: per layer, post-norm residual ICSA self-attention then FFN.
TokenVolume stf_encode(ModelCtx& ctx, const StfConfig& cfg, const TokenVolume& prev,
                       const TokenVolume& cur, const TokenVolume& next);

/// Retrieves the current frame from the encoded volume: per layer,
/// self-ICSA, cross-ICSA against the encoded features, then FFN, each
/// with post-norm residual wiring.
TokenVolume stf_decode(ModelCtx& ctx, const StfConfig& cfg, const TokenVolume& cur,
                       const TokenVolume& enc);

TokenVolume stf_forward(ModelCtx& ctx, const StfConfig& cfg, const TokenVolume& prev,
                        const TokenVolume& cur, const TokenVolume& next);

}  // namespace vsseg
