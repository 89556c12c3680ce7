#pragma once

#include <vector>

#include "vsseg/autodiff.hpp"
#include "vsseg/tensor.hpp"

namespace vsseg {

struct VolumeDims {
  int d = 0, T = 0, H = 0, W = 0;
  int tokens() const { return T * H * W; }
  bool operator==(const VolumeDims&) const = default;
};

/// Spatial block grid: bh x bw blocks, each spanning the full temporal
/// extent and an (H/bh) x (W/bw) patch.
struct BlockPartition {
  int bh = 1, bw = 1;
  int blocks() const { return bh * bw; }
  bool operator==(const BlockPartition&) const = default;
};

/// Dense feature block; data laid out [d, T, H, W].
struct FeatureVolume {
  VolumeDims dims;
  Tensor data;

  static FeatureVolume from(VolumeDims dims, Tensor data);
};

/// Tape-side volume: token matrix [T*H*W, d] with rows ordered
/// row-major by (t, h, w).
struct TokenVolume {
  VolumeDims dims;
  Value tokens;
};

void check_partition(const VolumeDims& dims, const BlockPartition& p);

// Token-order maps (output position -> source token id). All are
// bijections on [0, T*H*W).
std::vector<int> block_order_map(const VolumeDims& dims, const BlockPartition& p);
std::vector<int> long_range_order_map(const VolumeDims& dims, const BlockPartition& p);
std::vector<int> invert_map(const std::vector<int>& map);
/// Tokens grouped by within-block offset (t, h', w'); each group holds
/// exactly p.blocks() tokens, one per block.
std::vector<std::vector<int>> long_range_groups(const VolumeDims& dims, const BlockPartition& p);

// Plain block operations; combine_blocks and long_range_unpermute are the
// exact inverses of their counterparts.
std::vector<FeatureVolume> partition_blocks(const FeatureVolume& x, const BlockPartition& p);
FeatureVolume combine_blocks(const std::vector<FeatureVolume>& blocks, const BlockPartition& p);
FeatureVolume long_range_permute(const FeatureVolume& x, const BlockPartition& p);
FeatureVolume long_range_unpermute(const FeatureVolume& x, const BlockPartition& p);

// Layout conversions between [d,T,H,W] volumes and [N,d] token matrices.
Tensor tokens_of_volume(const FeatureVolume& x);
FeatureVolume volume_of_tokens(const Tensor& tokens, VolumeDims dims);
Value tokens_of_volume_value(Value vol, const VolumeDims& dims);

struct MhaParams {
  int heads = 1;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct MhaParamRefs {
  int heads = 1;
  Value wq, bq, wk, bk, wv, bv, wo, bo;
};

/// softmax(q kᵀ / sqrt(d_k)) v
Value sda(Value q, Value k, Value v);

Value mha(Value q, Value k, Value v, const MhaParamRefs& p);

/// Block-wise attention: query block i attends only to key/value block i.
/// Q and K/V must share d, H, W and the block grid; temporal extents may
/// differ (cross-attention).
TokenVolume bwa(const TokenVolume& q, const TokenVolume& k, const TokenVolume& v,
                const BlockPartition& p, const MhaParamRefs& params);

struct IcsaParamRefs {
  // positional encodings in token layout [N, d]
  Value pe_long_q, pe_long_k, pe_short;
  MhaParamRefs long_stage, short_stage;
};

/// Interlaced cross-self attention: long-range cross-attention over
/// same-offset tokens gathered across blocks, then short-range
/// self-attention within blocks. Positional encodings are added to
/// query and key only.
TokenVolume icsa(const TokenVolume& q, const TokenVolume& kv, const BlockPartition& p,
                 const IcsaParamRefs& refs);

/// Full multi-head attention over all tokens, computed with plain loops
/// and no blocking. Oracle for tests and the cost estimator's dense
/// baseline; independent of the tape ops.
Tensor dense_attention_reference(const Tensor& q, const Tensor& k, const Tensor& v,
                                 const MhaParams& p);

}  // namespace vsseg
