#include "vsseg/attention.hpp"

#include <cmath>
#include <string>

#include "vsseg/errors.hpp"

namespace vsseg {

FeatureVolume FeatureVolume::from(VolumeDims dims, Tensor data) {
  if (dims.d < 1 || dims.T < 1 || dims.H < 1 || dims.W < 1) {
    throw ShapeError("feature volume extents must be >= 1");
  }
  Shape want{dims.d, dims.T, dims.H, dims.W};
  if (data.shape != want) {
    throw ShapeError("feature volume data " + shape_str(data.shape) + " vs dims " +
                     shape_str(want));
  }
  return FeatureVolume{dims, std::move(data)};
}

void check_partition(const VolumeDims& dims, const BlockPartition& p) {
  if (p.bh < 1 || p.bw < 1) throw PartitionError("block grid extents must be >= 1");
  if (dims.H % p.bh != 0 || dims.W % p.bw != 0) {
    throw PartitionError("block grid " + std::to_string(p.bh) + "x" + std::to_string(p.bw) +
                         " does not divide spatial extents " + std::to_string(dims.H) + "x" +
                         std::to_string(dims.W));
  }
}

std::vector<int> block_order_map(const VolumeDims& dims, const BlockPartition& p) {
  check_partition(dims, p);
  const int sh = dims.H / p.bh, sw = dims.W / p.bw;
  std::vector<int> map;
  map.reserve(static_cast<std::size_t>(dims.tokens()));
  for (int bh = 0; bh < p.bh; ++bh) {
    for (int bw = 0; bw < p.bw; ++bw) {
      for (int t = 0; t < dims.T; ++t) {
        for (int h = 0; h < sh; ++h) {
          for (int w = 0; w < sw; ++w) {
            map.push_back((t * dims.H + bh * sh + h) * dims.W + bw * sw + w);
          }
        }
      }
    }
  }
  return map;
}

std::vector<int> long_range_order_map(const VolumeDims& dims, const BlockPartition& p) {
  check_partition(dims, p);
  const int sh = dims.H / p.bh, sw = dims.W / p.bw;
  std::vector<int> map;
  map.reserve(static_cast<std::size_t>(dims.tokens()));
  // Permuted position (t, a, b) with a = h'*bh + bh_idx, b = w'*bw + bw_idx
  // holds the token whose block is (bh_idx, bw_idx) and whose within-block
  // offset is (h', w').
  for (int t = 0; t < dims.T; ++t) {
    for (int a = 0; a < dims.H; ++a) {
      const int hp = a / p.bh, bi = a % p.bh;
      for (int b = 0; b < dims.W; ++b) {
        const int wp = b / p.bw, bj = b % p.bw;
        map.push_back((t * dims.H + bi * sh + hp) * dims.W + bj * sw + wp);
      }
    }
  }
  return map;
}

std::vector<int> invert_map(const std::vector<int>& map) {
  std::vector<int> inv(map.size(), -1);
  for (std::size_t i = 0; i < map.size(); ++i) {
    inv[static_cast<std::size_t>(map[i])] = static_cast<int>(i);
  }
  return inv;
}

std::vector<std::vector<int>> long_range_groups(const VolumeDims& dims, const BlockPartition& p) {
  check_partition(dims, p);
  const int sh = dims.H / p.bh, sw = dims.W / p.bw;
  std::vector<std::vector<int>> groups;
  groups.reserve(static_cast<std::size_t>(dims.T) * sh * sw);
  for (int t = 0; t < dims.T; ++t) {
    for (int hp = 0; hp < sh; ++hp) {
      for (int wp = 0; wp < sw; ++wp) {
        std::vector<int> g;
        g.reserve(static_cast<std::size_t>(p.blocks()));
        for (int bi = 0; bi < p.bh; ++bi) {
          for (int bj = 0; bj < p.bw; ++bj) {
            g.push_back((t * dims.H + bi * sh + hp) * dims.W + bj * sw + wp);
          }
        }
        groups.push_back(std::move(g));
      }
    }
  }
  return groups;
}

namespace {

// Move whole tokens (all d channels) of a [d,T,H,W] volume according to a
// token-order map.
Tensor apply_token_map(const FeatureVolume& x, const std::vector<int>& map) {
  const int n = x.dims.tokens();
  Tensor out = Tensor::zeros(x.data.shape);
  for (int c = 0; c < x.dims.d; ++c) {
    const double* src = x.data.data.data() + static_cast<std::size_t>(c) * n;
    double* dst = out.data.data() + static_cast<std::size_t>(c) * n;
    for (int i = 0; i < n; ++i) dst[i] = src[map[static_cast<std::size_t>(i)]];
  }
  return out;
}

}  // namespace

std::vector<FeatureVolume> partition_blocks(const FeatureVolume& x, const BlockPartition& p) {
  check_partition(x.dims, p);
  const int sh = x.dims.H / p.bh, sw = x.dims.W / p.bw;
  std::vector<FeatureVolume> blocks;
  blocks.reserve(static_cast<std::size_t>(p.blocks()));
  for (int bi = 0; bi < p.bh; ++bi) {
    for (int bj = 0; bj < p.bw; ++bj) {
      VolumeDims bd{x.dims.d, x.dims.T, sh, sw};
      Tensor t = Tensor::zeros({bd.d, bd.T, bd.H, bd.W});
      for (int c = 0; c < bd.d; ++c) {
        for (int tt = 0; tt < bd.T; ++tt) {
          for (int h = 0; h < sh; ++h) {
            for (int w = 0; w < sw; ++w) {
              t.at({c, tt, h, w}) = x.data.at({c, tt, bi * sh + h, bj * sw + w});
            }
          }
        }
      }
      blocks.push_back(FeatureVolume{bd, std::move(t)});
    }
  }
  return blocks;
}

FeatureVolume combine_blocks(const std::vector<FeatureVolume>& blocks, const BlockPartition& p) {
  if (static_cast<int>(blocks.size()) != p.blocks()) {
    throw PartitionError("combine_blocks: got " + std::to_string(blocks.size()) +
                         " blocks for a " + std::to_string(p.bh) + "x" + std::to_string(p.bw) +
                         " grid");
  }
  const VolumeDims bd = blocks[0].dims;
  for (const FeatureVolume& b : blocks) {
    if (!(b.dims == bd)) throw PartitionError("combine_blocks: blocks differ in shape");
  }
  VolumeDims dims{bd.d, bd.T, bd.H * p.bh, bd.W * p.bw};
  Tensor out = Tensor::zeros({dims.d, dims.T, dims.H, dims.W});
  for (int bi = 0; bi < p.bh; ++bi) {
    for (int bj = 0; bj < p.bw; ++bj) {
      const FeatureVolume& b = blocks[static_cast<std::size_t>(bi * p.bw + bj)];
      for (int c = 0; c < bd.d; ++c) {
        for (int tt = 0; tt < bd.T; ++tt) {
          for (int h = 0; h < bd.H; ++h) {
            for (int w = 0; w < bd.W; ++w) {
              out.at({c, tt, bi * bd.H + h, bj * bd.W + w}) = b.data.at({c, tt, h, w});
            }
          }
        }
      }
    }
  }
  return FeatureVolume{dims, std::move(out)};
}

FeatureVolume long_range_permute(const FeatureVolume& x, const BlockPartition& p) {
  return FeatureVolume{x.dims, apply_token_map(x, long_range_order_map(x.dims, p))};
}

FeatureVolume long_range_unpermute(const FeatureVolume& x, const BlockPartition& p) {
  return FeatureVolume{x.dims, apply_token_map(x, invert_map(long_range_order_map(x.dims, p)))};
}

Tensor tokens_of_volume(const FeatureVolume& x) {
  const int n = x.dims.tokens();
  Tensor out = Tensor::zeros({n, x.dims.d});
  for (int c = 0; c < x.dims.d; ++c) {
    const double* src = x.data.data.data() + static_cast<std::size_t>(c) * n;
    for (int i = 0; i < n; ++i) out.data[static_cast<std::size_t>(i) * x.dims.d + c] = src[i];
  }
  return out;
}

FeatureVolume volume_of_tokens(const Tensor& tokens, VolumeDims dims) {
  if (tokens.rank() != 2 || tokens.shape[0] != dims.tokens() || tokens.shape[1] != dims.d) {
    throw ShapeError("volume_of_tokens: " + shape_str(tokens.shape) + " vs dims");
  }
  Tensor out = Tensor::zeros({dims.d, dims.T, dims.H, dims.W});
  const int n = dims.tokens();
  for (int c = 0; c < dims.d; ++c) {
    double* dst = out.data.data() + static_cast<std::size_t>(c) * n;
    for (int i = 0; i < n; ++i) dst[i] = tokens.data[static_cast<std::size_t>(i) * dims.d + c];
  }
  return FeatureVolume{dims, std::move(out)};
}

Value tokens_of_volume_value(Value vol, const VolumeDims& dims) {
  Shape want{dims.d, dims.T, dims.H, dims.W};
  if (vol.shape() != want) {
    throw ShapeError("tokens_of_volume_value: " + shape_str(vol.shape()) + " vs " +
                     shape_str(want));
  }
  Value moved = permute_axes(vol, {1, 2, 3, 0});
  return reshape(moved, {dims.tokens(), dims.d});
}

Value sda(Value q, Value k, Value v) {
  const Tensor& tq = q.val();
  const Tensor& tk = k.val();
  const Tensor& tv = v.val();
  if (tq.rank() != 2 || tk.rank() != 2 || tv.rank() != 2) {
    throw ShapeError("sda: rank-2 operands required");
  }
  if (tq.shape[1] != tk.shape[1]) {
    throw ShapeError("sda: query dim " + std::to_string(tq.shape[1]) + " vs key dim " +
                     std::to_string(tk.shape[1]));
  }
  if (tk.shape[0] != tv.shape[0]) {
    throw ShapeError("sda: key count " + std::to_string(tk.shape[0]) + " vs value count " +
                     std::to_string(tv.shape[0]));
  }
  Value scores = matmul(q, transpose2d(k));
  Value scaled = scale(scores, 1.0 / std::sqrt(static_cast<double>(tq.shape[1])));
  Value probs = softmax(scaled, 1);
  return matmul(probs, v);
}

Value mha(Value q, Value k, Value v, const MhaParamRefs& p) {
  const int d = q.val().shape[1];
  if (k.val().shape[1] != d || v.val().shape[1] != d) {
    throw ShapeError("mha: operand feature dims differ");
  }
  if (p.heads < 1 || d % p.heads != 0) {
    throw ShapeError("mha: head count " + std::to_string(p.heads) +
                     " does not divide feature dim " + std::to_string(d));
  }
  const int dk = d / p.heads;
  Value qp = linear(q, p.wq, p.bq);
  Value kp = linear(k, p.wk, p.bk);
  Value vp = linear(v, p.wv, p.bv);
  std::vector<Value> heads;
  heads.reserve(static_cast<std::size_t>(p.heads));
  for (int h = 0; h < p.heads; ++h) {
    Value qh = slice(qp, 1, h * dk, dk);
    Value kh = slice(kp, 1, h * dk, dk);
    Value vh = slice(vp, 1, h * dk, dk);
    heads.push_back(sda(qh, kh, vh));
  }
  Value merged = p.heads == 1 ? heads[0] : concat(heads, 1);
  return linear(merged, p.wo, p.bo);
}

TokenVolume bwa(const TokenVolume& q, const TokenVolume& k, const TokenVolume& v,
                const BlockPartition& p, const MhaParamRefs& params) {
  if (!(k.dims == v.dims)) throw ShapeError("bwa: key and value volumes differ");
  if (q.dims.d != k.dims.d || q.dims.H != k.dims.H || q.dims.W != k.dims.W) {
    throw PartitionError("bwa: query and key/value block grids are incompatible");
  }
  check_partition(q.dims, p);
  check_partition(k.dims, p);
  const int sh = q.dims.H / p.bh, sw = q.dims.W / p.bw;
  const int qbt = q.dims.T * sh * sw;
  const int kbt = k.dims.T * sh * sw;
  const auto qmap = block_order_map(q.dims, p);
  const auto kmap = block_order_map(k.dims, p);
  Value qb = gather_rows(q.tokens, qmap);
  Value kb = gather_rows(k.tokens, kmap);
  Value vb = gather_rows(v.tokens, kmap);
  std::vector<Value> outs;
  outs.reserve(static_cast<std::size_t>(p.blocks()));
  for (int b = 0; b < p.blocks(); ++b) {
    Value qi = slice(qb, 0, b * qbt, qbt);
    Value ki = slice(kb, 0, b * kbt, kbt);
    Value vi = slice(vb, 0, b * kbt, kbt);
    outs.push_back(mha(qi, ki, vi, params));
  }
  Value joined = p.blocks() == 1 ? outs[0] : concat(outs, 0);
  return TokenVolume{q.dims, gather_rows(joined, invert_map(qmap))};
}

TokenVolume icsa(const TokenVolume& q, const TokenVolume& kv, const BlockPartition& p,
                 const IcsaParamRefs& refs) {
  if (q.dims.d != kv.dims.d || q.dims.H != kv.dims.H || q.dims.W != kv.dims.W) {
    throw ShapeError("icsa: query and key/value volumes must share d, H, W");
  }
  check_partition(q.dims, p);
  // (1) positional encoding on query and key copies only, never on value
  Value qe = add(q.tokens, refs.pe_long_q);
  Value ke = add(kv.tokens, refs.pe_long_k);
  // (2) regroup same-offset tokens across blocks
  const auto qperm = long_range_order_map(q.dims, p);
  const auto kvperm = long_range_order_map(kv.dims, p);
  TokenVolume q1{q.dims, gather_rows(qe, qperm)};
  TokenVolume k1{kv.dims, gather_rows(ke, kvperm)};
  TokenVolume v1{kv.dims, gather_rows(kv.tokens, kvperm)};
  // (3) long-range cross-attention: in permuted order the tokens sharing a
  // spatial offset form one block of the conjugate grid
  BlockPartition conj{q.dims.H / p.bh, q.dims.W / p.bw};
  TokenVolume mid_perm = bwa(q1, k1, v1, conj, refs.long_stage);
  // (4) back to original token order
  Value mid = gather_rows(mid_perm.tokens, invert_map(qperm));
  // (5)+(6) short-range self-attention within blocks
  Value m2 = add(mid, refs.pe_short);
  TokenVolume self_q{q.dims, m2};
  TokenVolume self_v{q.dims, mid};
  return bwa(self_q, self_q, self_v, p, refs.short_stage);
}

namespace {

// y = x w + b on plain tensors, rows of x as samples.
Tensor plain_linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int n = x.shape[0], din = x.shape[1], dout = w.shape[1];
  if (w.shape[0] != din || b.shape[0] != dout) {
    throw ShapeError("plain_linear: x " + shape_str(x.shape) + " w " + shape_str(w.shape));
  }
  Tensor out = Tensor::zeros({n, dout});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < dout; ++j) {
      double acc = b.data[static_cast<std::size_t>(j)];
      for (int t = 0; t < din; ++t) {
        acc += x.data[static_cast<std::size_t>(i) * din + t] *
               w.data[static_cast<std::size_t>(t) * dout + j];
      }
      out.data[static_cast<std::size_t>(i) * dout + j] = acc;
    }
  }
  return out;
}

}  // namespace

Tensor dense_attention_reference(const Tensor& q, const Tensor& k, const Tensor& v,
                                 const MhaParams& p) {
  const int nq = q.shape[0], nk = k.shape[0], d = q.shape[1];
  if (k.shape[1] != d || v.shape[1] != d) throw ShapeError("dense reference: dims differ");
  if (p.heads < 1 || d % p.heads != 0) throw ShapeError("dense reference: bad head count");
  const int dk = d / p.heads;
  Tensor qp = plain_linear(q, p.wq, p.bq);
  Tensor kp = plain_linear(k, p.wk, p.bk);
  Tensor vp = plain_linear(v, p.wv, p.bv);
  Tensor merged = Tensor::zeros({nq, d});
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<double> row(static_cast<std::size_t>(nk));
  for (int h = 0; h < p.heads; ++h) {
    for (int i = 0; i < nq; ++i) {
      double mx = -1e300;
      for (int j = 0; j < nk; ++j) {
        double s = 0.0;
        for (int t = 0; t < dk; ++t) {
          s += qp.data[static_cast<std::size_t>(i) * d + h * dk + t] *
               kp.data[static_cast<std::size_t>(j) * d + h * dk + t];
        }
        row[static_cast<std::size_t>(j)] = s * inv_scale;
        mx = std::max(mx, row[static_cast<std::size_t>(j)]);
      }
      double denom = 0.0;
      for (int j = 0; j < nk; ++j) {
        row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - mx);
        denom += row[static_cast<std::size_t>(j)];
      }
      for (int t = 0; t < dk; ++t) {
        double acc = 0.0;
        for (int j = 0; j < nk; ++j) {
          acc += row[static_cast<std::size_t>(j)] *
                 vp.data[static_cast<std::size_t>(j) * d + h * dk + t];
        }
        merged.data[static_cast<std::size_t>(i) * d + h * dk + t] = acc / denom;
      }
    }
  }
  return plain_linear(merged, p.wo, p.bo);
}

}  // namespace vsseg
