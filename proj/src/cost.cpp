#include "vsseg/cost.hpp"

#include <string>

#include "vsseg/errors.hpp"

namespace vsseg {

namespace {

using u64 = std::uint64_t;

void check_inputs(int d, int t_q, int t_kv, int H, int W, const BlockPartition& p) {
  if (d < 0 || t_q < 0 || t_kv < 0 || H < 0 || W < 0) {
    throw ContractError("cost: extents must be nonnegative");
  }
  if (p.bh < 1 || p.bw < 1) throw PartitionError("cost: block grid extents must be >= 1");
  if (H % p.bh != 0 || W % p.bw != 0) {
    throw PartitionError("cost: block grid " + std::to_string(p.bh) + "x" +
                         std::to_string(p.bw) + " does not divide " + std::to_string(H) + "x" +
                         std::to_string(W));
  }
}

}  // namespace

AttentionCost attention_instance_cost(int d, int t_q, int t_kv, int H, int W,
                                      const BlockPartition& p) {
  check_inputs(d, t_q, t_kv, H, W, p);
  AttentionCost c;
  if (d == 0 || t_q == 0 || t_kv == 0 || H == 0 || W == 0) return c;
  const u64 dd = static_cast<u64>(d);
  const u64 n_q = static_cast<u64>(t_q) * H * W;
  const u64 n_kv = static_cast<u64>(t_kv) * H * W;
  const u64 k = static_cast<u64>(p.blocks());
  const u64 sh = static_cast<u64>(H / p.bh);
  const u64 sw = static_cast<u64>(W / p.bw);

  c.dense_affinity_entries = n_q * n_kv;
  c.dense_macs = (2 * n_q + 2 * n_kv) * dd * dd + 2 * n_q * n_kv * dd;

  // long-range: every query attends to the k*T_kv keys sharing its spatial
  // offset; short-range: self-attention over the query-shaped result, each
  // token against its block of T_q*sh*sw tokens
  const u64 long_keys = k * static_cast<u64>(t_kv);
  const u64 short_keys = static_cast<u64>(t_q) * sh * sw;
  c.long_affinity_entries = n_q * long_keys;
  c.short_affinity_entries = n_q * short_keys;
  c.icsa_total_affinity_entries = c.long_affinity_entries + c.short_affinity_entries;
  c.icsa_peak_affinity_entries = std::max(c.long_affinity_entries, c.short_affinity_entries);

  const u64 long_macs = (2 * n_q + 2 * n_kv) * dd * dd + 2 * n_q * long_keys * dd;
  const u64 short_macs = 4 * n_q * dd * dd + 2 * n_q * short_keys * dd;
  c.icsa_macs = long_macs + short_macs;
  return c;
}

CostReport estimate_cost(const CostInputs& in) {
  CostReport r;
  r.inputs = in;
  const int t_dec = in.T > 0 ? 1 : 0;  // no frames, no decoder pass
  r.encoder_self = attention_instance_cost(in.d, in.T, in.T, in.H, in.W, in.partition);
  r.decoder_self = attention_instance_cost(in.d, t_dec, t_dec, in.H, in.W, in.partition);
  r.decoder_cross = attention_instance_cost(in.d, t_dec, in.T, in.H, in.W, in.partition);

  const u64 dd = static_cast<u64>(in.d);
  const u64 dff = static_cast<u64>(in.d_ff);
  const u64 hw = static_cast<u64>(in.H) * in.W * static_cast<u64>(t_dec);
  const u64 n_enc = static_cast<u64>(in.T) * in.H * in.W;
  const u64 enc_ffn = 2 * n_enc * dd * dff;
  const u64 dec_ffn = 2 * hw * dd * dff;
  const u64 layers = static_cast<u64>(in.layers);
  r.stf_macs_icsa = layers * (r.encoder_self.icsa_macs + enc_ffn + r.decoder_self.icsa_macs +
                              r.decoder_cross.icsa_macs + dec_ffn);
  r.stf_macs_dense = layers * (r.encoder_self.dense_macs + enc_ffn + r.decoder_self.dense_macs +
                               r.decoder_cross.dense_macs + dec_ffn);

  const u64 keys = static_cast<u64>(in.classes) * static_cast<u64>(in.k_l);
  r.mar_macs = hw * dd * dd                                // theta projection per pixel
               + keys * dd * dd                            // phi projection per key
               + hw * keys * dd                            // score products
               + hw * static_cast<u64>(in.classes) * dd    // prototype combination
               + 2 * hw * dd * static_cast<u64>(in.mar_d_ff);
  r.classifier_macs = hw * dd * static_cast<u64>(in.classes);

  r.dense_peak_affinity_entries = r.encoder_self.dense_affinity_entries;
  r.icsa_peak_affinity_entries = r.encoder_self.icsa_peak_affinity_entries;
  r.affinity_reduction_factor =
      r.icsa_peak_affinity_entries == 0
          ? 0.0
          : static_cast<double>(r.dense_peak_affinity_entries) /
                static_cast<double>(r.icsa_peak_affinity_entries);
  return r;
}

CostReport estimate_cost(int d, int T, int H, int W, BlockPartition partition, int heads,
                         int d_ff) {
  CostInputs in;
  in.d = d;
  in.T = T;
  in.H = H;
  in.W = W;
  in.partition = partition;
  in.heads = heads;
  in.d_ff = d_ff;
  return estimate_cost(in);
}

std::vector<std::pair<BlockPartition, AttentionCost>> sweep_partitions(const CostInputs& in) {
  std::vector<std::pair<BlockPartition, AttentionCost>> out;
  for (int bh = 1; bh <= std::max(in.H, 1); ++bh) {
    if (in.H % bh != 0) continue;
    for (int bw = 1; bw <= std::max(in.W, 1); ++bw) {
      if (in.W % bw != 0) continue;
      BlockPartition p{bh, bw};
      out.emplace_back(p, attention_instance_cost(in.d, in.T, in.T, in.H, in.W, p));
    }
  }
  return out;
}

}  // namespace vsseg
