#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vsseg/attention.hpp"

namespace vsseg {

/// Closed-form operation counts. MACs cover matrix products only
/// (projections, score and weighted-sum products, FFNs); normalization
/// and softmax are excluded. Affinity entries count score-matrix cells;
/// the peak figure is the largest matrix a stage materializes at once.
struct CostInputs {
  int d = 8;
  int T = 3;
  int H = 128;
  int W = 256;
  BlockPartition partition{16, 16};
  int heads = 2;
  int d_ff = 16;
  int layers = 1;
  int classes = 19;
  int k_l = 10;
  int mar_d_ff = 16;
};

struct AttentionCost {
  std::uint64_t dense_affinity_entries = 0;
  std::uint64_t long_affinity_entries = 0;
  std::uint64_t short_affinity_entries = 0;
  std::uint64_t icsa_total_affinity_entries = 0;
  std::uint64_t icsa_peak_affinity_entries = 0;
  std::uint64_t dense_macs = 0;
  std::uint64_t icsa_macs = 0;
};

AttentionCost attention_instance_cost(int d, int t_q, int t_kv, int H, int W,
                                      const BlockPartition& p);

struct CostReport {
  CostInputs inputs;
  AttentionCost encoder_self;   // fused volume, T_q = T_kv = T
  AttentionCost decoder_self;   // current frame, T = 1
  AttentionCost decoder_cross;  // T_q = 1 against T_kv = T
  std::uint64_t stf_macs_icsa = 0;
  std::uint64_t stf_macs_dense = 0;
  std::uint64_t mar_macs = 0;
  std::uint64_t classifier_macs = 0;
  /// dense vs ICSA peak affinity entries for the encoder volume
  std::uint64_t dense_peak_affinity_entries = 0;
  std::uint64_t icsa_peak_affinity_entries = 0;
  double affinity_reduction_factor = 0.0;
};

CostReport estimate_cost(const CostInputs& in);
CostReport estimate_cost(int d, int T, int H, int W, BlockPartition partition, int heads,
                         int d_ff);

/// Encoder-volume attention cost for every block grid dividing H and W.
std::vector<std::pair<BlockPartition, AttentionCost>> sweep_partitions(const CostInputs& in);

}  // namespace vsseg
