#pragma once

#include <string>
#include <vector>

#include "vsseg/layers.hpp"
#include "vsseg/params.hpp"
#include "vsseg/tensor.hpp"

namespace vsseg {

/// Frozen key-value memory: per-class hard features as keys and one
/// prototype (mean of the most confident features) per class as values.
/// Keys are ordered by (class, confidence ascending) and never trained.
struct MemoryBank {
  int C = 0;
  int KL = 0;
  int KH = 0;  // construction-time only; not serialized
  int d = 0;
  Tensor keys;                  // [C*KL, d]
  std::vector<int> key_labels;  // size C*KL, class of each key
  Tensor values;                // [C, d]
};

/// Selects, per class, the K_L lowest-confidence and K_H highest-confidence
/// correctly classified features. Confidence is the softmax probability of
/// the ground-truth class; misclassified features are discarded; ties keep
/// first-seen order. InsufficientClassSamples if any class cannot fill its
/// quota.
MemoryBank build_memory(const Tensor& features, const std::vector<int>& gt_labels,
                        const Tensor& logits, int k_l, int k_h);

struct MarConfig {
  int d = 8;
  int d_ff = 16;
  Activation activation = Activation::Gelu;
  double ln_eps = 1e-5;
};

void init_mar_params(ParamStore& ps, const MarConfig& cfg, const SeedBank& sb);

/// Softmax over all C*K_L keys of (theta q)ᵀ(phi k_i) per query row.
Value mar_scores(ModelCtx& ctx, Value q, const MemoryBank& bank);

/// Q' = Σ_i s_i V_{j(i)}: a convex combination of the class prototypes,
/// with each key's weight routed to its class's value.
Value mar_attend(ModelCtx& ctx, Value scores, const MemoryBank& bank);

/// Per-pixel refinement block: residual memory attention then residual
/// FFN, each followed by layer normalization.
Value mar_refine(ModelCtx& ctx, const MarConfig& cfg, Value q, const MemoryBank& bank);

void save_bank(const MemoryBank& bank, const std::string& path);
MemoryBank load_bank(const std::string& path);

}  // namespace vsseg
