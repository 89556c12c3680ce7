#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vsseg/layers.hpp"
#include "vsseg/mar.hpp"
#include "vsseg/metrics.hpp"
#include "vsseg/params.hpp"
#include "vsseg/stf.hpp"
#include "vsseg/synthetic.hpp"

namespace vsseg {

/// Per-pixel feature extractor over a square intensity window: two linear
/// layers with a nonlinearity, stride 1, borders clamped.
struct BackboneConfig {
  int window = 3;  // odd
  int hidden = 16;
  int d = 8;
  Activation activation = Activation::Gelu;
};

struct ModelConfig {
  BackboneConfig backbone;
  // a 4x4 grid keeps the fused-volume attention cheap at desk resolutions
  StfConfig stf{.partition = BlockPartition{4, 4}};
  MarConfig mar;
  int classes = 4;
  int k_l = 10;
  int k_h = 10;
};

void init_backbone_params(ParamStore& ps, const BackboneConfig& cfg, const SeedBank& sb);
void init_classifier_params(ParamStore& ps, int d, int classes, const SeedBank& sb,
                            const std::string& stream_tag);

/// frame [H, W] -> features [H*W, d]
Value backbone_forward(ModelCtx& ctx, const BackboneConfig& cfg, const Tensor& frame);

/// features [n, d] -> logits [n, classes]
Value classifier_forward(ModelCtx& ctx, Value features);

SegmentationMap argmax_map(const Tensor& logits, int H, int W);

struct InferOptions {
  bool use_stf = true;
  bool use_mar = true;
};

/// Segments every frame of a clip. Frame T is fused with its neighbors
/// T-1 and T+1, clamped to the clip edges, then refined and classified.
std::vector<SegmentationMap> sliding_window_infer(const std::vector<Tensor>& frames,
                                                  const ModelConfig& cfg, ParamStore& params,
                                                  const MemoryBank* bank,
                                                  const InferOptions& opts);

}  // namespace vsseg
