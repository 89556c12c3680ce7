#include "vsseg/pipeline.hpp"

#include <algorithm>

#include "vsseg/errors.hpp"

namespace vsseg {

void init_backbone_params(ParamStore& ps, const BackboneConfig& cfg, const SeedBank& sb) {
  if (cfg.window < 1 || cfg.window % 2 == 0) {
    throw ContractError("backbone window must be odd and positive");
  }
  const int win = cfg.window * cfg.window;
  auto g1 = sb.stream("init/backbone.l1.w");
  auto g2 = sb.stream("init/backbone.l2.w");
  ps.add("backbone.l1.w", init_uniform_fanin({win, cfg.hidden}, win, g1));
  ps.add("backbone.l1.b", Tensor::zeros({cfg.hidden}));
  ps.add("backbone.l2.w", init_uniform_fanin({cfg.hidden, cfg.d}, cfg.hidden, g2));
  ps.add("backbone.l2.b", Tensor::zeros({cfg.d}));
  add_layer_norm_params(ps, "backbone.ln", cfg.d);
}

void init_classifier_params(ParamStore& ps, int d, int classes, const SeedBank& sb,
                            const std::string& stream_tag) {
  auto g = sb.stream(stream_tag + "/classifier.w");
  ps.tensors["classifier.w"] = init_uniform_fanin({d, classes}, d, g);
  ps.tensors["classifier.b"] = Tensor::zeros({classes});
}

Value backbone_forward(ModelCtx& ctx, const BackboneConfig& cfg, const Tensor& frame) {
  if (frame.rank() != 2) throw ShapeError("backbone: frame must be [H, W]");
  const int H = frame.shape[0], W = frame.shape[1];
  const int half = cfg.window / 2;
  std::vector<int> window_map;
  window_map.reserve(static_cast<std::size_t>(H) * W * cfg.window * cfg.window);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
          const int yy = std::clamp(y + dy, 0, H - 1);
          const int xx = std::clamp(x + dx, 0, W - 1);
          window_map.push_back(yy * W + xx);
        }
      }
    }
  }
  // center the intensity window; raw values live in [0, 1]
  Tensor centered = frame;
  for (double& v : centered.data) v -= 0.5;
  Value pixels = reshape(ctx.tape.leaf(std::move(centered)), {H * W, 1});
  Value windows = reshape(gather_rows(pixels, std::move(window_map)),
                          {H * W, cfg.window * cfg.window});
  Value h = linear(windows, ctx.p("backbone.l1.w"), ctx.p("backbone.l1.b"));
  Value out = linear(apply_activation(h, cfg.activation), ctx.p("backbone.l2.w"),
                     ctx.p("backbone.l2.b"));
  // normalized features keep the downstream attention and classifier scales sane
  return layer_norm_apply(ctx, "backbone.ln", out, 1e-5);
}

Value classifier_forward(ModelCtx& ctx, Value features) {
  return linear(features, ctx.p("classifier.w"), ctx.p("classifier.b"));
}

SegmentationMap argmax_map(const Tensor& logits, int H, int W) {
  if (logits.rank() != 2 || logits.shape[0] != H * W) {
    throw ShapeError("argmax_map: logits " + shape_str(logits.shape) + " vs " +
                     std::to_string(H * W) + " pixels");
  }
  const int c = logits.shape[1];
  SegmentationMap map = SegmentationMap::filled(H, W, 0);
  for (int i = 0; i < H * W; ++i) {
    const double* row = logits.data.data() + static_cast<std::size_t>(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    map.labels[static_cast<std::size_t>(i)] = best;
  }
  return map;
}

std::vector<SegmentationMap> sliding_window_infer(const std::vector<Tensor>& frames,
                                                  const ModelConfig& cfg, ParamStore& params,
                                                  const MemoryBank* bank,
                                                  const InferOptions& opts) {
  if (frames.empty()) throw ContractError("sliding_window_infer: empty clip");
  if (opts.use_mar && bank == nullptr) {
    throw ContractError("sliding_window_infer: refinement requested without a memory bank");
  }
  const int n = static_cast<int>(frames.size());
  const int H = frames[0].shape[0], W = frames[0].shape[1];

  // Per-frame features are reused by up to three windows; extract them once.
  std::vector<Tensor> feats;
  feats.reserve(static_cast<std::size_t>(n));
  for (const Tensor& f : frames) {
    Tape tape;
    ModelCtx ctx{tape, params, {}, {}};
    feats.push_back(backbone_forward(ctx, cfg.backbone, f).val());
  }

  std::vector<SegmentationMap> maps;
  maps.reserve(static_cast<std::size_t>(n));
  const VolumeDims frame_dims{cfg.backbone.d, 1, H, W};
  for (int t = 0; t < n; ++t) {
    Tape tape;
    ModelCtx ctx{tape, params, {}, {}};
    Value cur = tape.leaf(feats[static_cast<std::size_t>(t)]);
    Value out;
    if (opts.use_stf) {
      Value prev = tape.leaf(feats[static_cast<std::size_t>(std::max(0, t - 1))]);
      Value next = tape.leaf(feats[static_cast<std::size_t>(std::min(n - 1, t + 1))]);
      TokenVolume fused = stf_forward(ctx, cfg.stf, TokenVolume{frame_dims, prev},
                                      TokenVolume{frame_dims, cur}, TokenVolume{frame_dims, next});
      out = fused.tokens;
    } else {
      out = cur;
    }
    if (opts.use_mar) out = mar_refine(ctx, cfg.mar, out, *bank);
    Value logits = classifier_forward(ctx, out);
    maps.push_back(argmax_map(logits.val(), H, W));
  }
  return maps;
}

}  // namespace vsseg
