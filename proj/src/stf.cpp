#include "vsseg/stf.hpp"

#include "vsseg/errors.hpp"

namespace vsseg {

namespace {

std::string enc_prefix(int layer) { return "stf.enc.l" + std::to_string(layer); }
std::string dec_prefix(int layer) { return "stf.dec.l" + std::to_string(layer); }

void check_frame(const TokenVolume& f, const StfConfig& cfg) {
  if (f.dims.T != 1) throw ShapeError("stf: frame volumes must have T=1");
  if (f.dims.d != cfg.d) {
    throw ShapeError("stf: frame dim " + std::to_string(f.dims.d) + " vs configured " +
                     std::to_string(cfg.d));
  }
}

}  // namespace

void init_stf_params(ParamStore& ps, const StfConfig& cfg, int H, int W, const SeedBank& sb) {
  if (cfg.d_ff < cfg.d) throw ContractError("stf: d_ff must be >= d");
  const VolumeDims enc_dims{cfg.d, 3, H, W};
  const VolumeDims frame_dims{cfg.d, 1, H, W};
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string ep = enc_prefix(l);
    add_icsa_params(ps, ep + ".icsa", cfg.d, enc_dims, enc_dims, sb);
    add_layer_norm_params(ps, ep + ".ln1", cfg.d);
    add_ffn_params(ps, ep + ".ffn", cfg.d, cfg.d_ff, sb);
    add_layer_norm_params(ps, ep + ".ln2", cfg.d);

    const std::string dp = dec_prefix(l);
    add_icsa_params(ps, dp + ".self", cfg.d, frame_dims, frame_dims, sb);
    add_layer_norm_params(ps, dp + ".ln1", cfg.d);
    add_icsa_params(ps, dp + ".cross", cfg.d, frame_dims, enc_dims, sb);
    add_layer_norm_params(ps, dp + ".ln2", cfg.d);
    add_ffn_params(ps, dp + ".ffn", cfg.d, cfg.d_ff, sb);
    add_layer_norm_params(ps, dp + ".ln3", cfg.d);
  }
}

TokenVolume stf_encode(ModelCtx& ctx, const StfConfig& cfg, const TokenVolume& prev,
                       const TokenVolume& cur, const TokenVolume& next) {
  check_frame(prev, cfg);
  check_frame(cur, cfg);
  check_frame(next, cfg);
  if (!(prev.dims == cur.dims) || !(cur.dims == next.dims)) {
    throw ShapeError("stf_encode: frame shapes differ");
  }
  const VolumeDims dims{cfg.d, 3, cur.dims.H, cur.dims.W};
  TokenVolume x{dims, concat({prev.tokens, cur.tokens, next.tokens}, 0)};
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = enc_prefix(l);
    IcsaParamRefs refs = icsa_refs(ctx, p + ".icsa", dims, dims, cfg.heads);
    TokenVolume a = icsa(x, x, cfg.partition, refs);
    Value y = layer_norm_apply(ctx, p + ".ln1", add(x.tokens, a.tokens), cfg.ln_eps);
    Value f = ffn_apply(ctx, p + ".ffn", y, cfg.activation);
    x = TokenVolume{dims, layer_norm_apply(ctx, p + ".ln2", add(y, f), cfg.ln_eps)};
  }
  return x;
}

TokenVolume stf_decode(ModelCtx& ctx, const StfConfig& cfg, const TokenVolume& cur,
                       const TokenVolume& enc) {
  check_frame(cur, cfg);
  if (enc.dims.d != cfg.d || enc.dims.H != cur.dims.H || enc.dims.W != cur.dims.W) {
    throw ShapeError("stf_decode: encoded volume incompatible with frame");
  }
  TokenVolume y = cur;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = dec_prefix(l);
    IcsaParamRefs self_refs = icsa_refs(ctx, p + ".self", y.dims, y.dims, cfg.heads);
    TokenVolume a = icsa(y, y, cfg.partition, self_refs);
    Value t1 = layer_norm_apply(ctx, p + ".ln1", add(y.tokens, a.tokens), cfg.ln_eps);

    TokenVolume q1{y.dims, t1};
    IcsaParamRefs cross_refs = icsa_refs(ctx, p + ".cross", y.dims, enc.dims, cfg.heads);
    TokenVolume c = icsa(q1, enc, cfg.partition, cross_refs);
    Value t2 = layer_norm_apply(ctx, p + ".ln2", add(t1, c.tokens), cfg.ln_eps);

    Value f = ffn_apply(ctx, p + ".ffn", t2, cfg.activation);
    y = TokenVolume{y.dims, layer_norm_apply(ctx, p + ".ln3", add(t2, f), cfg.ln_eps)};
  }
  return y;
}

TokenVolume stf_forward(ModelCtx& ctx, const StfConfig& cfg, const TokenVolume& prev,
                        const TokenVolume& cur, const TokenVolume& next) {
  TokenVolume enc = stf_encode(ctx, cfg, prev, cur, next);
  return stf_decode(ctx, cfg, cur, enc);
}

}  // namespace vsseg
