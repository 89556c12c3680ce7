#include "vsseg/layers.hpp"

namespace vsseg {

Value apply_activation(Value x, Activation a) {
  return a == Activation::Gelu ? gelu(x) : relu(x);
}

void add_mha_params(ParamStore& ps, const std::string& prefix, int d, const SeedBank& sb) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) {
    auto g = sb.stream("init/" + prefix + "." + w);
    Tensor t = init_uniform_fanin({d, d}, d, g);
    // damped output projection keeps the residual path dominant at init
    if (std::string_view(w) == "wo") {
      for (double& v : t.data) v *= 0.1;
    }
    ps.add(prefix + "." + w, std::move(t));
  }
  for (const char* b : {"bq", "bk", "bv", "bo"}) {
    ps.add(prefix + "." + b, Tensor::zeros({d}));
  }
}

MhaParamRefs mha_refs(ModelCtx& ctx, const std::string& prefix, int heads) {
  MhaParamRefs r;
  r.heads = heads;
  r.wq = ctx.p(prefix + ".wq");
  r.bq = ctx.p(prefix + ".bq");
  r.wk = ctx.p(prefix + ".wk");
  r.bk = ctx.p(prefix + ".bk");
  r.wv = ctx.p(prefix + ".wv");
  r.bv = ctx.p(prefix + ".bv");
  r.wo = ctx.p(prefix + ".wo");
  r.bo = ctx.p(prefix + ".bo");
  return r;
}

void add_ffn_params(ParamStore& ps, const std::string& prefix, int d, int d_ff,
                    const SeedBank& sb) {
  auto g1 = sb.stream("init/" + prefix + ".w1");
  auto g2 = sb.stream("init/" + prefix + ".w2");
  ps.add(prefix + ".w1", init_uniform_fanin({d, d_ff}, d, g1));
  ps.add(prefix + ".b1", Tensor::zeros({d_ff}));
  Tensor w2 = init_uniform_fanin({d_ff, d}, d_ff, g2);
  // damped, matching the attention output projections
  for (double& v : w2.data) v *= 0.1;
  ps.add(prefix + ".w2", std::move(w2));
  ps.add(prefix + ".b2", Tensor::zeros({d}));
}

Value ffn_apply(ModelCtx& ctx, const std::string& prefix, Value x, Activation act) {
  Value h = linear(x, ctx.p(prefix + ".w1"), ctx.p(prefix + ".b1"));
  return linear(apply_activation(h, act), ctx.p(prefix + ".w2"), ctx.p(prefix + ".b2"));
}

void add_layer_norm_params(ParamStore& ps, const std::string& prefix, int d) {
  ps.add(prefix + ".gamma", Tensor::full({d}, 1.0));
  ps.add(prefix + ".beta", Tensor::zeros({d}));
}

Value layer_norm_apply(ModelCtx& ctx, const std::string& prefix, Value x, double eps) {
  return layer_norm(x, ctx.p(prefix + ".gamma"), ctx.p(prefix + ".beta"), eps);
}

void add_icsa_params(ParamStore& ps, const std::string& prefix, int d, VolumeDims q_dims,
                     VolumeDims kv_dims, const SeedBank& sb) {
  // Long- and short-stage encodings are separate tensors, as are the
  // query- and key-side encodings of the long stage.
  ps.add(prefix + ".pe_long_q", Tensor::zeros({d, q_dims.T, q_dims.H, q_dims.W}));
  ps.add(prefix + ".pe_long_k", Tensor::zeros({d, kv_dims.T, kv_dims.H, kv_dims.W}));
  ps.add(prefix + ".pe_short", Tensor::zeros({d, q_dims.T, q_dims.H, q_dims.W}));
  add_mha_params(ps, prefix + ".long", d, sb);
  add_mha_params(ps, prefix + ".short", d, sb);
}

IcsaParamRefs icsa_refs(ModelCtx& ctx, const std::string& prefix, VolumeDims q_dims,
                        VolumeDims kv_dims, int heads) {
  IcsaParamRefs r;
  r.pe_long_q = tokens_of_volume_value(ctx.p(prefix + ".pe_long_q"), q_dims);
  r.pe_long_k = tokens_of_volume_value(ctx.p(prefix + ".pe_long_k"), kv_dims);
  r.pe_short = tokens_of_volume_value(ctx.p(prefix + ".pe_short"), q_dims);
  r.long_stage = mha_refs(ctx, prefix + ".long", heads);
  r.short_stage = mha_refs(ctx, prefix + ".short", heads);
  return r;
}

}  // namespace vsseg
