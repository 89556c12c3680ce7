#pragma once

#include <string>

#include "vsseg/attention.hpp"
#include "vsseg/params.hpp"
#include "vsseg/rng.hpp"

namespace vsseg {

enum class Activation { Gelu, Relu };

Value apply_activation(Value x, Activation a);

// Parameter-group helpers. add_* registers freshly initialized tensors
// under a dotted prefix; the matching *_refs / *_apply functions bind them
// to a tape through a ModelCtx. Weights use fan-in scaled uniform init,
// biases and positional encodings start at zero, layer norms at identity.
void add_mha_params(ParamStore& ps, const std::string& prefix, int d, const SeedBank& sb);
MhaParamRefs mha_refs(ModelCtx& ctx, const std::string& prefix, int heads);

void add_ffn_params(ParamStore& ps, const std::string& prefix, int d, int d_ff,
                    const SeedBank& sb);
Value ffn_apply(ModelCtx& ctx, const std::string& prefix, Value x, Activation act);

void add_layer_norm_params(ParamStore& ps, const std::string& prefix, int d);
Value layer_norm_apply(ModelCtx& ctx, const std::string& prefix, Value x, double eps);

void add_icsa_params(ParamStore& ps, const std::string& prefix, int d, VolumeDims q_dims,
                     VolumeDims kv_dims, const SeedBank& sb);
IcsaParamRefs icsa_refs(ModelCtx& ctx, const std::string& prefix, VolumeDims q_dims,
                        VolumeDims kv_dims, int heads);

}  // namespace vsseg
