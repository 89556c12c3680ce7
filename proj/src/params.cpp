#include "vsseg/params.hpp"

#include <cmath>

#include "vsseg/errors.hpp"
#include "vsseg/rng.hpp"

namespace vsseg {

void ParamStore::add(const std::string& name, Tensor t) {
  if (has(name)) throw DuplicateNameError("duplicate parameter name: " + name);
  tensors.emplace(name, std::move(t));
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

Value ModelCtx::p(const std::string& name) {
  auto it = leaves.find(name);
  if (it != leaves.end()) return it->second;
  Value v = tape.leaf(params.at(name));
  leaves.emplace(name, v);
  return v;
}

Value ModelCtx::constant(const std::string& key, const Tensor& t) {
  auto it = constants.find(key);
  if (it != constants.end()) return it->second;
  Value v = tape.leaf(t);
  constants.emplace(key, v);
  return v;
}

Tensor init_uniform_fanin(Shape s, int fan_in, std::mt19937_64& g) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(s));
  for (double& v : t.data) v = draw_uniform(g, -bound, bound);
  return t;
}

}  // namespace vsseg
