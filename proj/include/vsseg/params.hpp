#pragma once

#include <map>
#include <random>
#include <string>

#include "vsseg/autodiff.hpp"
#include "vsseg/tensor.hpp"

namespace vsseg {

/// Named container for all learnable weights.
struct ParamStore {
  std::map<std::string, Tensor> tensors;

  void add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }
};

/// Per-tape builder state: each named parameter becomes exactly one leaf
/// per forward pass, so gradients accumulate over all of its uses.
struct ModelCtx {
  Tape& tape;
  ParamStore& params;
  std::map<std::string, Value> leaves;
  std::map<std::string, Value> constants;

  Value p(const std::string& name);
  Value constant(const std::string& key, const Tensor& t);
};

Tensor init_uniform_fanin(Shape s, int fan_in, std::mt19937_64& g);

}  // namespace vsseg
