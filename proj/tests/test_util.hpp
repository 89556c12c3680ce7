#pragma once

#include <cmath>
#include <random>

#include "vsseg/attention.hpp"
#include "vsseg/autodiff.hpp"
#include "vsseg/rng.hpp"
#include "vsseg/tensor.hpp"

namespace testutil {

inline vsseg::Tensor random_tensor(vsseg::Shape s, std::mt19937_64& g, double scale = 1.0) {
  vsseg::Tensor t = vsseg::Tensor::zeros(std::move(s));
  for (double& v : t.data) v = vsseg::draw_normal(g, 0.0, scale);
  return t;
}

// values bounded away from zero, for checking kinked ops by finite differences
inline vsseg::Tensor random_tensor_offzero(vsseg::Shape s, std::mt19937_64& g) {
  vsseg::Tensor t = vsseg::Tensor::zeros(std::move(s));
  for (double& v : t.data) {
    const double m = 0.1 + std::abs(vsseg::draw_normal(g, 0.0, 1.0));
    v = vsseg::draw_uniform(g, 0.0, 1.0) < 0.5 ? -m : m;
  }
  return t;
}

inline double max_abs_diff(const vsseg::Tensor& a, const vsseg::Tensor& b) {
  if (a.data.size() != b.data.size()) return 1e300;
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return m;
}

inline vsseg::MhaParams random_mha_params(int d, int heads, std::mt19937_64& g) {
  vsseg::MhaParams p;
  p.heads = heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  p.wq = random_tensor({d, d}, g, s);
  p.wk = random_tensor({d, d}, g, s);
  p.wv = random_tensor({d, d}, g, s);
  p.wo = random_tensor({d, d}, g, s);
  p.bq = random_tensor({d}, g, 0.1);
  p.bk = random_tensor({d}, g, 0.1);
  p.bv = random_tensor({d}, g, 0.1);
  p.bo = random_tensor({d}, g, 0.1);
  return p;
}

inline vsseg::MhaParamRefs leaf_refs(vsseg::Tape& tape, const vsseg::MhaParams& p) {
  vsseg::MhaParamRefs r;
  r.heads = p.heads;
  r.wq = tape.leaf(p.wq);
  r.bq = tape.leaf(p.bq);
  r.wk = tape.leaf(p.wk);
  r.bk = tape.leaf(p.bk);
  r.wv = tape.leaf(p.wv);
  r.bv = tape.leaf(p.bv);
  r.wo = tape.leaf(p.wo);
  r.bo = tape.leaf(p.bo);
  return r;
}

}  // namespace testutil
