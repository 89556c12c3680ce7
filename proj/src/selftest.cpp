#include "vsseg/selftest.hpp"

#include <cmath>
#include <ostream>
#include <vector>

#include "vsseg/attention.hpp"
#include "vsseg/autodiff.hpp"
#include "vsseg/mar.hpp"
#include "vsseg/rng.hpp"

namespace vsseg {

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& g, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (double& v : t.data) v = draw_normal(g, 0.0, scale);
  return t;
}

MhaParams random_mha(int d, int heads, std::mt19937_64& g) {
  MhaParams p;
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

MhaParamRefs to_refs(Tape& tape, const MhaParams& p) {
  MhaParamRefs r;
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

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  }
  return m;
}

bool check_gradients(std::ostream& out) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SeedBank sb(seed);
    auto g = sb.stream("selftest/grad");
    {
      const Tensor a = random_tensor({3, 4}, g);
      const Tensor b = random_tensor({4, 2}, g);
      worst = std::max(worst, grad_check(
                                  [](Tape&, std::vector<Value>& in) {
                                    return sum(softmax(matmul(in[0], in[1]), 1));
                                  },
                                  {a, b}));
    }
    {
      const Tensor x = random_tensor({4, 3}, g);
      const Tensor gamma = random_tensor({3}, g);
      const Tensor beta = random_tensor({3}, g);
      worst = std::max(worst, grad_check(
                                  [](Tape&, std::vector<Value>& in) {
                                    return sum(layer_norm(in[0], in[1], in[2]));
                                  },
                                  {x, gamma, beta}));
    }
    {
      const Tensor x = random_tensor({5, 3}, g);
      const Tensor w = random_tensor({3, 2}, g);
      const Tensor b = random_tensor({2}, g);
      worst = std::max(worst, grad_check(
                                  [](Tape&, std::vector<Value>& in) {
                                    return mean(gelu(linear(in[0], in[1], in[2])));
                                  },
                                  {x, w, b}));
    }
  }
  out << "gradient checks: max relative error " << worst << "\n";
  return worst < 1e-4;
}

// Re-derives every entry of a long-range map by direct index bookkeeping
// and checks bijectivity. Catches any flipped or duplicated index.
bool verify_long_range_map(const std::vector<int>& map, const VolumeDims& dims,
                           const BlockPartition& p) {
  const int sh = dims.H / p.bh, sw = dims.W / p.bw;
  std::vector<char> hit(map.size(), 0);
  std::size_t o = 0;
  for (int t = 0; t < dims.T; ++t) {
    for (int a = 0; a < dims.H; ++a) {
      for (int b = 0; b < dims.W; ++b, ++o) {
        const int expected =
            (t * dims.H + (a % p.bh) * sh + a / p.bh) * dims.W + (b % p.bw) * sw + b / p.bw;
        if (map[o] != expected) return false;
        if (hit[static_cast<std::size_t>(map[o])]) return false;
        hit[static_cast<std::size_t>(map[o])] = 1;
      }
    }
  }
  return true;
}

bool check_permutations(bool inject_fault, std::ostream& out) {
  bool ok = true;
  const std::vector<VolumeDims> cases = {{2, 1, 4, 4}, {3, 3, 8, 8}, {2, 3, 6, 4}};
  const std::vector<BlockPartition> grids = {{2, 2}, {1, 1}, {2, 1}};
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const BlockPartition p = grids[i % grids.size()];
    auto map = long_range_order_map(cases[i], p);
    if (inject_fault && i == 0) std::swap(map[0], map[1]);
    if (!verify_long_range_map(map, cases[i], p)) ok = false;
    const auto inv = invert_map(map);
    for (std::size_t j = 0; j < map.size(); ++j) {
      if (inv[static_cast<std::size_t>(map[j])] != static_cast<int>(j)) ok = false;
    }
  }
  // enumerated 4x4 grouping case
  auto groups = long_range_groups({1, 1, 4, 4}, {2, 2});
  const std::vector<int> expect = {0, 2, 8, 10};
  if (groups.empty() || groups[0] != expect) ok = false;
  out << "permutation bijections: " << (ok ? "ok" : "violated") << "\n";
  return ok;
}

bool check_bwa_against_dense(std::ostream& out) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeedBank sb(seed);
    auto g = sb.stream("selftest/bwa");
    const VolumeDims dims{4, 1, 2, 4};
    const MhaParams params = random_mha(dims.d, 2, g);
    const Tensor tokens = random_tensor({dims.tokens(), dims.d}, g);
    Tape tape;
    TokenVolume x{dims, tape.leaf(tokens)};
    TokenVolume y = bwa(x, x, x, BlockPartition{1, 1}, to_refs(tape, params));
    const Tensor dense = dense_attention_reference(tokens, tokens, tokens, params);
    worst = std::max(worst, max_abs_diff(y.tokens.val(), dense));
  }
  out << "block-wise vs dense attention: max deviation " << worst << "\n";
  return worst < 1e-10;
}

// Exact hull-membership for up to 3 prototypes: solve V^T w = q, sum w = 1
// by least squares on the (d+1) x C system and verify feasibility.
bool in_prototype_hull(const Tensor& values, const double* q, double tol) {
  const int C = values.shape[0], d = values.shape[1];
  const int rows = d + 1;
  std::vector<double> a(static_cast<std::size_t>(rows) * C), b(static_cast<std::size_t>(rows));
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < C; ++c) a[static_cast<std::size_t>(r) * C + c] = values.at({c, r});
    b[static_cast<std::size_t>(r)] = q[r];
  }
  for (int c = 0; c < C; ++c) a[static_cast<std::size_t>(d) * C + c] = 1.0;
  b[static_cast<std::size_t>(d)] = 1.0;
  // normal equations (C <= 3)
  double ata[9] = {0}, atb[3] = {0};
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) {
      for (int r = 0; r < rows; ++r) {
        ata[i * 3 + j] += a[static_cast<std::size_t>(r) * C + i] * a[static_cast<std::size_t>(r) * C + j];
      }
    }
    for (int r = 0; r < rows; ++r) atb[i] += a[static_cast<std::size_t>(r) * C + i] * b[static_cast<std::size_t>(r)];
  }
  double w[3] = {0, 0, 0};
  // Gaussian elimination on the C x C system
  double m[3][4];
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) m[i][j] = ata[i * 3 + j];
    m[i][C] = atb[i];
  }
  for (int col = 0; col < C; ++col) {
    int piv = col;
    for (int r = col + 1; r < C; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    for (int j = 0; j <= C; ++j) std::swap(m[col][j], m[piv][j]);
    if (std::abs(m[col][col]) < 1e-12) return false;  // degenerate prototypes
    for (int r = 0; r < C; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int j = 0; j <= C; ++j) m[r][j] -= f * m[col][j];
    }
  }
  for (int i = 0; i < C; ++i) w[i] = m[i][C] / m[i][i];
  double residual = 0.0;
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c) acc += a[static_cast<std::size_t>(r) * C + c] * w[c];
    residual = std::max(residual, std::abs(acc - b[static_cast<std::size_t>(r)]));
  }
  if (residual > tol) return false;
  for (int c = 0; c < C; ++c) {
    if (w[c] < -tol) return false;
  }
  return true;
}

bool check_mar_convexity(std::ostream& out) {
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeedBank sb(seed);
    auto g = sb.stream("selftest/mar");
    const int d = 3, C = 3, kl = 2;
    MemoryBank bank;
    bank.C = C;
    bank.KL = kl;
    bank.d = d;
    bank.keys = random_tensor({C * kl, d}, g);
    bank.values = random_tensor({C, d}, g);
    for (int i = 0; i < C * kl; ++i) bank.key_labels.push_back(i / kl);

    ParamStore ps;
    auto gi = sb.stream("selftest/mar/init");
    ps.add("mar.theta_proj", random_tensor({d, d}, gi));
    ps.add("mar.phi_proj", random_tensor({d, d}, gi));
    Tape tape;
    ModelCtx ctx{tape, ps, {}, {}};
    Value q = tape.leaf(random_tensor({4, d}, g, 2.0));
    Value s = mar_scores(ctx, q, bank);
    Value attended = mar_attend(ctx, s, bank);
    const Tensor& sv = s.val();
    for (int r = 0; r < sv.shape[0]; ++r) {
      double total = 0.0;
      for (int c = 0; c < sv.shape[1]; ++c) total += sv.at({r, c});
      if (std::abs(total - 1.0) > 1e-6) ok = false;
    }
    const Tensor& av = attended.val();
    for (int r = 0; r < av.shape[0]; ++r) {
      if (!in_prototype_hull(bank.values, av.data.data() + static_cast<std::size_t>(r) * d,
                             1e-6)) {
        ok = false;
      }
    }
  }
  out << "memory refinement convexity: " << (ok ? "ok" : "violated") << "\n";
  return ok;
}

}  // namespace

bool run_selftest(bool inject_fault, std::ostream& out) {
  bool ok = true;
  ok &= check_gradients(out);
  ok &= check_permutations(inject_fault, out);
  ok &= check_bwa_against_dense(out);
  ok &= check_mar_convexity(out);
  out << (ok ? "selftest passed" : "selftest FAILED") << "\n";
  return ok;
}

}  // namespace vsseg
