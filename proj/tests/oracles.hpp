#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vsseg/attention.hpp"
#include "vsseg/tensor.hpp"

// Test-only oracles, kept independent of the library's tape-based
// implementation paths they check.
namespace oracles {

/// Interlaced sparse attention, coded directly from the grouping
/// definition: long-range attention among same-offset tokens gathered
/// across blocks (and frames), then short-range attention within each
/// block. Every group/block is evaluated with the dense reference.
inline vsseg::Tensor isa_reference(const vsseg::Tensor& tokens, const vsseg::VolumeDims& dims,
                                   const vsseg::BlockPartition& p,
                                   const vsseg::MhaParams& long_params,
                                   const vsseg::MhaParams& short_params) {
  const int d = dims.d;
  const int sh = dims.H / p.bh, sw = dims.W / p.bw;
  auto gather = [&](const vsseg::Tensor& src, const std::vector<int>& ids) {
    vsseg::Tensor out = vsseg::Tensor::zeros({static_cast<int>(ids.size()), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy_n(src.data.data() + static_cast<std::size_t>(ids[i]) * d, d,
                  out.data.data() + i * static_cast<std::size_t>(d));
    }
    return out;
  };
  auto scatter = [&](vsseg::Tensor& dst, const vsseg::Tensor& part, const std::vector<int>& ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::copy_n(part.data.data() + i * static_cast<std::size_t>(d), d,
                  dst.data.data() + static_cast<std::size_t>(ids[i]) * d);
    }
  };

  vsseg::Tensor mid = vsseg::Tensor::zeros(tokens.shape);
  for (int hp = 0; hp < sh; ++hp) {
    for (int wp = 0; wp < sw; ++wp) {
      std::vector<int> ids;
      for (int t = 0; t < dims.T; ++t) {
        for (int bi = 0; bi < p.bh; ++bi) {
          for (int bj = 0; bj < p.bw; ++bj) {
            ids.push_back((t * dims.H + bi * sh + hp) * dims.W + bj * sw + wp);
          }
        }
      }
      const vsseg::Tensor sub = gather(tokens, ids);
      scatter(mid, vsseg::dense_attention_reference(sub, sub, sub, long_params), ids);
    }
  }

  vsseg::Tensor out = vsseg::Tensor::zeros(tokens.shape);
  for (int bi = 0; bi < p.bh; ++bi) {
    for (int bj = 0; bj < p.bw; ++bj) {
      std::vector<int> ids;
      for (int t = 0; t < dims.T; ++t) {
        for (int hh = 0; hh < sh; ++hh) {
          for (int ww = 0; ww < sw; ++ww) {
            ids.push_back((t * dims.H + bi * sh + hh) * dims.W + bj * sw + ww);
          }
        }
      }
      const vsseg::Tensor sub = gather(mid, ids);
      scatter(out, vsseg::dense_attention_reference(sub, sub, sub, short_params), ids);
    }
  }
  return out;
}

/// Exact hull membership for up to three prototypes: solve V^T w = q with
/// sum(w) = 1 by normal equations and verify residual and nonnegativity.
inline bool in_prototype_hull(const vsseg::Tensor& values, const double* q, double tol) {
  const int C = values.shape[0], d = values.shape[1];
  const int rows = d + 1;
  std::vector<double> a(static_cast<std::size_t>(rows) * C), b(static_cast<std::size_t>(rows));
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < C; ++c) a[static_cast<std::size_t>(r) * C + c] = values.at({c, r});
    b[static_cast<std::size_t>(r)] = q[r];
  }
  for (int c = 0; c < C; ++c) a[static_cast<std::size_t>(d) * C + c] = 1.0;
  b[static_cast<std::size_t>(d)] = 1.0;
  double ata[3][3] = {};
  double atb[3] = {};
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) {
      for (int r = 0; r < rows; ++r) {
        ata[i][j] += a[static_cast<std::size_t>(r) * C + i] * a[static_cast<std::size_t>(r) * C + j];
      }
    }
    for (int r = 0; r < rows; ++r) {
      atb[i] += a[static_cast<std::size_t>(r) * C + i] * b[static_cast<std::size_t>(r)];
    }
  }
  double m[3][4];
  for (int i = 0; i < C; ++i) {
    for (int j = 0; j < C; ++j) m[i][j] = ata[i][j];
    m[i][C] = atb[i];
  }
  for (int col = 0; col < C; ++col) {
    int piv = col;
    for (int r = col + 1; r < C; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    }
    for (int j = 0; j <= C; ++j) std::swap(m[col][j], m[piv][j]);
    if (std::abs(m[col][col]) < 1e-12) return false;
    for (int r = 0; r < C; ++r) {
      if (r == col) continue;
      const double f = m[r][col] / m[col][col];
      for (int j = 0; j <= C; ++j) m[r][j] -= f * m[col][j];
    }
  }
  double w[3];
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

struct MemorySelection {
  std::vector<std::vector<int>> keys;        // per class, feature indices, confidence ascending
  std::vector<std::vector<int>> prototypes;  // per class, feature indices of the K_H best
};

/// Brute-force selection by sorting (confidence, first-seen) pairs.
inline MemorySelection select_memory_brute(const vsseg::Tensor& logits,
                                           const std::vector<int>& gt, int k_l, int k_h) {
  const int n = logits.shape[0], C = logits.shape[1];
  MemorySelection sel;
  sel.keys.resize(static_cast<std::size_t>(C));
  sel.prototypes.resize(static_cast<std::size_t>(C));
  std::vector<std::pair<double, int>> per_class_pool;
  for (int c = 0; c < C; ++c) {
    std::vector<std::pair<double, int>> pool;
    for (int i = 0; i < n; ++i) {
      if (gt[static_cast<std::size_t>(i)] != c) continue;
      const double* row = logits.data.data() + static_cast<std::size_t>(i) * C;
      int best = 0;
      for (int j = 1; j < C; ++j) {
        if (row[j] > row[best]) best = j;
      }
      if (best != c) continue;
      double mx = row[0];
      for (int j = 1; j < C; ++j) mx = std::max(mx, row[j]);
      double denom = 0.0;
      for (int j = 0; j < C; ++j) denom += std::exp(row[j] - mx);
      pool.emplace_back(std::exp(row[c] - mx) / denom, i);
    }
    std::vector<std::pair<double, int>> asc = pool;
    std::stable_sort(asc.begin(), asc.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    for (int k = 0; k < k_l && k < static_cast<int>(asc.size()); ++k) {
      sel.keys[static_cast<std::size_t>(c)].push_back(asc[static_cast<std::size_t>(k)].second);
    }
    std::vector<std::pair<double, int>> desc = pool;
    std::stable_sort(desc.begin(), desc.end(),
                     [](const auto& x, const auto& y) { return x.first > y.first; });
    for (int k = 0; k < k_h && k < static_cast<int>(desc.size()); ++k) {
      sel.prototypes[static_cast<std::size_t>(c)].push_back(desc[static_cast<std::size_t>(k)].second);
    }
  }
  return sel;
}

}  // namespace oracles
