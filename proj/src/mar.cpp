#include "vsseg/mar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binio.hpp"
#include "vsseg/errors.hpp"

namespace vsseg {

namespace {

constexpr char kBankMagic[4] = {'M', 'A', 'R', 'B'};
constexpr std::uint32_t kBankVersion = 1;

int argmax_row(const double* row, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

double gt_probability(const double* row, int n, int y) {
  double mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  double denom = 0.0;
  for (int j = 0; j < n; ++j) denom += std::exp(row[j] - mx);
  return std::exp(row[y] - mx) / denom;
}

}  // namespace

MemoryBank build_memory(const Tensor& features, const std::vector<int>& gt_labels,
                        const Tensor& logits, int k_l, int k_h) {
  if (features.rank() != 2 || logits.rank() != 2) {
    throw ShapeError("build_memory: rank-2 features and logits required");
  }
  const int n = features.shape[0], d = features.shape[1], c_count = logits.shape[1];
  if (logits.shape[0] != n || static_cast<int>(gt_labels.size()) != n) {
    throw ShapeError("build_memory: features, labels and logits must be aligned");
  }
  if (k_l < 1 || k_h < 1) throw ContractError("build_memory: K_L and K_H must be >= 1");

  struct Scored {
    int index;
    double confidence;
  };
  std::vector<std::vector<Scored>> per_class(static_cast<std::size_t>(c_count));
  for (int i = 0; i < n; ++i) {
    const int y = gt_labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c_count) throw ShapeError("build_memory: ground-truth label out of range");
    const double* row = logits.data.data() + static_cast<std::size_t>(i) * c_count;
    if (argmax_row(row, c_count) != y) continue;  // misclassified features are discarded
    per_class[static_cast<std::size_t>(y)].push_back({i, gt_probability(row, c_count, y)});
  }

  MemoryBank bank;
  bank.C = c_count;
  bank.KL = k_l;
  bank.KH = k_h;
  bank.d = d;
  bank.keys = Tensor::zeros({c_count * k_l, d});
  bank.key_labels.assign(static_cast<std::size_t>(c_count) * k_l, 0);
  bank.values = Tensor::zeros({c_count, d});

  for (int c = 0; c < c_count; ++c) {
    auto& pool = per_class[static_cast<std::size_t>(c)];
    const int need = std::max(k_l, k_h);
    if (static_cast<int>(pool.size()) < need) {
      throw InsufficientClassSamples(
          c, "class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                 " correctly classified features, need " + std::to_string(need));
    }
    // stable sorts keep first-seen order among confidence ties
    std::vector<Scored> asc = pool;
    std::stable_sort(asc.begin(), asc.end(),
                     [](const Scored& a, const Scored& b) { return a.confidence < b.confidence; });
    for (int k = 0; k < k_l; ++k) {
      const int key_row = c * k_l + k;
      bank.key_labels[static_cast<std::size_t>(key_row)] = c;
      const double* src = features.data.data() + static_cast<std::size_t>(asc[static_cast<std::size_t>(k)].index) * d;
      std::copy_n(src, d, bank.keys.data.data() + static_cast<std::size_t>(key_row) * d);
    }
    std::vector<Scored> desc = pool;
    std::stable_sort(desc.begin(), desc.end(),
                     [](const Scored& a, const Scored& b) { return a.confidence > b.confidence; });
    double* proto = bank.values.data.data() + static_cast<std::size_t>(c) * d;
    for (int k = 0; k < k_h; ++k) {
      const double* src = features.data.data() + static_cast<std::size_t>(desc[static_cast<std::size_t>(k)].index) * d;
      for (int j = 0; j < d; ++j) proto[j] += src[j];
    }
    for (int j = 0; j < d; ++j) proto[j] /= k_h;
  }
  return bank;
}

void init_mar_params(ParamStore& ps, const MarConfig& cfg, const SeedBank& sb) {
  auto gt = sb.stream("init/mar.theta_proj");
  auto gp = sb.stream("init/mar.phi_proj");
  ps.add("mar.theta_proj", init_uniform_fanin({cfg.d, cfg.d}, cfg.d, gt));
  ps.add("mar.phi_proj", init_uniform_fanin({cfg.d, cfg.d}, cfg.d, gp));
  add_layer_norm_params(ps, "mar.ln1", cfg.d);
  add_ffn_params(ps, "mar.ffn", cfg.d, cfg.d_ff, sb);
  add_layer_norm_params(ps, "mar.ln2", cfg.d);
}

Value mar_scores(ModelCtx& ctx, Value q, const MemoryBank& bank) {
  if (q.val().rank() != 2 || q.val().shape[1] != bank.d) {
    throw ShapeError("mar_scores: query " + shape_str(q.val().shape) + " vs bank dim " +
                     std::to_string(bank.d));
  }
  Value theta = matmul(q, ctx.p("mar.theta_proj"));
  Value phi = matmul(ctx.constant("mar.bank.keys", bank.keys), ctx.p("mar.phi_proj"));
  return softmax(matmul(theta, transpose2d(phi)), 1);
}

Value mar_attend(ModelCtx& ctx, Value scores, const MemoryBank& bank) {
  const int nk = bank.C * bank.KL;
  if (scores.val().rank() != 2 || scores.val().shape[1] != nk) {
    throw ShapeError("mar_attend: scores " + shape_str(scores.val().shape) + " vs " +
                     std::to_string(nk) + " keys");
  }
  // key -> class routing matrix, so class weight c sums the scores of all
  // keys labeled c
  Tensor routing = Tensor::zeros({nk, bank.C});
  for (int i = 0; i < nk; ++i) {
    routing.at({i, bank.key_labels[static_cast<std::size_t>(i)]}) = 1.0;
  }
  Value class_weights = matmul(scores, ctx.constant("mar.bank.routing", routing));
  return matmul(class_weights, ctx.constant("mar.bank.values", bank.values));
}

Value mar_refine(ModelCtx& ctx, const MarConfig& cfg, Value q, const MemoryBank& bank) {
  Value s = mar_scores(ctx, q, bank);
  Value attended = mar_attend(ctx, s, bank);
  Value x = layer_norm_apply(ctx, "mar.ln1", add(q, attended), cfg.ln_eps);
  Value f = ffn_apply(ctx, "mar.ffn", x, cfg.activation);
  return layer_norm_apply(ctx, "mar.ln2", add(x, f), cfg.ln_eps);
}

void save_bank(const MemoryBank& bank, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open bank file for writing: " + path);
  os.write(kBankMagic, 4);
  binio::write_u32(os, kBankVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(bank.C));
  binio::write_u32(os, static_cast<std::uint32_t>(bank.KL));
  binio::write_u32(os, static_cast<std::uint32_t>(bank.d));
  const int nk = bank.C * bank.KL;
  for (int i = 0; i < nk; ++i) {
    binio::write_u32(os, static_cast<std::uint32_t>(bank.key_labels[static_cast<std::size_t>(i)]));
    for (int j = 0; j < bank.d; ++j) {
      binio::write_f32(os, static_cast<float>(bank.keys.at({i, j})));
    }
  }
  for (int c = 0; c < bank.C; ++c) {
    for (int j = 0; j < bank.d; ++j) {
      binio::write_f32(os, static_cast<float>(bank.values.at({c, j})));
    }
  }
  if (!os) throw IoError("failed writing bank file: " + path);
}

MemoryBank load_bank(const std::string& path) {
  binio::Reader r(path, "bank");
  char magic[4];
  r.read_bytes(magic, 4);
  if (std::memcmp(magic, kBankMagic, 4) != 0) {
    throw BadMagicError("bad magic in bank file: " + path);
  }
  const std::uint32_t version = r.read_u32();
  if (version != kBankVersion) {
    throw BadVersionError("bank file version " + std::to_string(version) + " unsupported: " +
                          path);
  }
  MemoryBank bank;
  bank.C = static_cast<int>(r.read_u32());
  bank.KL = static_cast<int>(r.read_u32());
  bank.d = static_cast<int>(r.read_u32());
  if (bank.C < 1 || bank.KL < 1 || bank.d < 1) {
    throw TruncatedFileError("bank file header has empty dimensions: " + path);
  }
  const int nk = bank.C * bank.KL;
  bank.keys = Tensor::zeros({nk, bank.d});
  bank.key_labels.assign(static_cast<std::size_t>(nk), 0);
  bank.values = Tensor::zeros({bank.C, bank.d});
  for (int i = 0; i < nk; ++i) {
    const std::uint32_t label = r.read_u32();
    if (label >= static_cast<std::uint32_t>(bank.C)) {
      throw LabelRangeError("bank key " + std::to_string(i) + " has label " +
                            std::to_string(label) + " >= C=" + std::to_string(bank.C));
    }
    bank.key_labels[static_cast<std::size_t>(i)] = static_cast<int>(label);
    for (int j = 0; j < bank.d; ++j) bank.keys.at({i, j}) = r.read_f32();
  }
  for (int c = 0; c < bank.C; ++c) {
    for (int j = 0; j < bank.d; ++j) bank.values.at({c, j}) = r.read_f32();
  }
  r.expect_eof();
  return bank;
}

}  // namespace vsseg
