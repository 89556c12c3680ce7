#include <cmath>
#include <cstring>
#include <doctest.h>
#include <numeric>

#include "oracles.hpp"
#include "test_util.hpp"
#include "vsseg/attention.hpp"
#include "vsseg/errors.hpp"
#include "vsseg/rng.hpp"

using namespace vsseg;
using testutil::leaf_refs;
using testutil::max_abs_diff;
using testutil::random_mha_params;
using testutil::random_tensor;

namespace {

MhaParams identity_mha(int d) {
  MhaParams p;
  p.heads = 1;
  p.wq = Tensor::zeros({d, d});
  for (int i = 0; i < d; ++i) p.wq.at({i, i}) = 1.0;
  p.wk = p.wq;
  p.wv = p.wq;
  p.wo = p.wq;
  p.bq = Tensor::zeros({d});
  p.bk = p.bq;
  p.bv = p.bq;
  p.bo = p.bq;
  return p;
}

FeatureVolume random_volume(VolumeDims dims, std::mt19937_64& g) {
  return FeatureVolume::from(dims, random_tensor({dims.d, dims.T, dims.H, dims.W}, g));
}

IcsaParamRefs zero_pe_refs(Tape& tape, VolumeDims q_dims, VolumeDims kv_dims,
                           const MhaParams& long_p, const MhaParams& short_p) {
  IcsaParamRefs r;
  r.pe_long_q = tape.leaf(Tensor::zeros({q_dims.tokens(), q_dims.d}));
  r.pe_long_k = tape.leaf(Tensor::zeros({kv_dims.tokens(), kv_dims.d}));
  r.pe_short = tape.leaf(Tensor::zeros({q_dims.tokens(), q_dims.d}));
  r.long_stage = leaf_refs(tape, long_p);
  r.short_stage = leaf_refs(tape, short_p);
  return r;
}

// every softmax node on the tape must have rows summing to one
void check_attention_rows(const Tape& tape) {
  for (int id = 0; id < tape.size(); ++id) {
    const TapeNode& n = tape.node(id);
    if (std::strcmp(n.op, "softmax") != 0) continue;
    const Tensor& p = n.value;
    const int cols = p.shape.back();
    const int rows = static_cast<int>(p.numel() / cols);
    for (int r = 0; r < rows; ++r) {
      double total = 0.0;
      for (int c = 0; c < cols; ++c) total += p.data[static_cast<std::size_t>(r) * cols + c];
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

}  // namespace

TEST_CASE("sda") {
  Tape tape;
  SUBCASE("single key degenerates to the value row") {
    Value q = tape.leaf(Tensor::from_rows({{1, 2}, {-5, 0.5}}));
    Value k = tape.leaf(Tensor::from_rows({{3, 3}}));
    Value v = tape.leaf(Tensor::from_rows({{7, 8, 9}}));
    const Tensor got = sda(q, k, v).val();
    for (int r = 0; r < 2; ++r) {
      CHECK(got.at({r, 0}) == doctest::Approx(7));
      CHECK(got.at({r, 1}) == doctest::Approx(8));
      CHECK(got.at({r, 2}) == doctest::Approx(9));
    }
  }
  SUBCASE("identical keys and values yield the shared value") {
    Value q = tape.leaf(Tensor::from_rows({{0.3, -2}}));
    Value k = tape.leaf(Tensor::from_rows({{1, 1}, {1, 1}, {1, 1}}));
    Value v = tape.leaf(Tensor::from_rows({{4, 5}, {4, 5}, {4, 5}}));
    const Tensor got = sda(q, k, v).val();
    CHECK(got.at({0, 0}) == doctest::Approx(4));
    CHECK(got.at({0, 1}) == doctest::Approx(5));
  }
  SUBCASE("two-key instance against direct formula evaluation") {
    Value q = tape.leaf(Tensor::from_rows({{1, 0}}));
    Value k = tape.leaf(Tensor::from_rows({{1, 0}, {0, 1}}));
    Value v = tape.leaf(Tensor::from_rows({{2, 0}, {0, 2}}));
    const Tensor got = sda(q, k, v).val();
    const double s0 = 1.0 / std::sqrt(2.0), s1 = 0.0;
    const double w0 = std::exp(s0) / (std::exp(s0) + std::exp(s1));
    CHECK(got.at({0, 0}) == doctest::Approx(2.0 * w0).epsilon(1e-12));
    CHECK(got.at({0, 1}) == doctest::Approx(2.0 * (1.0 - w0)).epsilon(1e-12));
  }
  SUBCASE("query/key dim mismatch") {
    Value q = tape.leaf(Tensor::zeros({1, 3}));
    Value k = tape.leaf(Tensor::zeros({2, 2}));
    Value v = tape.leaf(Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(sda(q, k, v), ShapeError);
  }
}

TEST_CASE("mha") {
  SeedBank sb(21);
  auto g = sb.stream("mha");
  SUBCASE("one head equals the projected sda composition") {
    const MhaParams p = random_mha_params(4, 1, g);
    const Tensor q = random_tensor({3, 4}, g);
    const Tensor k = random_tensor({5, 4}, g);
    const Tensor v = random_tensor({5, 4}, g);
    Tape tape;
    const Tensor got = mha(tape.leaf(q), tape.leaf(k), tape.leaf(v), leaf_refs(tape, p)).val();
    Tape ref;
    Value qp = linear(ref.leaf(q), ref.leaf(p.wq), ref.leaf(p.bq));
    Value kp = linear(ref.leaf(k), ref.leaf(p.wk), ref.leaf(p.bk));
    Value vp = linear(ref.leaf(v), ref.leaf(p.wv), ref.leaf(p.bv));
    const Tensor want = linear(sda(qp, kp, vp), ref.leaf(p.wo), ref.leaf(p.bo)).val();
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
  SUBCASE("identity projections reduce to raw sda") {
    const MhaParams p = identity_mha(3);
    const Tensor q = random_tensor({4, 3}, g);
    const Tensor k = random_tensor({6, 3}, g);
    const Tensor v = random_tensor({6, 3}, g);
    Tape tape;
    const Tensor got = mha(tape.leaf(q), tape.leaf(k), tape.leaf(v), leaf_refs(tape, p)).val();
    Tape ref;
    const Tensor want = sda(ref.leaf(q), ref.leaf(k), ref.leaf(v)).val();
    CHECK(max_abs_diff(got, want) < 1e-12);
  }
  SUBCASE("two heads match the brute-force per-head oracle") {
    const MhaParams p = random_mha_params(4, 2, g);
    const Tensor q = random_tensor({4, 4}, g);
    Tape tape;
    const Tensor got = mha(tape.leaf(q), tape.leaf(q), tape.leaf(q), leaf_refs(tape, p)).val();
    CHECK(max_abs_diff(got, dense_attention_reference(q, q, q, p)) < 1e-10);
  }
  SUBCASE("head count must divide the feature dim") {
    const MhaParams p = random_mha_params(4, 3, g);
    Tape tape;
    Value x = tape.leaf(Tensor::zeros({2, 4}));
    CHECK_THROWS_AS(mha(x, x, x, leaf_refs(tape, p)), ShapeError);
  }
}

TEST_CASE("partition_blocks") {
  SeedBank sb(31);
  auto g = sb.stream("blocks");
  SUBCASE("trivial grid keeps the volume") {
    const FeatureVolume x = random_volume({3, 2, 4, 4}, g);
    auto blocks = partition_blocks(x, {1, 1});
    REQUIRE(blocks.size() == 1);
    CHECK(max_abs_diff(blocks[0].data, x.data) == 0.0);
  }
  SUBCASE("4x4 with a 2x2 grid produces the enumerated index map") {
    // tokens numbered row-major in a 1x1x4x4 volume
    Tensor data = Tensor::zeros({1, 1, 4, 4});
    std::iota(data.data.begin(), data.data.end(), 0.0);
    const FeatureVolume x = FeatureVolume::from({1, 1, 4, 4}, std::move(data));
    auto blocks = partition_blocks(x, {2, 2});
    REQUIRE(blocks.size() == 4);
    const std::vector<std::vector<double>> want = {
        {0, 1, 4, 5}, {2, 3, 6, 7}, {8, 9, 12, 13}, {10, 11, 14, 15}};
    for (int b = 0; b < 4; ++b) {
      CHECK(blocks[static_cast<std::size_t>(b)].dims.H == 2);
      CHECK(blocks[static_cast<std::size_t>(b)].data.data == want[static_cast<std::size_t>(b)]);
    }
  }
  SUBCASE("combine inverts partition bit-exactly") {
    const FeatureVolume x = random_volume({2, 3, 6, 4}, g);
    CHECK(max_abs_diff(combine_blocks(partition_blocks(x, {3, 2}), {3, 2}).data, x.data) == 0.0);
  }
  SUBCASE("non-divisible extents") {
    const FeatureVolume x = random_volume({1, 1, 4, 4}, g);
    CHECK_THROWS_AS(partition_blocks(x, {3, 1}), PartitionError);
  }
}

TEST_CASE("long_range_permute") {
  SeedBank sb(32);
  auto g = sb.stream("lr");
  SUBCASE("trivial grid is the identity") {
    const FeatureVolume x = random_volume({2, 1, 4, 4}, g);
    CHECK(max_abs_diff(long_range_permute(x, {1, 1}).data, x.data) == 0.0);
  }
  SUBCASE("4x4 grouping collects {0,2,8,10} for offset (0,0)") {
    auto groups = long_range_groups({1, 1, 4, 4}, {2, 2});
    REQUIRE(groups.size() == 4);
    CHECK(groups[0] == std::vector<int>{0, 2, 8, 10});
    CHECK(groups[1] == std::vector<int>{1, 3, 9, 11});
    CHECK(groups[2] == std::vector<int>{4, 6, 12, 14});
    CHECK(groups[3] == std::vector<int>{5, 7, 13, 15});
  }
  SUBCASE("inverse restores the original volume bit-exactly") {
    const FeatureVolume x = random_volume({3, 3, 8, 6}, g);
    const BlockPartition p{4, 3};
    CHECK(max_abs_diff(long_range_unpermute(long_range_permute(x, p), p).data, x.data) == 0.0);
  }
  SUBCASE("every group has k tokens from k distinct blocks at one offset") {
    const VolumeDims dims{1, 3, 8, 6};
    const BlockPartition p{2, 3};
    const int sh = dims.H / p.bh, sw = dims.W / p.bw;
    for (const auto& group : long_range_groups(dims, p)) {
      REQUIRE(static_cast<int>(group.size()) == p.blocks());
      std::vector<char> seen_block(static_cast<std::size_t>(p.blocks()), 0);
      int offset = -1;
      for (int id : group) {
        const int t = id / (dims.H * dims.W);
        const int h = (id / dims.W) % dims.H;
        const int w = id % dims.W;
        const int block = (h / sh) * p.bw + (w / sw);
        CHECK(!seen_block[static_cast<std::size_t>(block)]);
        seen_block[static_cast<std::size_t>(block)] = 1;
        const int off = (t * sh + h % sh) * sw + (w % sw);
        if (offset < 0) offset = off;
        CHECK(off == offset);
      }
    }
  }
}

TEST_CASE("bwa equals dense attention for the trivial grid") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeedBank sb(seed);
    auto g = sb.stream("bwa");
    const int d = draw_int(g, 2, 8) & ~1;  // even, for two heads
    const int dim = std::max(2, d);
    const int hh = draw_int(g, 1, 4);
    const int ww = draw_int(g, 1, 8);
    const int t = draw_int(g, 1, 3);
    if (t * hh * ww > 32) continue;
    const VolumeDims dims{dim, t, hh, ww};
    const MhaParams p = random_mha_params(dim, 2, g);
    const Tensor tokens = random_tensor({dims.tokens(), dim}, g);
    Tape tape;
    TokenVolume x{dims, tape.leaf(tokens)};
    TokenVolume y = bwa(x, x, x, {1, 1}, leaf_refs(tape, p));
    worst = std::max(worst, max_abs_diff(y.tokens.val(),
                                         dense_attention_reference(tokens, tokens, tokens, p)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("bwa blocks attend independently") {
  SeedBank sb(41);
  auto g = sb.stream("bwa2");
  const VolumeDims dims{2, 1, 2, 2};
  const BlockPartition p{2, 1};
  const MhaParams params = random_mha_params(2, 1, g);
  const Tensor tokens = random_tensor({dims.tokens(), 2}, g);
  Tape tape;
  TokenVolume x{dims, tape.leaf(tokens)};
  const Tensor got = bwa(x, x, x, p, leaf_refs(tape, params)).tokens.val();
  // block 0 holds tokens {0,1} (top row), block 1 holds {2,3}
  for (int b = 0; b < 2; ++b) {
    Tensor sub = Tensor::zeros({2, 2});
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) sub.at({i, j}) = tokens.at({b * 2 + i, j});
    }
    const Tensor want = dense_attention_reference(sub, sub, sub, params);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        CHECK(got.at({b * 2 + i, j}) == doctest::Approx(want.at({i, j})).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("bwa cross-attention over differing temporal extents") {
  SeedBank sb(42);
  auto g = sb.stream("bwa3");
  const VolumeDims qd{4, 1, 2, 2};
  const VolumeDims kd{4, 3, 2, 2};
  const BlockPartition p{2, 2};
  const MhaParams params = random_mha_params(4, 2, g);
  Tape tape;
  TokenVolume q{qd, tape.leaf(random_tensor({qd.tokens(), 4}, g))};
  TokenVolume kv{kd, tape.leaf(random_tensor({kd.tokens(), 4}, g))};
  TokenVolume out = bwa(q, kv, kv, p, leaf_refs(tape, params));
  CHECK(out.dims == qd);
  CHECK(out.tokens.val().shape == Shape{4, 4});
  // each query token's attention row spans the key block's tokens
  int softmax_nodes = 0;
  for (int id = 0; id < tape.size(); ++id) {
    const TapeNode& n = tape.node(id);
    if (std::strcmp(n.op, "softmax") == 0) {
      CHECK(n.value.shape[1] == kd.T * 1 * 1);  // block token count of the key volume
      ++softmax_nodes;
    }
  }
  CHECK(softmax_nodes == p.blocks() * params.heads);
  check_attention_rows(tape);
  SUBCASE("grid incompatibility is rejected") {
    TokenVolume bad{VolumeDims{4, 1, 2, 4}, tape.leaf(Tensor::zeros({8, 4}))};
    CHECK_THROWS_AS(bwa(bad, kv, kv, p, leaf_refs(tape, params)), PartitionError);
  }
}

TEST_CASE("icsa degenerates to the independently coded isa reference") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SeedBank sb(seed);
    auto g = sb.stream("icsa");
    const VolumeDims dims{4, 1, 4, 6};
    const BlockPartition p{2, 3};
    const MhaParams long_p = random_mha_params(4, 2, g);
    const MhaParams short_p = random_mha_params(4, 2, g);
    const Tensor tokens = random_tensor({dims.tokens(), 4}, g);
    Tape tape;
    TokenVolume x{dims, tape.leaf(tokens)};
    TokenVolume y = icsa(x, x, p, zero_pe_refs(tape, dims, dims, long_p, short_p));
    worst = std::max(worst,
                     max_abs_diff(y.tokens.val(),
                                  oracles::isa_reference(tokens, dims, p, long_p, short_p)));
    check_attention_rows(tape);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("icsa self mode over three identical frames is constant along T") {
  SeedBank sb(51);
  auto g = sb.stream("icsa2");
  const VolumeDims frame{3, 1, 4, 4};
  const VolumeDims dims{3, 3, 4, 4};
  const BlockPartition p{2, 2};
  const MhaParams long_p = random_mha_params(3, 1, g);
  const MhaParams short_p = random_mha_params(3, 1, g);
  const Tensor one = random_tensor({frame.tokens(), 3}, g);
  Tensor three = Tensor::zeros({dims.tokens(), 3});
  for (int t = 0; t < 3; ++t) {
    std::copy(one.data.begin(), one.data.end(),
              three.data.begin() + static_cast<std::size_t>(t) * one.data.size());
  }
  Tape tape;
  TokenVolume x{dims, tape.leaf(three)};
  const Tensor out = icsa(x, x, p, zero_pe_refs(tape, dims, dims, long_p, short_p)).tokens.val();
  const std::size_t stride = one.data.size();
  for (int t = 1; t < 3; ++t) {
    for (std::size_t i = 0; i < stride; ++i) {
      CHECK(out.data[i] == doctest::Approx(out.data[static_cast<std::size_t>(t) * stride + i])
                               .epsilon(1e-12));
    }
  }
}

TEST_CASE("icsa cross shape contract and block-order invariance") {
  SeedBank sb(52);
  auto g = sb.stream("icsa3");
  const VolumeDims qd{4, 1, 4, 4};
  const VolumeDims kd{4, 3, 4, 4};
  const BlockPartition p{2, 2};
  const MhaParams long_p = random_mha_params(4, 2, g);
  const MhaParams short_p = random_mha_params(4, 2, g);
  const Tensor qt = random_tensor({qd.tokens(), 4}, g);
  const Tensor kt = random_tensor({kd.tokens(), 4}, g);
  Tape tape;
  TokenVolume q{qd, tape.leaf(qt)};
  TokenVolume kv{kd, tape.leaf(kt)};
  TokenVolume out = icsa(q, kv, p, zero_pe_refs(tape, qd, kd, long_p, short_p));
  CHECK(out.dims == qd);
  CHECK(out.tokens.val().shape == Shape{16, 4});
}

TEST_CASE("bwa output does not depend on block traversal order") {
  SeedBank sb(53);
  auto g = sb.stream("order");
  const VolumeDims dims{4, 1, 4, 4};
  const BlockPartition p{2, 2};
  const MhaParams params = random_mha_params(4, 2, g);
  const Tensor tokens = random_tensor({dims.tokens(), 4}, g);
  Tape tape;
  TokenVolume x{dims, tape.leaf(tokens)};
  const Tensor got = bwa(x, x, x, p, leaf_refs(tape, params)).tokens.val();

  // oracle: evaluate each block with the dense reference and scatter the
  // results in a shuffled block order; any order must give the same volume
  const auto bmap = block_order_map(dims, p);
  const int bt = dims.tokens() / p.blocks();
  Tensor want = Tensor::zeros(got.shape);
  for (int b : {3, 0, 2, 1}) {
    Tensor sub = Tensor::zeros({bt, 4});
    for (int i = 0; i < bt; ++i) {
      for (int c = 0; c < 4; ++c) {
        sub.at({i, c}) = tokens.at({bmap[static_cast<std::size_t>(b * bt + i)], c});
      }
    }
    const Tensor blk = dense_attention_reference(sub, sub, sub, params);
    for (int i = 0; i < bt; ++i) {
      for (int c = 0; c < 4; ++c) {
        want.at({bmap[static_cast<std::size_t>(b * bt + i)], c}) = blk.at({i, c});
      }
    }
  }
  CHECK(max_abs_diff(got, want) < 1e-10);
}

TEST_CASE("attention ops pass grad_check") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SeedBank sb(seed);
    auto g = sb.stream("att-grad");
    const VolumeDims dims{4, 1, 2, 4};
    const BlockPartition p{1, 2};
    const MhaParams long_p = random_mha_params(4, 2, g);
    const MhaParams short_p = random_mha_params(4, 2, g);
    const Tensor tokens = random_tensor({dims.tokens(), 4}, g);
    worst = std::max(
        worst,
        grad_check(
            [&](Tape& tape, std::vector<Value>& in) {
              TokenVolume x{dims, in[0]};
              IcsaParamRefs refs;
              refs.pe_long_q = in[1];
              refs.pe_long_k = in[2];
              refs.pe_short = in[3];
              refs.long_stage = leaf_refs(tape, long_p);
              refs.short_stage = leaf_refs(tape, short_p);
              refs.long_stage.wq = in[4];
              refs.short_stage.wv = in[5];
              return mean(icsa(x, x, p, refs).tokens);
            },
            {tokens, random_tensor({dims.tokens(), 4}, g, 0.2),
             random_tensor({dims.tokens(), 4}, g, 0.2), random_tensor({dims.tokens(), 4}, g, 0.2),
             long_p.wq, short_p.wv}));
  }
  CHECK(worst < 1e-4);
}
