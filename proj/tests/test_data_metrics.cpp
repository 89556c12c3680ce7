#include <doctest.h>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "vsseg/errors.hpp"
#include "vsseg/metrics.hpp"
#include "vsseg/synthetic.hpp"

using namespace vsseg;
using testutil::max_abs_diff;

TEST_CASE("miou") {
  SUBCASE("perfect prediction scores 1") {
    SegmentationMap a{2, 2, {0, 1, 2, 1}};
    CHECK(miou(a, a, 3).miou == doctest::Approx(1.0));
  }
  SUBCASE("disjoint single-class maps score 0") {
    SegmentationMap pred = SegmentationMap::filled(2, 2, 0);
    SegmentationMap gt = SegmentationMap::filled(2, 2, 1);
    CHECK(miou(pred, gt, 2).miou == doctest::Approx(0.0));
  }
  SUBCASE("hand-counted 2x2 case") {
    SegmentationMap pred{2, 2, {0, 0, 1, 1}};
    SegmentationMap gt{2, 2, {0, 1, 1, 1}};
    const IouResult r = miou(pred, gt, 2);
    CHECK(r.per_class[0] == doctest::Approx(0.5));
    CHECK(r.per_class[1] == doctest::Approx(2.0 / 3));
    CHECK(r.miou == doctest::Approx(7.0 / 12));
  }
  SUBCASE("classes absent from both maps are excluded") {
    SegmentationMap pred{1, 2, {0, 1}};
    SegmentationMap gt{1, 2, {0, 1}};
    const IouResult r = miou(pred, gt, 5);
    CHECK(r.miou == doctest::Approx(1.0));
    CHECK(r.per_class[3] == doctest::Approx(-1.0));
  }
  SUBCASE("per-class intersection over union is symmetric") {
    SegmentationMap a{2, 3, {0, 1, 1, 2, 0, 2}};
    SegmentationMap b{2, 3, {0, 1, 2, 2, 1, 0}};
    const IouResult ab = miou(a, b, 3);
    const IouResult ba = miou(b, a, 3);
    for (int c = 0; c < 3; ++c) {
      CHECK(ab.per_class[static_cast<std::size_t>(c)] ==
            doctest::Approx(ba.per_class[static_cast<std::size_t>(c)]));
    }
  }
  SUBCASE("shape mismatch") {
    SegmentationMap a = SegmentationMap::filled(2, 2, 0);
    SegmentationMap b = SegmentationMap::filled(2, 3, 0);
    CHECK_THROWS_AS(miou(a, b, 2), ShapeError);
  }
}

TEST_CASE("synthetic clips") {
  SyntheticConfig cfg;  // defaults: 32x32, C=4
  SUBCASE("same seed reproduces the set bit-exactly") {
    const SyntheticSet a = generate_synthetic(11, cfg);
    const SyntheticSet b = generate_synthetic(11, cfg);
    REQUIRE(a.train.size() == b.train.size());
    for (std::size_t c = 0; c < a.train.size(); ++c) {
      for (std::size_t t = 0; t < a.train[c].frames.size(); ++t) {
        CHECK(max_abs_diff(a.train[c].frames[t], b.train[c].frames[t]) == 0.0);
        CHECK(a.train[c].labels[t].labels == b.train[c].labels[t].labels);
      }
    }
    const SyntheticSet c = generate_synthetic(12, cfg);
    CHECK(max_abs_diff(a.train[0].frames[0], c.train[0].frames[0]) > 0.0);
  }
  SUBCASE("every class appears in the default set") {
    const SyntheticSet s = generate_synthetic(3, cfg);
    std::vector<long long> histogram(static_cast<std::size_t>(cfg.classes), 0);
    for (const SyntheticClip& clip : s.train) {
      for (const SegmentationMap& m : clip.labels) {
        for (int label : m.labels) ++histogram[static_cast<std::size_t>(label)];
      }
    }
    for (int c = 0; c < cfg.classes; ++c) CHECK(histogram[static_cast<std::size_t>(c)] > 0);
  }
  SUBCASE("labels translate rigidly with each shape") {
    const SyntheticSet s = generate_synthetic(5, cfg);
    for (const SyntheticClip& clip : s.train) {
      for (const ShapeTrack& shape : clip.shapes) {
        for (std::size_t t = 0; t + 1 < clip.labels.size(); ++t) {
          const SegmentationMap& now = clip.labels[t];
          const SegmentationMap& next = clip.labels[t + 1];
          for (int y = 0; y < clip.H; ++y) {
            for (int x = 0; x < clip.W; ++x) {
              if (now.labels[static_cast<std::size_t>(y) * clip.W + x] != shape.cls) continue;
              const int ny = y + shape.vy, nx = x + shape.vx;
              REQUIRE(ny >= 0);
              REQUIRE(nx >= 0);
              REQUIRE(ny < clip.H);
              REQUIRE(nx < clip.W);
              CHECK(next.labels[static_cast<std::size_t>(ny) * clip.W + nx] == shape.cls);
            }
          }
        }
      }
    }
  }
  SUBCASE("motion stays within two pixels per frame") {
    const SyntheticSet s = generate_synthetic(6, cfg);
    for (const SyntheticClip& clip : s.train) {
      for (const ShapeTrack& shape : clip.shapes) {
        CHECK(std::abs(shape.vx) <= 2);
        CHECK(std::abs(shape.vy) <= 2);
      }
    }
  }
  SUBCASE("frames stay within [0, 1]") {
    const SyntheticSet s = generate_synthetic(7, cfg);
    for (double v : s.train[0].frames[0].data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  SUBCASE("degenerate configs are rejected") {
    SyntheticConfig bad = cfg;
    bad.classes = 1;
    CHECK_THROWS_AS(generate_synthetic(1, bad), ConfigError);
    bad = cfg;
    bad.height = 4;
    CHECK_THROWS_AS(generate_synthetic(1, bad), ConfigError);
    bad = cfg;
    bad.clip_length = 0;
    CHECK_THROWS_AS(generate_synthetic(1, bad), ConfigError);
  }
}

TEST_CASE("pgm export writes a valid P5 header") {
  const SegmentationMap m{2, 3, {0, 1, 2, 3, 0, 1}};
  const auto path = (std::filesystem::temp_directory_path() / "vsseg_test.pgm").string();
  write_pgm(m, 4, path);
  std::ifstream in(path, std::ios::binary);
  std::string magic, dims1, dims2, maxval;
  in >> magic >> dims1 >> dims2 >> maxval;
  CHECK(magic == "P5");
  CHECK(dims1 == "3");
  CHECK(dims2 == "2");
  CHECK(maxval == "255");
  in.get();
  std::string pixels((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(pixels.size() == 6);
  CHECK(static_cast<unsigned char>(pixels[3]) == 255);  // label 3 of 4 classes
}
