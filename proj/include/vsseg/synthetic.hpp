#pragma once

#include <cstdint>
#include <vector>

#include "vsseg/metrics.hpp"
#include "vsseg/tensor.hpp"

namespace vsseg {

/// Moving-shapes clip generator. Each clip carries one rigid shape per
/// non-background class, translating at a constant integer velocity over a
/// textured background, with i.i.d. per-frame observation noise on top.
struct SyntheticConfig {
  int height = 32;
  int width = 32;
  int classes = 4;  // class 0 is background
  int clip_length = 6;
  int train_clips = 6;
  int val_clips = 2;
  int min_radius = 3;
  int max_radius = 4;
  int max_speed = 1;  // px/frame per axis; the generator caps this at 2
  double background_base = 0.2;
  double class_contrast = 0.2;
  double texture_amplitude = 0.08;
  double noise_stddev = 0.18;
};

struct ShapeTrack {
  int cls = 0;
  int kind = 0;  // 0 square, 1 disk, 2 diamond
  int radius = 0;
  int vx = 0, vy = 0;
  int x0 = 0, y0 = 0;  // center at t=0
};

struct SyntheticClip {
  int H = 0, W = 0, C = 0;
  std::vector<Tensor> frames;  // each [H, W], grayscale in [0, 1]
  std::vector<SegmentationMap> labels;
  std::vector<ShapeTrack> shapes;
};

struct SyntheticSet {
  std::vector<SyntheticClip> train, val;
};

SyntheticSet generate_synthetic(std::uint64_t seed, const SyntheticConfig& cfg);

}  // namespace vsseg
