#pragma once

#include <string>
#include <vector>

namespace vsseg {

struct SegmentationMap {
  int H = 0, W = 0;
  std::vector<int> labels;  // row-major, size H*W

  static SegmentationMap filled(int H, int W, int label);
};

struct IouResult {
  double miou = 0.0;                 // mean over classes present in gt or pred
  std::vector<double> per_class;     // IoU per class; -1 marks an absent class
};

/// Accumulates intersection/union counts over any number of maps; mIoU is
/// taken over classes that appear in ground truth or prediction.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int num_classes);
  void add(const SegmentationMap& pred, const SegmentationMap& gt);
  IouResult result() const;

 private:
  int C_;
  std::vector<long long> counts_;  // C x C, counts_[gt*C + pred]
};

IouResult miou(const SegmentationMap& pred, const SegmentationMap& gt, int num_classes);

/// Binary P5 export, labels mapped to evenly spaced gray levels.
void write_pgm(const SegmentationMap& map, int num_classes, const std::string& path);

}  // namespace vsseg
