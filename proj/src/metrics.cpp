#include "vsseg/metrics.hpp"

#include <fstream>

#include "vsseg/errors.hpp"

namespace vsseg {

SegmentationMap SegmentationMap::filled(int H, int W, int label) {
  return SegmentationMap{H, W, std::vector<int>(static_cast<std::size_t>(H) * W, label)};
}

ConfusionAccumulator::ConfusionAccumulator(int num_classes)
    : C_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

void ConfusionAccumulator::add(const SegmentationMap& pred, const SegmentationMap& gt) {
  if (pred.H != gt.H || pred.W != gt.W) {
    throw ShapeError("miou: prediction " + std::to_string(pred.H) + "x" + std::to_string(pred.W) +
                     " vs ground truth " + std::to_string(gt.H) + "x" + std::to_string(gt.W));
  }
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const int p = pred.labels[i], g = gt.labels[i];
    if (p < 0 || p >= C_ || g < 0 || g >= C_) {
      throw ShapeError("miou: label outside [0, " + std::to_string(C_) + ")");
    }
    ++counts_[static_cast<std::size_t>(g) * C_ + p];
  }
}

IouResult ConfusionAccumulator::result() const {
  IouResult r;
  r.per_class.assign(static_cast<std::size_t>(C_), -1.0);
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < C_; ++c) {
    long long inter = counts_[static_cast<std::size_t>(c) * C_ + c];
    long long gt_count = 0, pred_count = 0;
    for (int j = 0; j < C_; ++j) {
      gt_count += counts_[static_cast<std::size_t>(c) * C_ + j];
      pred_count += counts_[static_cast<std::size_t>(j) * C_ + c];
    }
    const long long uni = gt_count + pred_count - inter;
    if (uni == 0) continue;  // class absent from both maps
    r.per_class[static_cast<std::size_t>(c)] = static_cast<double>(inter) / static_cast<double>(uni);
    total += r.per_class[static_cast<std::size_t>(c)];
    ++present;
  }
  r.miou = present > 0 ? total / present : 0.0;
  return r;
}

IouResult miou(const SegmentationMap& pred, const SegmentationMap& gt, int num_classes) {
  ConfusionAccumulator acc(num_classes);
  acc.add(pred, gt);
  return acc.result();
}

void write_pgm(const SegmentationMap& map, int num_classes, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open pgm file for writing: " + path);
  os << "P5\n" << map.W << " " << map.H << "\n255\n";
  const int denom = num_classes > 1 ? num_classes - 1 : 1;
  for (int label : map.labels) {
    const unsigned char g = static_cast<unsigned char>((label * 255) / denom);
    os.write(reinterpret_cast<const char*>(&g), 1);
  }
  if (!os) throw IoError("failed writing pgm file: " + path);
}

}  // namespace vsseg
