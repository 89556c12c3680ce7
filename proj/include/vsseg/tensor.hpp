#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace vsseg {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

/// Dense row-major tensor of doubles. Rank 0 denotes a scalar with one
/// element. Extents must all be >= 1 and product(shape) == data.size().
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> d);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor scalar(double v);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  double& at(std::initializer_list<int> idx);
  double at(std::initializer_list<int> idx) const;

 private:
  std::int64_t offset(std::initializer_list<int> idx) const;
};

}  // namespace vsseg
