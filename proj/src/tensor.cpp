#include "vsseg/tensor.hpp"

#include <sstream>

#include "vsseg/errors.hpp"

namespace vsseg {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int e : s) n *= e;
  return n;
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  for (int e : shape) {
    if (e < 1) throw ShapeError("tensor extent must be >= 1, got shape " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("tensor data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::zeros(Shape s) {
  std::int64_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double v) {
  std::int64_t n = shape_numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  int m = static_cast<int>(rows.size());
  int n = m > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(m) * n);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != n) throw ShapeError("ragged row list");
    d.insert(d.end(), r.begin(), r.end());
  }
  return Tensor({m, n}, std::move(d));
}

std::int64_t Tensor::offset(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) + " vs tensor shape " +
                     shape_str(shape));
  }
  std::int64_t off = 0;
  int axis = 0;
  for (int i : idx) {
    if (i < 0 || i >= shape[axis]) {
      throw ShapeError("index out of range on axis " + std::to_string(axis));
    }
    off = off * shape[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<int> idx) { return data[static_cast<std::size_t>(offset(idx))]; }

double Tensor::at(std::initializer_list<int> idx) const {
  return data[static_cast<std::size_t>(offset(idx))];
}

}  // namespace vsseg
