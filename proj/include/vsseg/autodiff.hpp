#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "vsseg/tensor.hpp"

namespace vsseg {

class Tape;

/// Handle to a node on a tape.
struct Value {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& val() const;
  const Tensor& grad() const;
  const Shape& shape() const;
};

struct TapeNode {
  const char* op = "";
  std::vector<int> inputs;
  Tensor value;
  Tensor grad;  // same shape as value, accumulated by backward()
  std::function<void(Tape&, const TapeNode&)> backward;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order of the DAG; backward() walks it in reverse and
/// accumulates gradients by sum over all paths. Single-threaded per tape.
class Tape {
 public:
  Value leaf(Tensor t);
  Value emplace(const char* op, std::vector<int> inputs, Tensor value,
                std::function<void(Tape&, const TapeNode&)> backward);

  /// Seeds d(loss)/d(loss)=1 and propagates to every node that feeds the
  /// loss. ContractError unless loss has exactly one element.
  void backward(Value loss);

  int size() const { return static_cast<int>(nodes_.size()); }
  const TapeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  TapeNode& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  // deque: references to existing nodes stay valid while the graph grows
  std::deque<TapeNode> nodes_;
};

// Graph-building operations. Arguments must live on the same tape.
Value add(Value a, Value b);
Value scale(Value a, double c);
Value matmul(Value a, Value b);
Value linear(Value x, Value w, Value b);
Value relu(Value x);
Value gelu(Value x);
Value softmax(Value x, int axis);
Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
Value reshape(Value x, Shape s);
Value permute_axes(Value x, const std::vector<int>& perm);
Value transpose2d(Value x);
Value gather_rows(Value x, std::vector<int> rows);
Value concat(const std::vector<Value>& parts, int axis);  // rank-2 operands
Value slice(Value x, int axis, int start, int len);       // rank-2 operand
Value sum(Value x);
Value mean(Value x);
Value cross_entropy_mean(Value logits, const std::vector<int>& labels);

// Raw row-major matrix kernels, shared by forward and backward passes.
void matmul_accum(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_abt_accum(const double* a, const double* b, double* c, int m, int n, int k);
void matmul_atb_accum(const double* a, const double* b, double* c, int m, int k, int n);

/// Max over all coordinates of |analytic - central difference| /
/// max(1, |analytic|) for a scalar-valued graph over the given inputs.
double grad_check(const std::function<Value(Tape&, std::vector<Value>&)>& build,
                  const std::vector<Tensor>& inputs, double eps = 1e-5);

}  // namespace vsseg
