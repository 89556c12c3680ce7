#include "vsseg/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "vsseg/errors.hpp"

namespace vsseg {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void check_same_tape(Value a, Value b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

const Tensor& value_of(Tape& t, int id) { return t.node(id).value; }

}  // namespace

const Tensor& Value::val() const { return tape->node(id).value; }
const Tensor& Value::grad() const { return tape->node(id).grad; }
const Shape& Value::shape() const { return tape->node(id).value.shape; }

Value Tape::leaf(Tensor t) {
  return emplace("leaf", {}, std::move(t), nullptr);
}

Value Tape::emplace(const char* op, std::vector<int> inputs, Tensor value,
                    std::function<void(Tape&, const TapeNode&)> backward) {
  TapeNode n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.grad = Tensor::zeros(value.shape);
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Value{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Value loss) {
  if (loss.tape != this) throw ContractError("loss lives on a different tape");
  if (loss.val().numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(loss.val().shape));
  }
  // Mark the subgraph feeding the loss, then run node backwards in
  // reverse creation order (a reverse topological order of the DAG).
  std::vector<char> reachable(nodes_.size(), 0);
  std::vector<int> stack{loss.id};
  reachable[static_cast<std::size_t>(loss.id)] = 1;
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    for (int in : nodes_[static_cast<std::size_t>(id)].inputs) {
      if (!reachable[static_cast<std::size_t>(in)]) {
        reachable[static_cast<std::size_t>(in)] = 1;
        stack.push_back(in);
      }
    }
  }
  nodes_[static_cast<std::size_t>(loss.id)].grad.data[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    const TapeNode& n = nodes_[static_cast<std::size_t>(id)];
    if (reachable[static_cast<std::size_t>(id)] && n.backward) n.backward(*this, n);
  }
}

void matmul_accum(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_abt_accum(const double* a, const double* b, double* c, int m, int n, int k) {
  // a: m x n, b: k x n, c (+=): m x k
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * n;
    double* crow = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* brow = b + static_cast<std::size_t>(p) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[p] += acc;
    }
  }
}

void matmul_atb_accum(const double* a, const double* b, double* c, int m, int k, int n) {
  // a: m x k, b: m x n, c (+=): k x n
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Value add(Value a, Value b) {
  check_same_tape(a, b);
  const Tensor& ta = a.val();
  const Tensor& tb = b.val();
  if (!ta.same_shape(tb)) {
    throw ShapeError("add: shape " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  return a.tape->emplace("add", {a.id, b.id}, std::move(out),
                         [](Tape& t, const TapeNode& n) {
                           Tensor& ga = t.node(n.inputs[0]).grad;
                           Tensor& gb = t.node(n.inputs[1]).grad;
                           for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
                             ga.data[i] += n.grad.data[i];
                             gb.data[i] += n.grad.data[i];
                           }
                         });
}

Value scale(Value a, double c) {
  Tensor out = a.val();
  for (double& v : out.data) v *= c;
  return a.tape->emplace("scale", {a.id}, std::move(out),
                         [c](Tape& t, const TapeNode& n) {
                           Tensor& ga = t.node(n.inputs[0]).grad;
                           for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
                             ga.data[i] += c * n.grad.data[i];
                           }
                         });
}

Value matmul(Value a, Value b) {
  check_same_tape(a, b);
  const Tensor& ta = a.val();
  const Tensor& tb = b.val();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(ta.shape) + " and " +
                     shape_str(tb.shape));
  }
  const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out = Tensor::zeros({m, n});
  matmul_accum(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  return a.tape->emplace("matmul", {a.id, b.id}, std::move(out),
                         [m, k, n](Tape& t, const TapeNode& nd) {
                           const Tensor& av = value_of(t, nd.inputs[0]);
                           const Tensor& bv = value_of(t, nd.inputs[1]);
                           Tensor& ga = t.node(nd.inputs[0]).grad;
                           Tensor& gb = t.node(nd.inputs[1]).grad;
                           matmul_abt_accum(nd.grad.data.data(), bv.data.data(),
                                            ga.data.data(), m, n, k);
                           matmul_atb_accum(av.data.data(), nd.grad.data.data(),
                                            gb.data.data(), m, k, n);
                         });
}

Value linear(Value x, Value w, Value b) {
  check_same_tape(x, w);
  check_same_tape(x, b);
  const Tensor& tx = x.val();
  const Tensor& tw = w.val();
  const Tensor& tb = b.val();
  if (tx.rank() < 1 || tw.rank() != 2 || tb.rank() != 1) {
    throw ShapeError("linear: x " + shape_str(tx.shape) + ", w " + shape_str(tw.shape) +
                     ", b " + shape_str(tb.shape));
  }
  const int din = tx.shape.back();
  const int dout = tw.shape[1];
  if (tw.shape[0] != din || tb.shape[0] != dout) {
    throw ShapeError("linear: x " + shape_str(tx.shape) + " incompatible with w " +
                     shape_str(tw.shape) + ", b " + shape_str(tb.shape));
  }
  const int n = static_cast<int>(tx.numel() / din);
  Shape out_shape = tx.shape;
  out_shape.back() = dout;
  Tensor out = Tensor::zeros(out_shape);
  matmul_accum(tx.data.data(), tw.data.data(), out.data.data(), n, din, dout);
  for (int i = 0; i < n; ++i) {
    double* row = out.data.data() + static_cast<std::size_t>(i) * dout;
    for (int j = 0; j < dout; ++j) row[j] += tb.data[static_cast<std::size_t>(j)];
  }
  return x.tape->emplace("linear", {x.id, w.id, b.id}, std::move(out),
                         [n, din, dout](Tape& t, const TapeNode& nd) {
                           const Tensor& xv = value_of(t, nd.inputs[0]);
                           const Tensor& wv = value_of(t, nd.inputs[1]);
                           Tensor& gx = t.node(nd.inputs[0]).grad;
                           Tensor& gw = t.node(nd.inputs[1]).grad;
                           Tensor& gb = t.node(nd.inputs[2]).grad;
                           matmul_abt_accum(nd.grad.data.data(), wv.data.data(),
                                            gx.data.data(), n, dout, din);
                           matmul_atb_accum(xv.data.data(), nd.grad.data.data(),
                                            gw.data.data(), n, din, dout);
                           for (int i = 0; i < n; ++i) {
                             const double* row =
                                 nd.grad.data.data() + static_cast<std::size_t>(i) * dout;
                             for (int j = 0; j < dout; ++j) gb.data[static_cast<std::size_t>(j)] += row[j];
                           }
                         });
}

Value relu(Value x) {
  Tensor out = x.val();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return x.tape->emplace("relu", {x.id}, std::move(out),
                         [](Tape& t, const TapeNode& n) {
                           const Tensor& xv = value_of(t, n.inputs[0]);
                           Tensor& gx = t.node(n.inputs[0]).grad;
                           for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
                             if (xv.data[i] > 0.0) gx.data[i] += n.grad.data[i];
                           }
                         });
}

Value gelu(Value x) {
  Tensor out = x.val();
  for (double& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return x.tape->emplace("gelu", {x.id}, std::move(out),
                         [](Tape& t, const TapeNode& n) {
                           const Tensor& xv = value_of(t, n.inputs[0]);
                           Tensor& gx = t.node(n.inputs[0]).grad;
                           for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
                             const double v = xv.data[i];
                             const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
                             const double pdf = std::exp(-0.5 * v * v) * kInvSqrt2Pi;
                             gx.data[i] += n.grad.data[i] * (cdf + v * pdf);
                           }
                         });
}

namespace {

// Decompose a shape into (outer, axis_len, inner) around one axis.
void axis_split(const Shape& s, int axis, int& outer, int& len, int& inner) {
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " invalid for shape " + shape_str(s));
  }
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  len = s[axis];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) inner *= s[i];
}

}  // namespace

Value softmax(Value x, int axis) {
  const Tensor& tx = x.val();
  int outer, len, inner;
  axis_split(tx.shape, axis, outer, len, inner);
  Tensor out = Tensor::zeros(tx.shape);
  for (int o = 0; o < outer; ++o) {
    for (int i = 0; i < inner; ++i) {
      const std::size_t base = static_cast<std::size_t>(o) * len * inner + i;
      double mx = tx.data[base];
      for (int l = 1; l < len; ++l) {
        mx = std::max(mx, tx.data[base + static_cast<std::size_t>(l) * inner]);
      }
      double denom = 0.0;
      for (int l = 0; l < len; ++l) {
        const double e = std::exp(tx.data[base + static_cast<std::size_t>(l) * inner] - mx);
        out.data[base + static_cast<std::size_t>(l) * inner] = e;
        denom += e;
      }
      for (int l = 0; l < len; ++l) out.data[base + static_cast<std::size_t>(l) * inner] /= denom;
    }
  }
  return x.tape->emplace("softmax", {x.id}, std::move(out),
                         [outer, len, inner](Tape& t, const TapeNode& n) {
                           Tensor& gx = t.node(n.inputs[0]).grad;
                           const Tensor& p = n.value;
                           for (int o = 0; o < outer; ++o) {
                             for (int i = 0; i < inner; ++i) {
                               const std::size_t base =
                                   static_cast<std::size_t>(o) * len * inner + i;
                               double dot = 0.0;
                               for (int l = 0; l < len; ++l) {
                                 const std::size_t at = base + static_cast<std::size_t>(l) * inner;
                                 dot += n.grad.data[at] * p.data[at];
                               }
                               for (int l = 0; l < len; ++l) {
                                 const std::size_t at = base + static_cast<std::size_t>(l) * inner;
                                 gx.data[at] += p.data[at] * (n.grad.data[at] - dot);
                               }
                             }
                           }
                         });
}

Value layer_norm(Value x, Value gamma, Value beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Tensor& tx = x.val();
  if (tx.rank() < 1) throw ShapeError("layer_norm: rank-0 input");
  const int d = tx.shape.back();
  const Tensor& tg = gamma.val();
  const Tensor& tb = beta.val();
  if (tg.rank() != 1 || tg.shape[0] != d || tb.rank() != 1 || tb.shape[0] != d) {
    throw ShapeError("layer_norm: gamma/beta " + shape_str(tg.shape) + "/" +
                     shape_str(tb.shape) + " vs feature dim " + std::to_string(d));
  }
  const int n = static_cast<int>(tx.numel() / d);
  Tensor out = Tensor::zeros(tx.shape);
  auto xhat = std::make_shared<std::vector<double>>(tx.data.size());
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r) {
    const double* row = tx.data.data() + static_cast<std::size_t>(r) * d;
    double m = 0.0;
    for (int j = 0; j < d; ++j) m += row[j];
    m /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - m;
      var += c * c;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    (*invstd)[static_cast<std::size_t>(r)] = is;
    for (int j = 0; j < d; ++j) {
      const std::size_t at = static_cast<std::size_t>(r) * d + j;
      const double h = (row[j] - m) * is;
      (*xhat)[at] = h;
      out.data[at] = h * tg.data[static_cast<std::size_t>(j)] + tb.data[static_cast<std::size_t>(j)];
    }
  }
  return x.tape->emplace(
      "layer_norm", {x.id, gamma.id, beta.id}, std::move(out),
      [n, d, xhat, invstd](Tape& t, const TapeNode& nd) {
        const Tensor& gv = value_of(t, nd.inputs[1]);
        Tensor& gx = t.node(nd.inputs[0]).grad;
        Tensor& gg = t.node(nd.inputs[1]).grad;
        Tensor& gb = t.node(nd.inputs[2]).grad;
        for (int r = 0; r < n; ++r) {
          const std::size_t base = static_cast<std::size_t>(r) * d;
          double m1 = 0.0, m2 = 0.0;
          for (int j = 0; j < d; ++j) {
            const double dh = nd.grad.data[base + j] * gv.data[static_cast<std::size_t>(j)];
            m1 += dh;
            m2 += dh * (*xhat)[base + j];
          }
          m1 /= d;
          m2 /= d;
          const double is = (*invstd)[static_cast<std::size_t>(r)];
          for (int j = 0; j < d; ++j) {
            const double dh = nd.grad.data[base + j] * gv.data[static_cast<std::size_t>(j)];
            gx.data[base + j] += is * (dh - m1 - (*xhat)[base + j] * m2);
            gg.data[static_cast<std::size_t>(j)] += nd.grad.data[base + j] * (*xhat)[base + j];
            gb.data[static_cast<std::size_t>(j)] += nd.grad.data[base + j];
          }
        }
      });
}

Value reshape(Value x, Shape s) {
  const Tensor& tx = x.val();
  if (shape_numel(s) != tx.numel()) {
    throw ShapeError("reshape: " + shape_str(tx.shape) + " to " + shape_str(s));
  }
  Tensor out(std::move(s), tx.data);
  return x.tape->emplace("reshape", {x.id}, std::move(out),
                         [](Tape& t, const TapeNode& n) {
                           Tensor& gx = t.node(n.inputs[0]).grad;
                           for (std::size_t i = 0; i < n.grad.data.size(); ++i) {
                             gx.data[i] += n.grad.data[i];
                           }
                         });
}

Value permute_axes(Value x, const std::vector<int>& perm) {
  const Tensor& tx = x.val();
  const int r = tx.rank();
  if (static_cast<int>(perm.size()) != r) {
    throw ShapeError("permute_axes: perm size " + std::to_string(perm.size()) +
                     " vs rank " + std::to_string(r));
  }
  std::vector<char> seen(static_cast<std::size_t>(r), 0);
  for (int a : perm) {
    if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)]) {
      throw ShapeError("permute_axes: invalid permutation");
    }
    seen[static_cast<std::size_t>(a)] = 1;
  }
  std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r), 1);
  for (int a = r - 2; a >= 0; --a) {
    in_strides[static_cast<std::size_t>(a)] =
        in_strides[static_cast<std::size_t>(a + 1)] * tx.shape[static_cast<std::size_t>(a + 1)];
  }
  Shape out_shape(static_cast<std::size_t>(r));
  for (int a = 0; a < r; ++a) out_shape[static_cast<std::size_t>(a)] = tx.shape[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];

  auto map = std::make_shared<std::vector<std::int64_t>>(tx.data.size());
  std::vector<int> idx(static_cast<std::size_t>(r), 0);
  for (std::size_t f = 0; f < tx.data.size(); ++f) {
    std::int64_t src = 0;
    for (int a = 0; a < r; ++a) {
      src += static_cast<std::int64_t>(idx[static_cast<std::size_t>(a)]) *
             in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
    }
    (*map)[f] = src;
    for (int a = r - 1; a >= 0; --a) {
      if (++idx[static_cast<std::size_t>(a)] < out_shape[static_cast<std::size_t>(a)]) break;
      idx[static_cast<std::size_t>(a)] = 0;
    }
  }
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t f = 0; f < out.data.size(); ++f) out.data[f] = tx.data[static_cast<std::size_t>((*map)[f])];
  return x.tape->emplace("permute_axes", {x.id}, std::move(out),
                         [map](Tape& t, const TapeNode& n) {
                           Tensor& gx = t.node(n.inputs[0]).grad;
                           for (std::size_t f = 0; f < n.grad.data.size(); ++f) {
                             gx.data[static_cast<std::size_t>((*map)[f])] += n.grad.data[f];
                           }
                         });
}

Value transpose2d(Value x) {
  if (x.val().rank() != 2) throw ShapeError("transpose2d: rank-2 input required");
  return permute_axes(x, {1, 0});
}

Value gather_rows(Value x, std::vector<int> rows) {
  const Tensor& tx = x.val();
  if (tx.rank() != 2) throw ShapeError("gather_rows: rank-2 input required");
  const int n = tx.shape[0], d = tx.shape[1];
  for (int r : rows) {
    if (r < 0 || r >= n) throw ShapeError("gather_rows: row index out of range");
  }
  Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(tx.data.data() + static_cast<std::size_t>(rows[i]) * d, d,
                out.data.data() + i * static_cast<std::size_t>(d));
  }
  auto rows_ptr = std::make_shared<std::vector<int>>(std::move(rows));
  return x.tape->emplace("gather_rows", {x.id}, std::move(out),
                         [rows_ptr, d](Tape& t, const TapeNode& nd) {
                           Tensor& gx = t.node(nd.inputs[0]).grad;
                           for (std::size_t i = 0; i < rows_ptr->size(); ++i) {
                             const double* src =
                                 nd.grad.data.data() + i * static_cast<std::size_t>(d);
                             double* dst =
                                 gx.data.data() +
                                 static_cast<std::size_t>((*rows_ptr)[i]) * d;
                             for (int j = 0; j < d; ++j) dst[j] += src[j];
                           }
                         });
}

Value concat(const std::vector<Value>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape* tape = parts[0].tape;
  int rows = parts[0].val().shape[0];
  int cols = parts[0].val().shape[1];
  int total = 0;
  for (const Value& p : parts) {
    check_same_tape(parts[0], p);
    const Tensor& tp = p.val();
    if (tp.rank() != 2) throw ShapeError("concat: rank-2 operands required");
    if (axis == 0 && tp.shape[1] != cols) {
      throw ShapeError("concat: column mismatch " + shape_str(tp.shape));
    }
    if (axis == 1 && tp.shape[0] != rows) {
      throw ShapeError("concat: row mismatch " + shape_str(tp.shape));
    }
    total += tp.shape[axis];
  }
  Shape out_shape = axis == 0 ? Shape{total, cols} : Shape{rows, total};
  Tensor out = Tensor::zeros(out_shape);
  std::vector<int> ids;
  std::vector<int> offsets;
  int off = 0;
  for (const Value& p : parts) {
    const Tensor& tp = p.val();
    if (axis == 0) {
      std::copy_n(tp.data.data(), tp.data.size(),
                  out.data.data() + static_cast<std::size_t>(off) * cols);
    } else {
      const int w = tp.shape[1];
      for (int r = 0; r < rows; ++r) {
        std::copy_n(tp.data.data() + static_cast<std::size_t>(r) * w, w,
                    out.data.data() + static_cast<std::size_t>(r) * total + off);
      }
    }
    ids.push_back(p.id);
    offsets.push_back(off);
    off += tp.shape[axis];
  }
  return tape->emplace("concat", std::move(ids), std::move(out),
                       [axis, offsets, total](Tape& t, const TapeNode& nd) {
                         for (std::size_t pi = 0; pi < nd.inputs.size(); ++pi) {
                           Tensor& g = t.node(nd.inputs[pi]).grad;
                           const int pr = g.shape[0], pc = g.shape[1];
                           const int off2 = offsets[pi];
                           if (axis == 0) {
                             for (std::size_t i = 0; i < g.data.size(); ++i) {
                               g.data[i] += nd.grad.data[static_cast<std::size_t>(off2) * pc + i];
                             }
                           } else {
                             for (int r = 0; r < pr; ++r) {
                               const double* src = nd.grad.data.data() +
                                                   static_cast<std::size_t>(r) * total + off2;
                               double* dst = g.data.data() + static_cast<std::size_t>(r) * pc;
                               for (int j = 0; j < pc; ++j) dst[j] += src[j];
                             }
                           }
                         }
                       });
}

Value slice(Value x, int axis, int start, int len) {
  const Tensor& tx = x.val();
  if (tx.rank() != 2) throw ShapeError("slice: rank-2 input required");
  if (axis != 0 && axis != 1) throw ShapeError("slice: axis must be 0 or 1");
  const int extent = tx.shape[axis];
  if (start < 0 || len < 1 || start + len > extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of extent " + std::to_string(extent));
  }
  const int rows = tx.shape[0], cols = tx.shape[1];
  Tensor out = axis == 0 ? Tensor::zeros({len, cols}) : Tensor::zeros({rows, len});
  if (axis == 0) {
    std::copy_n(tx.data.data() + static_cast<std::size_t>(start) * cols, out.data.size(),
                out.data.data());
  } else {
    for (int r = 0; r < rows; ++r) {
      std::copy_n(tx.data.data() + static_cast<std::size_t>(r) * cols + start, len,
                  out.data.data() + static_cast<std::size_t>(r) * len);
    }
  }
  return x.tape->emplace("slice", {x.id}, std::move(out),
                         [axis, start, len, rows, cols](Tape& t, const TapeNode& nd) {
                           Tensor& gx = t.node(nd.inputs[0]).grad;
                           if (axis == 0) {
                             for (std::size_t i = 0; i < nd.grad.data.size(); ++i) {
                               gx.data[static_cast<std::size_t>(start) * cols + i] +=
                                   nd.grad.data[i];
                             }
                           } else {
                             for (int r = 0; r < rows; ++r) {
                               const double* src =
                                   nd.grad.data.data() + static_cast<std::size_t>(r) * len;
                               double* dst =
                                   gx.data.data() + static_cast<std::size_t>(r) * cols + start;
                               for (int j = 0; j < len; ++j) dst[j] += src[j];
                             }
                           }
                         });
}

Value sum(Value x) {
  double acc = 0.0;
  for (double v : x.val().data) acc += v;
  return x.tape->emplace("sum", {x.id}, Tensor::scalar(acc),
                         [](Tape& t, const TapeNode& n) {
                           Tensor& gx = t.node(n.inputs[0]).grad;
                           const double g = n.grad.data[0];
                           for (double& v : gx.data) v += g;
                         });
}

Value mean(Value x) {
  double acc = 0.0;
  for (double v : x.val().data) acc += v;
  const double inv = 1.0 / static_cast<double>(x.val().numel());
  return x.tape->emplace("mean", {x.id}, Tensor::scalar(acc * inv),
                         [inv](Tape& t, const TapeNode& n) {
                           Tensor& gx = t.node(n.inputs[0]).grad;
                           const double g = n.grad.data[0] * inv;
                           for (double& v : gx.data) v += g;
                         });
}

Value cross_entropy_mean(Value logits, const std::vector<int>& labels) {
  const Tensor& tx = logits.val();
  if (tx.rank() != 2) throw ShapeError("cross_entropy_mean: rank-2 logits required");
  const int n = tx.shape[0], c = tx.shape[1];
  if (static_cast<int>(labels.size()) != n) {
    throw ShapeError("cross_entropy_mean: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " rows");
  }
  auto probs = std::make_shared<std::vector<double>>(tx.data.size());
  double loss = 0.0;
  for (int r = 0; r < n; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= c) throw ShapeError("cross_entropy_mean: label out of range");
    const double* row = tx.data.data() + static_cast<std::size_t>(r) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      const double e = std::exp(row[j] - mx);
      (*probs)[static_cast<std::size_t>(r) * c + j] = e;
      denom += e;
    }
    for (int j = 0; j < c; ++j) (*probs)[static_cast<std::size_t>(r) * c + j] /= denom;
    loss += mx + std::log(denom) - row[y];
  }
  loss /= n;
  auto lab = std::make_shared<std::vector<int>>(labels);
  return logits.tape->emplace("cross_entropy_mean", {logits.id}, Tensor::scalar(loss),
                              [probs, lab, n, c](Tape& t, const TapeNode& nd) {
                                Tensor& gx = t.node(nd.inputs[0]).grad;
                                const double g = nd.grad.data[0] / n;
                                for (int r = 0; r < n; ++r) {
                                  const int y = (*lab)[static_cast<std::size_t>(r)];
                                  for (int j = 0; j < c; ++j) {
                                    const std::size_t at = static_cast<std::size_t>(r) * c + j;
                                    gx.data[at] += g * ((*probs)[at] - (j == y ? 1.0 : 0.0));
                                  }
                                }
                              });
}

double grad_check(const std::function<Value(Tape&, std::vector<Value>&)>& build,
                  const std::vector<Tensor>& inputs, double eps) {
  if (eps < 1e-7 || eps > 1e-3) {
    throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");
  }
  std::vector<Tensor> work = inputs;
  auto eval_loss = [&]() {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(work.size());
    for (const Tensor& t : work) leaves.push_back(tape.leaf(t));
    Value loss = build(tape, leaves);
    if (loss.val().numel() != 1) throw ContractError("grad_check: loss must be scalar");
    return loss.val().data[0];
  };

  // Analytic gradients at the unperturbed point. The input leaves were
  // created first, so they occupy node ids 0..n-1 in order.
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(work.size());
    for (const Tensor& t : work) leaves.push_back(tape.leaf(t));
    Value loss = build(tape, leaves);
    if (loss.val().numel() != 1) throw ContractError("grad_check: loss must be scalar");
    tape.backward(loss);
    for (std::size_t i = 0; i < work.size(); ++i) {
      analytic.push_back(tape.node(static_cast<int>(i)).grad);
    }
  }

  double max_rel = 0.0;
  for (std::size_t i = 0; i < work.size(); ++i) {
    for (std::size_t j = 0; j < work[i].data.size(); ++j) {
      const double keep = work[i].data[j];
      work[i].data[j] = keep + eps;
      const double lp = eval_loss();
      work[i].data[j] = keep - eps;
      const double lm = eval_loss();
      work[i].data[j] = keep;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = analytic[i].data[j];
      const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace vsseg
