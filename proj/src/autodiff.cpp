#include "graphix/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace graphix {

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid Var");
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

const Matrix& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) throw std::logic_error("Tape::grad: backward() not run");
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

Var Tape::leaf(Matrix value) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  Node n;
  n.op = Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = graphix::matmul(value(a), value(b));
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  Node n;
  n.op = Op::Add;
  n.a = a.id;
  n.b = b.id;
  n.value = graphix::add(value(a), value(b));
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var bias) {
  const Matrix& x = value(a);
  const Matrix& bm = value(bias);
  if (bm.rows() != 1 || bm.cols() != x.cols())
    throw std::invalid_argument("add_row: bias must be 1 x cols");
  Node n;
  n.op = Op::AddRow;
  n.a = a.id;
  n.b = bias.id;
  n.value = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) n.value.at(r, c) += bm.at(0, c);
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Node n;
  n.op = Op::Scale;
  n.a = a.id;
  n.scalar = s;
  n.value = graphix::scale(value(a), s);
  return push(std::move(n));
}

Var Tape::add_const(Var a, Matrix c) {
  Node n;
  n.op = Op::AddConst;
  n.a = a.id;
  n.value = graphix::add(value(a), c);
  return push(std::move(n));
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::Relu;
  n.a = a.id;
  n.value = graphix::relu(value(a));
  return push(std::move(n));
}

Var Tape::row_softmax(Var a) {
  Node n;
  n.op = Op::RowSoftmax;
  n.a = a.id;
  n.value = graphix::row_softmax(value(a));
  return push(std::move(n));
}

Var Tape::layer_norm(Var a, double eps) {
  Node n;
  n.op = Op::LayerNorm;
  n.a = a.id;
  n.scalar = eps;
  n.value = graphix::layer_norm(value(a), eps);
  return push(std::move(n));
}

Var Tape::transpose(Var a) {
  Node n;
  n.op = Op::Transpose;
  n.a = a.id;
  n.value = graphix::transpose(value(a));
  return push(std::move(n));
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  std::vector<Matrix> vals;
  vals.reserve(xs.size());
  for (Var v : xs) vals.push_back(value(v));
  Node n;
  n.op = Op::ConcatCols;
  for (Var v : xs) n.inputs.push_back(v.id);
  n.value = graphix::concat_cols(vals);
  return push(std::move(n));
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty input");
  std::size_t rows = 0;
  const std::size_t cols = value(xs[0]).cols();
  for (Var v : xs) {
    if (value(v).cols() != cols)
      throw std::invalid_argument("concat_rows: column count mismatch");
    rows += value(v).rows();
  }
  Node n;
  n.op = Op::ConcatRows;
  n.value = Matrix(rows, cols);
  std::size_t r0 = 0;
  for (Var v : xs) {
    n.inputs.push_back(v.id);
    const Matrix& m = value(v);
    std::copy(m.data().begin(), m.data().end(), n.value.row(r0));
    r0 += m.rows();
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Matrix& x = value(a);
  if (begin >= end || end > x.cols())
    throw std::invalid_argument("slice_cols: bad range");
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.idx = {static_cast<int>(begin), static_cast<int>(end)};
  n.value = Matrix(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy(x.row(r) + begin, x.row(r) + end, n.value.row(r));
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Matrix& x = value(a);
  Node n;
  n.op = Op::GatherRows;
  n.a = a.id;
  n.value = Matrix(idx.size(), x.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= static_cast<int>(x.rows()))
      throw std::out_of_range("gather_rows: index out of range");
    std::copy(x.row(static_cast<std::size_t>(idx[r])),
              x.row(static_cast<std::size_t>(idx[r])) + x.cols(), n.value.row(r));
  }
  n.idx = std::move(idx);
  return push(std::move(n));
}

Var Tape::segment_mean(Var a, std::vector<std::pair<int, int>> spans) {
  const Matrix& x = value(a);
  Node n;
  n.op = Op::SegmentMean;
  n.a = a.id;
  n.value = Matrix(spans.size(), x.cols());
  for (std::size_t k = 0; k < spans.size(); ++k) {
    const auto [b, e] = spans[k];
    if (b < 0 || e <= b || e > static_cast<int>(x.rows()))
      throw std::out_of_range("segment_mean: bad span");
    const double inv = 1.0 / static_cast<double>(e - b);
    for (int r = b; r < e; ++r)
      for (std::size_t c = 0; c < x.cols(); ++c)
        n.value.at(k, c) += x.at(static_cast<std::size_t>(r), c) * inv;
  }
  n.spans = std::move(spans);
  return push(std::move(n));
}

Var Tape::expand_rows(Var a, std::vector<int> row_of_out) {
  const Matrix& x = value(a);
  Node n;
  n.op = Op::ExpandRows;
  n.a = a.id;
  n.value = Matrix(row_of_out.size(), x.cols());
  for (std::size_t r = 0; r < row_of_out.size(); ++r) {
    const int src = row_of_out[r];
    if (src < 0) continue;
    if (src >= static_cast<int>(x.rows()))
      throw std::out_of_range("expand_rows: index out of range");
    std::copy(x.row(static_cast<std::size_t>(src)),
              x.row(static_cast<std::size_t>(src)) + x.cols(), n.value.row(r));
  }
  n.idx = std::move(row_of_out);
  return push(std::move(n));
}

Var Tape::cross_entropy(Var logits, std::vector<int> targets, LossReduction red) {
  const Matrix& x = value(logits);
  if (targets.size() != x.rows())
    throw std::invalid_argument("cross_entropy: one target per row required");
  check_finite(x, "cross_entropy");
  Node n;
  n.op = Op::CrossEntropy;
  n.a = logits.id;
  n.scalar = red == LossReduction::Mean ? 1.0 / static_cast<double>(x.rows()) : 1.0;
  double total = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const int t = targets[r];
    if (t < 0 || t >= static_cast<int>(x.cols()))
      throw std::out_of_range("cross_entropy: unknown target token id " +
                              std::to_string(t));
    const double* l = x.row(r);
    double mx = l[0];
    for (std::size_t c = 1; c < x.cols(); ++c) mx = std::max(mx, l[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) z += std::exp(l[c] - mx);
    total += mx + std::log(z) - l[static_cast<std::size_t>(t)];
  }
  n.value = Matrix(1, 1, total * n.scalar);
  n.idx = std::move(targets);
  return push(std::move(n));
}

void Tape::backward(Var root) {
  const Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  for (Node& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols());
  nodes_[static_cast<std::size_t>(root.id)].grad.at(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) backward_node(nodes_[i]);
}

void Tape::backward_node(Node& n) {
  const Matrix& g = n.grad;
  auto& ga = n.a >= 0 ? nodes_[static_cast<std::size_t>(n.a)].grad : n.grad;
  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      const Matrix& a = nodes_[static_cast<std::size_t>(n.a)].value;
      const Matrix& b = nodes_[static_cast<std::size_t>(n.b)].value;
      Matrix& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      // ga += g * b^T
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
          const double gij = g.at(i, j);
          if (gij == 0.0) continue;
          for (std::size_t k = 0; k < a.cols(); ++k)
            ga.at(i, k) += gij * b.at(k, j);
        }
      // gb += a^T * g
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
          const double aik = a.at(i, k);
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < b.cols(); ++j)
            gb.at(k, j) += aik * g.at(i, j);
        }
      break;
    }
    case Op::Add: {
      Matrix& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga.data()[i] += g.data()[i];
        gb.data()[i] += g.data()[i];
      }
      break;
    }
    case Op::AddRow: {
      Matrix& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) {
          ga.at(r, c) += g.at(r, c);
          gb.at(0, c) += g.at(r, c);
        }
      break;
    }
    case Op::Scale:
      for (std::size_t i = 0; i < g.size(); ++i)
        ga.data()[i] += n.scalar * g.data()[i];
      break;
    case Op::AddConst:
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i];
      break;
    case Op::Relu: {
      const Matrix& a = nodes_[static_cast<std::size_t>(n.a)].value;
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.data()[i] > 0.0) ga.data()[i] += g.data()[i];
      break;
    }
    case Op::RowSoftmax: {
      const Matrix& y = n.value;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c)
          ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
      }
      break;
    }
    case Op::LayerNorm: {
      const Matrix& a = nodes_[static_cast<std::size_t>(n.a)].value;
      const Matrix& y = n.value;
      const double dim = static_cast<double>(a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) mean += a.at(r, c);
        mean /= dim;
        for (std::size_t c = 0; c < a.cols(); ++c)
          var += (a.at(r, c) - mean) * (a.at(r, c) - mean);
        var /= dim;
        const double inv = 1.0 / std::sqrt(var + n.scalar);
        double gmean = 0.0, gydot = 0.0;
        for (std::size_t c = 0; c < a.cols(); ++c) {
          gmean += g.at(r, c);
          gydot += g.at(r, c) * y.at(r, c);
        }
        gmean /= dim;
        gydot /= dim;
        for (std::size_t c = 0; c < a.cols(); ++c)
          ga.at(r, c) += inv * (g.at(r, c) - gmean - y.at(r, c) * gydot);
      }
      break;
    }
    case Op::Transpose:
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) ga.at(c, r) += g.at(r, c);
      break;
    case Op::ConcatCols: {
      std::size_t c0 = 0;
      for (int in : n.inputs) {
        Node& src = nodes_[static_cast<std::size_t>(in)];
        for (std::size_t r = 0; r < src.value.rows(); ++r)
          for (std::size_t c = 0; c < src.value.cols(); ++c)
            src.grad.at(r, c) += g.at(r, c0 + c);
        c0 += src.value.cols();
      }
      break;
    }
    case Op::ConcatRows: {
      std::size_t r0 = 0;
      for (int in : n.inputs) {
        Node& src = nodes_[static_cast<std::size_t>(in)];
        for (std::size_t r = 0; r < src.value.rows(); ++r)
          for (std::size_t c = 0; c < src.value.cols(); ++c)
            src.grad.at(r, c) += g.at(r0 + r, c);
        r0 += src.value.rows();
      }
      break;
    }
    case Op::SliceCols: {
      const std::size_t begin = static_cast<std::size_t>(n.idx[0]);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
          ga.at(r, begin + c) += g.at(r, c);
      break;
    }
    case Op::GatherRows:
      for (std::size_t r = 0; r < n.idx.size(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c)
          ga.at(static_cast<std::size_t>(n.idx[r]), c) += g.at(r, c);
      break;
    case Op::SegmentMean:
      for (std::size_t k = 0; k < n.spans.size(); ++k) {
        const auto [b, e] = n.spans[k];
        const double inv = 1.0 / static_cast<double>(e - b);
        for (int r = b; r < e; ++r)
          for (std::size_t c = 0; c < g.cols(); ++c)
            ga.at(static_cast<std::size_t>(r), c) += g.at(k, c) * inv;
      }
      break;
    case Op::ExpandRows:
      for (std::size_t r = 0; r < n.idx.size(); ++r) {
        if (n.idx[r] < 0) continue;
        for (std::size_t c = 0; c < g.cols(); ++c)
          ga.at(static_cast<std::size_t>(n.idx[r]), c) += g.at(r, c);
      }
      break;
    case Op::CrossEntropy: {
      const Matrix& logits = nodes_[static_cast<std::size_t>(n.a)].value;
      const double gs = g.at(0, 0) * n.scalar;
      for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* l = logits.row(r);
        double mx = l[0];
        for (std::size_t c = 1; c < logits.cols(); ++c) mx = std::max(mx, l[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(l[c] - mx);
        for (std::size_t c = 0; c < logits.cols(); ++c) {
          const double p = std::exp(l[c] - mx) / z;
          const double onehot = static_cast<int>(c) == n.idx[r] ? 1.0 : 0.0;
          ga.at(r, c) += gs * (p - onehot);
        }
      }
      break;
    }
  }
}

}  // namespace graphix
