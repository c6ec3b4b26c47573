#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "graphix/tensor.hpp"

namespace graphix {

// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class LossReduction { Mean, Sum };

// Reverse-mode tape over Matrix values. Values are computed eagerly; each
// op carries its own backward rule, applied in reverse creation order by
// backward(). Composite blocks (attention, FFN, RGAT, ...) are chains of
// these ops, so their gradients come out of the same sweep.
class Tape {
 public:
  Var leaf(Matrix value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  // a: n x d, bias: 1 x d broadcast over rows.
  Var add_row(Var a, Var bias);
  Var scale(Var a, double s);
  // Adds a constant matrix (e.g. an attention mask); no gradient flows to it.
  Var add_const(Var a, Matrix c);
  Var relu(Var a);
  Var row_softmax(Var a);
  Var layer_norm(Var a, double eps);
  Var transpose(Var a);
  Var concat_cols(const std::vector<Var>& xs);
  Var concat_rows(const std::vector<Var>& xs);
  Var slice_cols(Var a, std::size_t begin, std::size_t end);
  // out[r] = a[idx[r]]; duplicate indices accumulate on backward.
  Var gather_rows(Var a, std::vector<int> idx);
  // out[k] = mean of rows a[spans[k].first, spans[k].second).
  Var segment_mean(Var a, std::vector<std::pair<int, int>> spans);
  // out has row_of_out.size() rows; out[r] = a[row_of_out[r]], or zeros when -1.
  Var expand_rows(Var a, std::vector<int> row_of_out);
  // logits: n x v, one target id per row; returns 1x1 loss.
  Var cross_entropy(Var logits, std::vector<int> targets, LossReduction red);

  const Matrix& value(Var v) const;
  const Matrix& grad(Var v) const;

  // Seeds d(root)/d(root) = 1 and sweeps the whole tape. root must be 1x1.
  void backward(Var root);
  void clear();
  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf, MatMul, Add, AddRow, Scale, AddConst, Relu, RowSoftmax, LayerNorm,
    Transpose, ConcatCols, ConcatRows, SliceCols, GatherRows, SegmentMean,
    ExpandRows, CrossEntropy,
  };
  struct Node {
    Op op;
    Matrix value;
    Matrix grad;
    int a = -1;
    int b = -1;
    double scalar = 0.0;
    std::vector<int> inputs;
    std::vector<int> idx;
    std::vector<std::pair<int, int>> spans;
  };

  Var push(Node n);
  const Node& node(Var v) const;
  void backward_node(Node& n);

  std::vector<Node> nodes_;
};

}  // namespace graphix
