#pragma once

#include <functional>
#include <map>
#include <vector>

#include "spillcast/tensor.hpp"

namespace spillcast::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

// Records a forward computation over dense matrices and replays it backwards
// for gradients. One tape per forward pass (or per batch); parameters are
// bound once per tape and their gradients accumulate into the owning Tensor
// on each backward() call.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant_scalar(double v);
  Var constant_column(const std::vector<double>& v);

  // Leaf bound to a parameter; memoized, so repeated calls with the same
  // tensor return the same node.
  Var param(Tensor& t);

  // Reverse sweep from a 1x1 loss node. Node gradients are reset at the
  // start of each call; parameter gradients accumulate across calls until
  // ParameterSet::zero_grad().
  void backward(Var loss);

  const Matrix& value(Var v) const;
  double scalar(Var v) const;
  // Gradient of the last backward() target with respect to node v; zero if
  // the node did not participate.
  const Matrix& grad(Var v);

  std::size_t size() const { return nodes_.size(); }

  // Accumulation slot for a node's gradient; used by primitive backward
  // closures.
  Matrix& grad_acc(int id);

 private:
  friend Var make_node(Tape& t, Matrix value, std::vector<int> parents,
                       std::function<void(Tape&, int)> back);

  struct Node {
    Matrix value;
    Matrix grad;
    bool grad_set = false;
    std::vector<int> parents;
    std::function<void(Tape&, int)> back;
    Tensor* bound = nullptr;
  };

  void check(Var v) const;

  std::vector<Node> nodes_;
  std::map<Tensor*, int> param_nodes_;
};

// Primitives. All raise ShapeError on mismatched operands, naming the
// operation and the shapes involved.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scalar_mul(Var a, double c);
Var scalar_add(Var a, double c);
Var concat_cols(Var a, Var b);
Var leaky_relu(Var a, double slope = 0.2);
Var sigmoid(Var a);
Var exp_elem(Var a);
Var log_elem(Var a);   // rejects non-positive inputs
Var sqrt_elem(Var a);  // rejects negative inputs
Var clip(Var a, double lo, double hi);
Var reduce_sum(Var a);  // -> 1x1

// x + s broadcast over every element; s is 1x1.
Var bcast_add(Var x, Var s);

// Row r of the result is x.row(rows[r]).
Var gather_rows(Var x, std::vector<int> rows);

// Per-segment mean / sum of rows; segments without members yield zero rows.
Var segment_mean(Var x, std::vector<int> segments, int num_segments);
Var segment_sum(Var x, std::vector<int> segments, int num_segments);

// Softmax over each destination node's incoming edge scores: entries with
// equal dst[e] normalize together. scores is E x 1.
Var neighbor_softmax(Var scores, std::vector<int> dst, int num_nodes);

// Scales row r of x by s(r, 0); s is R x 1.
Var rowwise_scale(Var x, Var s);

// Repeats a 1 x C row n times.
Var tile_rows(Var row, int n);

}  // namespace spillcast::ad
