#include "spillcast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spillcast/errors.hpp"

namespace spillcast::ad {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_tape(const char* op, Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw ShapeError(std::string(op) + ": operands from different tapes");
  }
}

}  // namespace

Var make_node(Tape& t, Matrix value, std::vector<int> parents,
              std::function<void(Tape&, int)> back);

Var Tape::constant(Matrix value) {
  return make_node(*this, std::move(value), {}, nullptr);
}

Var Tape::constant_scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::constant_column(const std::vector<double>& v) {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return constant(std::move(m));
}

Var Tape::param(Tensor& t) {
  auto it = param_nodes_.find(&t);
  if (it != param_nodes_.end()) return Var{this, it->second};
  Var v = make_node(*this, t.value, {}, nullptr);
  nodes_[v.id].bound = &t;
  param_nodes_.emplace(&t, v.id);
  return v;
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw ShapeError("variable does not belong to this tape");
  }
}

const Matrix& Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1) {
    throw ShapeError("scalar: node has shape " + shape_of(m));
  }
  return m(0, 0);
}

const Matrix& Tape::grad(Var v) {
  check(v);
  return grad_acc(v.id);
}

Matrix& Tape::grad_acc(int id) {
  Node& n = nodes_[id];
  if (!n.grad_set) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad_set = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  check(loss);
  const Node& top = nodes_[loss.id];
  if (top.value.rows() != 1 || top.value.cols() != 1) {
    throw ShapeError("backward: loss has shape " + shape_of(top.value) + ", expected 1x1");
  }
  for (Node& n : nodes_) {
    n.grad_set = false;
  }
  grad_acc(loss.id)(0, 0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.grad_set || !n.back) continue;
    n.back(*this, id);
  }
  for (auto& [tensor, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (n.grad_set) tensor->grad += n.grad;
  }
}

Var make_node(Tape& t, Matrix value, std::vector<int> parents,
              std::function<void(Tape&, int)> back) {
  Tape::Node node;
  node.value = std::move(value);
  node.parents = std::move(parents);
  node.back = std::move(back);
  t.nodes_.push_back(std::move(node));
  return Var{&t, static_cast<int>(t.nodes_.size() - 1)};
}

namespace {

// Each closure pulls its own output gradient and pushes into parents;
// parent ids are captured by value.
const Matrix& val(Var v) {
  if (v.tape == nullptr) throw ShapeError("operation on a detached variable");
  return v.tape->value(v);
}

}  // namespace

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: " + shape_of(A) + " * " + shape_of(B));
  }
  int pa = a.id, pb = b.id;
  return make_node(*a.tape, A * B, {pa, pb}, [pa, pb](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    const Matrix& A2 = t.value(Var{&t, pa});
    const Matrix& B2 = t.value(Var{&t, pb});
    t.grad_acc(pa) += g * B2.transpose();
    t.grad_acc(pb) += A2.transpose() * g;
  });
}

Var add(Var a, Var b) {
  require_same_tape("add", a, b);
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw ShapeError("add: " + shape_of(A) + " + " + shape_of(B));
  }
  int pa = a.id, pb = b.id;
  return make_node(*a.tape, A + B, {pa, pb}, [pa, pb](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(pa) += g;
    t.grad_acc(pb) += g;
  });
}

Var sub(Var a, Var b) {
  require_same_tape("sub", a, b);
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw ShapeError("sub: " + shape_of(A) + " - " + shape_of(B));
  }
  int pa = a.id, pb = b.id;
  return make_node(*a.tape, A - B, {pa, pb}, [pa, pb](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(pa) += g;
    t.grad_acc(pb) -= g;
  });
}

Var hadamard(Var a, Var b) {
  require_same_tape("hadamard", a, b);
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) {
    throw ShapeError("hadamard: " + shape_of(A) + " * " + shape_of(B));
  }
  int pa = a.id, pb = b.id;
  return make_node(*a.tape, A.cwiseProduct(B), {pa, pb}, [pa, pb](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(pa) += g.cwiseProduct(t.value(Var{&t, pb}));
    t.grad_acc(pb) += g.cwiseProduct(t.value(Var{&t, pa}));
  });
}

Var scalar_mul(Var a, double c) {
  int pa = a.id;
  return make_node(*a.tape, val(a) * c, {pa}, [pa, c](Tape& t, int self) {
    t.grad_acc(pa) += t.grad(Var{&t, self}) * c;
  });
}

Var scalar_add(Var a, double c) {
  int pa = a.id;
  return make_node(*a.tape, val(a).array() + c, {pa}, [pa](Tape& t, int self) {
    t.grad_acc(pa) += t.grad(Var{&t, self});
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape("concat_cols", a, b);
  const Matrix& A = val(a);
  const Matrix& B = val(b);
  if (A.rows() != B.rows()) {
    throw ShapeError("concat_cols: " + shape_of(A) + " | " + shape_of(B));
  }
  Matrix out(A.rows(), A.cols() + B.cols());
  out.leftCols(A.cols()) = A;
  out.rightCols(B.cols()) = B;
  int pa = a.id, pb = b.id;
  Eigen::Index ca = A.cols(), cb = B.cols();
  return make_node(*a.tape, std::move(out), {pa, pb}, [pa, pb, ca, cb](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(pa) += g.leftCols(ca);
    t.grad_acc(pb) += g.rightCols(cb);
  });
}

Var leaky_relu(Var a, double slope) {
  const Matrix& A = val(a);
  Matrix out = A.unaryExpr([slope](double x) { return x >= 0.0 ? x : slope * x; });
  int pa = a.id;
  return make_node(*a.tape, std::move(out), {pa}, [pa, slope](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    const Matrix& A2 = t.value(Var{&t, pa});
    t.grad_acc(pa) +=
        g.cwiseProduct(A2.unaryExpr([slope](double x) { return x >= 0.0 ? 1.0 : slope; }));
  });
}

Var sigmoid(Var a) {
  const Matrix& A = val(a);
  Matrix out = A.unaryExpr([](double x) {
    if (x >= 0.0) {
      double e = std::exp(-x);
      return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
  });
  int pa = a.id;
  return make_node(*a.tape, std::move(out), {pa}, [pa](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    const Matrix& y = t.value(Var{&t, self});
    t.grad_acc(pa) += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var exp_elem(Var a) {
  int pa = a.id;
  return make_node(*a.tape, val(a).array().exp(), {pa}, [pa](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(pa) += g.cwiseProduct(t.value(Var{&t, self}));
  });
}

Var log_elem(Var a) {
  const Matrix& A = val(a);
  if ((A.array() <= 0.0).any()) {
    throw NumericError("log: non-positive input");
  }
  int pa = a.id;
  return make_node(*a.tape, A.array().log(), {pa}, [pa](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(pa) += g.cwiseQuotient(t.value(Var{&t, pa}));
  });
}

Var sqrt_elem(Var a) {
  const Matrix& A = val(a);
  if ((A.array() < 0.0).any()) {
    throw NumericError("sqrt: negative input");
  }
  int pa = a.id;
  return make_node(*a.tape, A.array().sqrt(), {pa}, [pa](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    const Matrix& y = t.value(Var{&t, self});
    Matrix dx = Matrix::Zero(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      for (Eigen::Index c = 0; c < y.cols(); ++c) {
        if (y(r, c) > 0.0) dx(r, c) = 0.5 / y(r, c) * g(r, c);
      }
    }
    t.grad_acc(pa) += dx;
  });
}

Var clip(Var a, double lo, double hi) {
  if (lo > hi) throw ConfigError("clip: lo > hi");
  const Matrix& A = val(a);
  Matrix out = A.unaryExpr([lo, hi](double x) { return std::min(std::max(x, lo), hi); });
  int pa = a.id;
  return make_node(*a.tape, std::move(out), {pa}, [pa, lo, hi](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    const Matrix& A2 = t.value(Var{&t, pa});
    Matrix dx = Matrix::Zero(A2.rows(), A2.cols());
    for (Eigen::Index r = 0; r < A2.rows(); ++r) {
      for (Eigen::Index c = 0; c < A2.cols(); ++c) {
        double x = A2(r, c);
        if (x >= lo && x <= hi) dx(r, c) = g(r, c);
      }
    }
    t.grad_acc(pa) += dx;
  });
}

Var reduce_sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = val(a).sum();
  int pa = a.id;
  return make_node(*a.tape, std::move(out), {pa}, [pa](Tape& t, int self) {
    double g = t.grad(Var{&t, self})(0, 0);
    t.grad_acc(pa).array() += g;
  });
}

Var bcast_add(Var x, Var s) {
  require_same_tape("bcast_add", x, s);
  const Matrix& X = val(x);
  const Matrix& S = val(s);
  if (S.rows() != 1 || S.cols() != 1) {
    throw ShapeError("bcast_add: broadcast operand has shape " + shape_of(S));
  }
  int px = x.id, ps = s.id;
  return make_node(*x.tape, X.array() + S(0, 0), {px, ps}, [px, ps](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(px) += g;
    t.grad_acc(ps)(0, 0) += g.sum();
  });
}

Var gather_rows(Var x, std::vector<int> rows) {
  const Matrix& X = val(x);
  Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= X.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(rows[i]) + " out of " +
                       std::to_string(X.rows()) + " rows");
    }
    out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
  }
  int px = x.id;
  return make_node(*x.tape, std::move(out), {px},
                   [px, rows = std::move(rows)](Tape& t, int self) {
                     const Matrix g = t.grad(Var{&t, self});
                     Matrix& gx = t.grad_acc(px);
                     for (std::size_t i = 0; i < rows.size(); ++i) {
                       gx.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
                     }
                   });
}

namespace {

Var segment_reduce(Var x, std::vector<int> segments, int num_segments, bool mean) {
  const Matrix& X = val(x);
  if (static_cast<Eigen::Index>(segments.size()) != X.rows()) {
    throw ShapeError("segment reduce: " + std::to_string(segments.size()) +
                     " segment ids for " + shape_of(X));
  }
  std::vector<double> count(static_cast<std::size_t>(num_segments), 0.0);
  for (int s : segments) {
    if (s < 0 || s >= num_segments) {
      throw ShapeError("segment reduce: segment id " + std::to_string(s) + " out of " +
                       std::to_string(num_segments));
    }
    count[static_cast<std::size_t>(s)] += 1.0;
  }
  Matrix out = Matrix::Zero(num_segments, X.cols());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    out.row(segments[static_cast<std::size_t>(r)]) += X.row(r);
  }
  if (mean) {
    for (int s = 0; s < num_segments; ++s) {
      if (count[static_cast<std::size_t>(s)] > 0.0) {
        out.row(s) /= count[static_cast<std::size_t>(s)];
      }
    }
  }
  int px = x.id;
  return make_node(*x.tape, std::move(out), {px},
                   [px, segments = std::move(segments), count = std::move(count),
                    mean](Tape& t, int self) {
                     const Matrix g = t.grad(Var{&t, self});
                     Matrix& gx = t.grad_acc(px);
                     for (Eigen::Index r = 0; r < gx.rows(); ++r) {
                       int s = segments[static_cast<std::size_t>(r)];
                       double w = mean ? 1.0 / count[static_cast<std::size_t>(s)] : 1.0;
                       gx.row(r) += g.row(s) * w;
                     }
                   });
}

}  // namespace

Var segment_mean(Var x, std::vector<int> segments, int num_segments) {
  return segment_reduce(x, std::move(segments), num_segments, true);
}

Var segment_sum(Var x, std::vector<int> segments, int num_segments) {
  return segment_reduce(x, std::move(segments), num_segments, false);
}

Var neighbor_softmax(Var scores, std::vector<int> dst, int num_nodes) {
  const Matrix& S = val(scores);
  if (S.cols() != 1) {
    throw ShapeError("neighbor_softmax: scores have shape " + shape_of(S));
  }
  if (static_cast<Eigen::Index>(dst.size()) != S.rows()) {
    throw ShapeError("neighbor_softmax: " + std::to_string(dst.size()) + " edges for " +
                     shape_of(S));
  }
  std::vector<double> group_max(static_cast<std::size_t>(num_nodes),
                                -std::numeric_limits<double>::infinity());
  for (Eigen::Index e = 0; e < S.rows(); ++e) {
    int d = dst[static_cast<std::size_t>(e)];
    if (d < 0 || d >= num_nodes) {
      throw ShapeError("neighbor_softmax: destination " + std::to_string(d) + " out of " +
                       std::to_string(num_nodes) + " nodes");
    }
    group_max[static_cast<std::size_t>(d)] =
        std::max(group_max[static_cast<std::size_t>(d)], S(e, 0));
  }
  std::vector<double> denom(static_cast<std::size_t>(num_nodes), 0.0);
  Matrix out(S.rows(), 1);
  for (Eigen::Index e = 0; e < S.rows(); ++e) {
    int d = dst[static_cast<std::size_t>(e)];
    out(e, 0) = std::exp(S(e, 0) - group_max[static_cast<std::size_t>(d)]);
    denom[static_cast<std::size_t>(d)] += out(e, 0);
  }
  for (Eigen::Index e = 0; e < S.rows(); ++e) {
    out(e, 0) /= denom[static_cast<std::size_t>(dst[static_cast<std::size_t>(e)])];
  }
  int ps = scores.id;
  return make_node(*scores.tape, std::move(out), {ps},
                   [ps, dst = std::move(dst), num_nodes](Tape& t, int self) {
                     const Matrix g = t.grad(Var{&t, self});
                     const Matrix& y = t.value(Var{&t, self});
                     std::vector<double> dot(static_cast<std::size_t>(num_nodes), 0.0);
                     for (Eigen::Index e = 0; e < y.rows(); ++e) {
                       dot[static_cast<std::size_t>(dst[static_cast<std::size_t>(e)])] +=
                           g(e, 0) * y(e, 0);
                     }
                     Matrix& gx = t.grad_acc(ps);
                     for (Eigen::Index e = 0; e < y.rows(); ++e) {
                       double d = dot[static_cast<std::size_t>(dst[static_cast<std::size_t>(e)])];
                       gx(e, 0) += y(e, 0) * (g(e, 0) - d);
                     }
                   });
}

Var rowwise_scale(Var x, Var s) {
  require_same_tape("rowwise_scale", x, s);
  const Matrix& X = val(x);
  const Matrix& S = val(s);
  if (S.cols() != 1 || S.rows() != X.rows()) {
    throw ShapeError("rowwise_scale: " + shape_of(X) + " by " + shape_of(S));
  }
  int px = x.id, ps = s.id;
  return make_node(*x.tape, S.col(0).asDiagonal() * X, {px, ps}, [px, ps](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    const Matrix& X2 = t.value(Var{&t, px});
    const Matrix& S2 = t.value(Var{&t, ps});
    t.grad_acc(px) += S2.col(0).asDiagonal() * g;
    t.grad_acc(ps) += g.cwiseProduct(X2).rowwise().sum();
  });
}

Var tile_rows(Var row, int n) {
  const Matrix& R = val(row);
  if (R.rows() != 1) {
    throw ShapeError("tile_rows: expected a single row, got " + shape_of(R));
  }
  if (n <= 0) throw ShapeError("tile_rows: non-positive count");
  Matrix out = R.replicate(n, 1);
  int pr = row.id;
  return make_node(*row.tape, std::move(out), {pr}, [pr](Tape& t, int self) {
    const Matrix g = t.grad(Var{&t, self});
    t.grad_acc(pr) += g.colwise().sum();
  });
}

}  // namespace spillcast::ad
