#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ldcq::nn {

using Mat = Eigen::MatrixXd;

struct TrainingDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Graph;

// Lightweight handle into a Graph's tape.
class Var {
 public:
  Var() = default;
  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Graph* graph() const { return g_; }
  int id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, int id) : g_(g), id_(id) {}
  Graph* g_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over dense double matrices. Nodes are appended in
// evaluation order, so the creation order is already a topological order and
// backward() is a single reverse sweep. Column convention: a batch is a
// matrix whose columns are the examples.
class Graph {
 public:
  Var input(Mat value);

  // Runs the reverse sweep from `loss` (must be 1x1). Gradients of all nodes
  // created up to the loss are available afterwards; parameters that do not
  // reach the loss end up with zero gradient. Throws TrainingDivergence if
  // the loss value is not finite.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // --- used by op implementations ---
  using BackFn = std::function<void(Graph&, int self)>;
  Var make(Mat value, BackFn back);
  const Mat& val(int id) const { return nodes_[id].value; }
  Mat& grad_ref(int id) { return nodes_[id].grad; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    BackFn back;
  };
  std::vector<Node> nodes_;
};

// Elementwise / structural ops. All inputs must live on the same graph.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var cdiv(Var a, Var b);
Var matmul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var square(Var a);
Var sqrt_(Var a);
Var exp_(Var a);
Var log_(Var a);
Var relu(Var a);
Var gelu(Var a);
Var softplus(Var a);
Var tanh_(Var a);
Var sigmoid(Var a);
Var sum_all(Var a);           // -> 1x1
Var mean_all(Var a);          // -> 1x1
Var concat_rows(const std::vector<Var>& parts);
Var rows(Var a, int start, int count);
// x: RxC, b: Rx1 added to every column
Var add_col_broadcast(Var x, Var b);
// x: RxC, s: Rx1 multiplied into every column
Var mul_col_broadcast(Var x, Var s);
// x: RxC, r: 1xC multiplied into every row
Var mul_row_broadcast(Var x, Var r);
// column-wise sum -> 1xC
Var sum_rows(Var a);

}  // namespace ldcq::nn
