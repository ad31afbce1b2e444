#include "ldcq/autodiff.hpp"

#include <cmath>

namespace ldcq::nn {

namespace {

void check_same_graph(Var a, Var b) {
  if (a.graph() != b.graph())
    throw std::invalid_argument("autodiff: operands from different graphs");
}

void check_same_shape(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("autodiff: shape mismatch");
}

}  // namespace

const Mat& Var::value() const { return g_->val(id_); }
const Mat& Var::grad() const { return const_cast<Graph*>(g_)->grad_ref(id_); }

Var Graph::input(Mat value) { return make(std::move(value), nullptr); }

Var Graph::make(Mat value, BackFn back) {
  nodes_.push_back(Node{std::move(value), Mat(), std::move(back)});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::backward(Var loss) {
  if (loss.graph() != this) throw std::invalid_argument("backward: foreign var");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be a scalar");
  const double lv = loss.value()(0, 0);
  if (!std::isfinite(lv))
    throw TrainingDivergence("non-finite loss in backward pass");
  const int top = loss.id();
  for (int i = 0; i <= top; ++i)
    nodes_[i].grad = Mat::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
  nodes_[top].grad(0, 0) = 1.0;
  for (int i = top; i >= 0; --i)
    if (nodes_[i].back) nodes_[i].back(*this, i);
}

Var add(Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b);
  Graph& g = *a.graph();
  return g.make(a.value() + b.value(), [ia = a.id(), ib = b.id()](Graph& g, int self) {
    g.grad_ref(ia) += g.grad_ref(self);
    g.grad_ref(ib) += g.grad_ref(self);
  });
}

Var sub(Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b);
  Graph& g = *a.graph();
  return g.make(a.value() - b.value(), [ia = a.id(), ib = b.id()](Graph& g, int self) {
    g.grad_ref(ia) += g.grad_ref(self);
    g.grad_ref(ib) -= g.grad_ref(self);
  });
}

Var mul(Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b);
  Graph& g = *a.graph();
  return g.make(a.value().cwiseProduct(b.value()),
                [ia = a.id(), ib = b.id()](Graph& g, int self) {
                  g.grad_ref(ia) += g.grad_ref(self).cwiseProduct(g.val(ib));
                  g.grad_ref(ib) += g.grad_ref(self).cwiseProduct(g.val(ia));
                });
}

Var cdiv(Var a, Var b) {
  check_same_graph(a, b);
  check_same_shape(a, b);
  Graph& g = *a.graph();
  return g.make(a.value().cwiseQuotient(b.value()),
                [ia = a.id(), ib = b.id()](Graph& g, int self) {
                  const Mat& d = g.grad_ref(self);
                  const Mat& bv = g.val(ib);
                  g.grad_ref(ia) += d.cwiseQuotient(bv);
                  g.grad_ref(ib) -=
                      d.cwiseProduct(g.val(ia)).cwiseQuotient(bv.cwiseProduct(bv));
                });
}

Var matmul(Var a, Var b) {
  check_same_graph(a, b);
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimension mismatch");
  Graph& g = *a.graph();
  return g.make(a.value() * b.value(), [ia = a.id(), ib = b.id()](Graph& g, int self) {
    const Mat& d = g.grad_ref(self);
    g.grad_ref(ia).noalias() += d * g.val(ib).transpose();
    g.grad_ref(ib).noalias() += g.val(ia).transpose() * d;
  });
}

Var scale(Var a, double c) {
  Graph& g = *a.graph();
  return g.make(a.value() * c, [ia = a.id(), c](Graph& g, int self) {
    g.grad_ref(ia) += g.grad_ref(self) * c;
  });
}

Var add_scalar(Var a, double c) {
  Graph& g = *a.graph();
  return g.make(a.value().array() + c, [ia = a.id()](Graph& g, int self) {
    g.grad_ref(ia) += g.grad_ref(self);
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var square(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().cwiseProduct(a.value()), [ia = a.id()](Graph& g, int self) {
    g.grad_ref(ia) += 2.0 * g.grad_ref(self).cwiseProduct(g.val(ia));
  });
}

Var sqrt_(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().cwiseSqrt(), [ia = a.id()](Graph& g, int self) {
    g.grad_ref(ia) +=
        0.5 * g.grad_ref(self).cwiseQuotient(g.val(self));
  });
}

Var exp_(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().array().exp(), [ia = a.id()](Graph& g, int self) {
    g.grad_ref(ia) += g.grad_ref(self).cwiseProduct(g.val(self));
  });
}

Var log_(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().array().log(), [ia = a.id()](Graph& g, int self) {
    g.grad_ref(ia) += g.grad_ref(self).cwiseQuotient(g.val(ia));
  });
}

Var relu(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().cwiseMax(0.0), [ia = a.id()](Graph& g, int self) {
    g.grad_ref(ia) +=
        g.grad_ref(self).cwiseProduct((g.val(ia).array() > 0.0).cast<double>().matrix());
  });
}

Var gelu(Var a) {
  // exact form x * Phi(x)
  Graph& g = *a.graph();
  auto phi_cdf = [](double x) { return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)); };
  Mat out = a.value().unaryExpr([&](double x) { return x * phi_cdf(x); });
  return g.make(std::move(out), [ia = a.id(), phi_cdf](Graph& g, int self) {
    const Mat& x = g.val(ia);
    Mat dydx = x.unaryExpr([&](double v) {
      const double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
      return phi_cdf(v) + v * pdf;
    });
    g.grad_ref(ia) += g.grad_ref(self).cwiseProduct(dydx);
  });
}

Var softplus(Var a) {
  Graph& g = *a.graph();
  // stable log(1 + e^x)
  Mat out = a.value().unaryExpr(
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
  return g.make(std::move(out), [ia = a.id()](Graph& g, int self) {
    Mat s = g.val(ia).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    g.grad_ref(ia) += g.grad_ref(self).cwiseProduct(s);
  });
}

Var tanh_(Var a) {
  Graph& g = *a.graph();
  return g.make(a.value().array().tanh(), [ia = a.id()](Graph& g, int self) {
    const Mat& y = g.val(self);
    g.grad_ref(ia) += g.grad_ref(self).cwiseProduct(
        (1.0 - y.array().square()).matrix());
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph();
  Mat out = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return g.make(std::move(out), [ia = a.id()](Graph& g, int self) {
    const Mat& y = g.val(self);
    g.grad_ref(ia) += g.grad_ref(self).cwiseProduct(
        y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var sum_all(Var a) {
  Graph& g = *a.graph();
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return g.make(std::move(out), [ia = a.id()](Graph& g, int self) {
    g.grad_ref(ia).array() += g.grad_ref(self)(0, 0);
  });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.rows() * a.cols());
  return scale(sum_all(a), 1.0 / n);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  Graph& g = *parts[0].graph();
  Eigen::Index total = 0;
  const Eigen::Index cols = parts[0].cols();
  for (Var p : parts) {
    check_same_graph(parts[0], p);
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    total += p.rows();
  }
  Mat out(total, cols);
  Eigen::Index at = 0;
  std::vector<std::pair<int, std::pair<Eigen::Index, Eigen::Index>>> spans;
  for (Var p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.push_back({p.id(), {at, p.rows()}});
    at += p.rows();
  }
  return g.make(std::move(out), [spans](Graph& g, int self) {
    const Mat& d = g.grad_ref(self);
    for (const auto& [id, span] : spans)
      g.grad_ref(id) += d.middleRows(span.first, span.second);
  });
}

Var rows(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw std::invalid_argument("rows: slice out of range");
  Graph& g = *a.graph();
  return g.make(a.value().middleRows(start, count),
                [ia = a.id(), start, count](Graph& g, int self) {
                  g.grad_ref(ia).middleRows(start, count) += g.grad_ref(self);
                });
}

Var add_col_broadcast(Var x, Var b) {
  check_same_graph(x, b);
  if (b.cols() != 1 || b.rows() != x.rows())
    throw std::invalid_argument("add_col_broadcast: bias must be Rx1");
  Graph& g = *x.graph();
  Mat out = x.value();
  out.colwise() += b.value().col(0);
  return g.make(std::move(out), [ix = x.id(), ib = b.id()](Graph& g, int self) {
    const Mat& d = g.grad_ref(self);
    g.grad_ref(ix) += d;
    g.grad_ref(ib) += d.rowwise().sum();
  });
}

Var mul_col_broadcast(Var x, Var s) {
  check_same_graph(x, s);
  if (s.cols() != 1 || s.rows() != x.rows())
    throw std::invalid_argument("mul_col_broadcast: scale must be Rx1");
  Graph& g = *x.graph();
  Mat out = x.value().array().colwise() * s.value().col(0).array();
  return g.make(std::move(out), [ix = x.id(), is = s.id()](Graph& g, int self) {
    const Mat& d = g.grad_ref(self);
    g.grad_ref(ix) += (d.array().colwise() * g.val(is).col(0).array()).matrix();
    g.grad_ref(is) += d.cwiseProduct(g.val(ix)).rowwise().sum();
  });
}

Var mul_row_broadcast(Var x, Var r) {
  check_same_graph(x, r);
  if (r.rows() != 1 || r.cols() != x.cols())
    throw std::invalid_argument("mul_row_broadcast: scale must be 1xC");
  Graph& g = *x.graph();
  Mat out = x.value().array().rowwise() * r.value().row(0).array();
  return g.make(std::move(out), [ix = x.id(), ir = r.id()](Graph& g, int self) {
    const Mat& d = g.grad_ref(self);
    g.grad_ref(ix) += (d.array().rowwise() * g.val(ir).row(0).array()).matrix();
    g.grad_ref(ir) += d.cwiseProduct(g.val(ix)).colwise().sum();
  });
}

Var sum_rows(Var a) {
  Graph& g = *a.graph();
  Mat out = a.value().colwise().sum();
  return g.make(std::move(out), [ia = a.id()](Graph& g, int self) {
    const Mat& d = g.grad_ref(self);  // 1xC
    g.grad_ref(ia) += d.replicate(g.val(ia).rows(), 1);
  });
}

}  // namespace ldcq::nn
