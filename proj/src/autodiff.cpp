#include "pathise/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace pathise::ad {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string("autodiff shape error: ") + what);
}

Tape& tape_of(Var a) { return *a.tape(); }

}  // namespace

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) { return record(std::move(value), nullptr); }

Var Tape::parameter(const Matrix& value, Matrix* grad_sink) {
  Var v = record(value, nullptr);
  nodes_.back().sink = grad_sink;
  return v;
}

Var Tape::record(Matrix value, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var loss) {
  require(loss.tape() == this && loss.rows() == 1 && loss.cols() == 1, "backward needs a 1x1 loss on this tape");
  grad(loss.id()).setConstant(1.0);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.sink) *n.sink += n.grad;
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul");
  int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() * b.value(), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(ia).noalias() += g * t.value(ib).transpose();
    t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var linear(Var x, Var w, Var b) {
  require(x.cols() == w.cols() && b.rows() == 1 && b.cols() == w.rows(), "linear");
  int ix = x.id(), iw = w.id(), ib = b.id();
  Matrix y = x.value() * w.value().transpose();
  y.rowwise() += b.value().row(0);
  return tape_of(x).record(std::move(y), [ix, iw, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(ix).noalias() += g * t.value(iw);
    t.grad(iw).noalias() += g.transpose() * t.value(ix);
    t.grad(ib) += g.colwise().sum();
  });
}

Var linear(Var x, Var w) {
  require(x.cols() == w.cols(), "linear");
  int ix = x.id(), iw = w.id();
  return tape_of(x).record(x.value() * w.value().transpose(), [ix, iw](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(ix).noalias() += g * t.value(iw);
    t.grad(iw).noalias() += g.transpose() * t.value(ix);
  });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add");
  int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() + b.value(), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(ia) += g;
    t.grad(ib) += g;
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub");
  int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() - b.value(), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(ia) += g;
    t.grad(ib) -= g;
  });
}

Var add_row(Var x, Var r) {
  require(r.rows() == 1 && r.cols() == x.cols(), "add_row");
  int ix = x.id(), ir = r.id();
  Matrix y = x.value();
  y.rowwise() += r.value().row(0);
  return tape_of(x).record(std::move(y), [ix, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(ix) += g;
    t.grad(ir) += g.colwise().sum();
  });
}

Var scale(Var a, double s) {
  int ia = a.id();
  return tape_of(a).record(a.value() * s, [ia, s](Tape& t, int self) { t.grad(ia) += s * t.grad(self); });
}

Var hadamard(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard");
  int ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value().cwiseProduct(b.value()), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.grad(ia) += g.cwiseProduct(t.value(ib));
    t.grad(ib) += g.cwiseProduct(t.value(ia));
  });
}

Var transpose(Var a) {
  int ia = a.id();
  return tape_of(a).record(a.value().transpose(),
                           [ia](Tape& t, int self) { t.grad(ia) += t.grad(self).transpose(); });
}

Var tanh(Var a) {
  int ia = a.id();
  Matrix y = a.value().array().tanh().matrix();
  return tape_of(a).record(std::move(y), [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * (1.0 - y.array().square());
  });
}

Var sigmoid(Var a) {
  int ia = a.id();
  Matrix y = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return tape_of(a).record(std::move(y), [ia](Tape& t, int self) {
    const Matrix& y = t.value(self);
    t.grad(ia).array() += t.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var gelu(Var a) {
  static const double k = std::sqrt(2.0 / M_PI);
  int ia = a.id();
  Matrix y = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))); });
  return tape_of(a).record(std::move(y), [ia](Tape& t, int self) {
    Matrix d = t.value(ia).unaryExpr([](double x) {
      double u = k * (x + 0.044715 * x * x * x);
      double th = std::tanh(u);
      double du = k * (1.0 + 3.0 * 0.044715 * x * x);
      return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
    });
    t.grad(ia).array() += t.grad(self).array() * d.array();
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require(gain.rows() == 1 && gain.cols() == x.cols() && bias.rows() == 1 && bias.cols() == x.cols(), "layer_norm");
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  Matrix xhat(xv.rows(), n);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    double mu = xv.row(i).mean();
    double var = (xv.row(i).array() - mu).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (xv.row(i).array() - mu) * inv_std[i];
  }
  Matrix y = xhat.array().rowwise() * gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  int ix = x.id(), ig = gain.id(), ib = bias.id();
  return tape_of(x).record(std::move(y), [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std), n](Tape& t,
                                                                                                                  int self) {
    const Matrix& g = t.grad(self);
    t.grad(ig) += g.cwiseProduct(xhat).colwise().sum();
    t.grad(ib) += g.colwise().sum();
    Matrix dxhat = g.array().rowwise() * t.value(ig).row(0).array();
    Matrix& gx = t.grad(ix);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      double m1 = dxhat.row(i).sum() / static_cast<double>(n);
      double m2 = dxhat.row(i).dot(xhat.row(i)) / static_cast<double>(n);
      gx.row(i).array() += inv_std[i] * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
    }
  });
}

Var softmax_rows(Var x) {
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    double mx = xv.row(i).maxCoeff();
    y.row(i) = (xv.row(i).array() - mx).exp();
    y.row(i) /= y.row(i).sum();
  }
  int ix = x.id();
  return tape_of(x).record(std::move(y), [ix](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Eigen::VectorXd dots = (g.cwiseProduct(y)).rowwise().sum();
    Matrix d = y.array() * (g.colwise() - dots).array();
    t.grad(ix) += d;
  });
}

Var log_softmax_rows(Var x) {
  const Matrix& xv = x.value();
  Matrix y(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.rows(); ++i) {
    double mx = xv.row(i).maxCoeff();
    double lse = mx + std::log((xv.row(i).array() - mx).exp().sum());
    y.row(i) = xv.row(i).array() - lse;
  }
  int ix = x.id();
  return tape_of(x).record(std::move(y), [ix](Tape& t, int self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Eigen::VectorXd gsum = g.rowwise().sum();
    Matrix p = y.array().exp();
    Matrix d = g - (p.array().colwise() * gsum.array()).matrix();
    t.grad(ix) += d;
  });
}

Var log_clamped(Var x, double floor) {
  int ix = x.id();
  Matrix y = x.value().unaryExpr([floor](double v) { return std::log(std::max(v, floor)); });
  return tape_of(x).record(std::move(y), [ix, floor](Tape& t, int self) {
    const Matrix& xv = t.value(ix);
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad(ix);
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      if (xv(i) > floor) gx(i) += g(i) / xv(i);
    }
  });
}

Var row(Var x, Eigen::Index i) { return rows(x, i, 1); }

Var rows(Var x, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.rows(), "rows");
  int ix = x.id();
  return tape_of(x).record(x.value().middleRows(start, count), [ix, start, count](Tape& t, int self) {
    t.grad(ix).middleRows(start, count) += t.grad(self);
  });
}

Var cols(Var x, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && count >= 0 && start + count <= x.cols(), "cols");
  int ix = x.id();
  return tape_of(x).record(x.value().middleCols(start, count), [ix, start, count](Tape& t, int self) {
    t.grad(ix).middleCols(start, count) += t.grad(self);
  });
}

Var concat_cols(Var a, Var b) {
  Var parts[2] = {a, b};
  return concat_cols(std::span<const Var>(parts));
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols of nothing");
  Eigen::Index r = parts[0].rows(), c = 0;
  for (const Var& p : parts) {
    require(p.rows() == r, "concat_cols rows");
    c += p.cols();
  }
  Matrix y(r, c);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.cols();
  }
  return tape_of(parts[0]).record(std::move(y), [spans = std::move(spans)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (auto [id, o] : spans) {
      Matrix& gi = t.grad(id);
      gi += g.middleCols(o, gi.cols());
    }
  });
}

Var stack_rows(std::span<const Var> parts) {
  require(!parts.empty(), "stack_rows of nothing");
  Eigen::Index c = parts[0].cols(), r = 0;
  for (const Var& p : parts) {
    require(p.cols() == c, "stack_rows cols");
    r += p.rows();
  }
  Matrix y(r, c);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id(), off);
    off += p.rows();
  }
  return tape_of(parts[0]).record(std::move(y), [spans = std::move(spans)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    for (auto [id, o] : spans) {
      Matrix& gi = t.grad(id);
      gi += g.middleRows(o, gi.rows());
    }
  });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Matrix& tv = table.value();
  Matrix y(static_cast<Eigen::Index>(indices.size()), tv.cols());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    require(indices[k] >= 0 && indices[k] < tv.rows(), "gather_rows index");
    y.row(static_cast<Eigen::Index>(k)) = tv.row(indices[k]);
  }
  int it = table.id();
  std::vector<int> idx(indices.begin(), indices.end());
  return tape_of(table).record(std::move(y), [it, idx = std::move(idx)](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix& gt = t.grad(it);
    for (std::size_t k = 0; k < idx.size(); ++k) gt.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
  });
}

Var element(Var x, Eigen::Index i, Eigen::Index j) {
  int ix = x.id();
  Matrix y(1, 1);
  y(0, 0) = x.value()(i, j);
  return tape_of(x).record(std::move(y), [ix, i, j](Tape& t, int self) { t.grad(ix)(i, j) += t.grad(self)(0, 0); });
}

Var sum(Var x) {
  int ix = x.id();
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return tape_of(x).record(std::move(y), [ix](Tape& t, int self) { t.grad(ix).array() += t.grad(self)(0, 0); });
}

Var mean_rows(Var x) {
  require(x.rows() > 0, "mean_rows of empty matrix");
  int ix = x.id();
  double inv = 1.0 / static_cast<double>(x.rows());
  return tape_of(x).record(x.value().colwise().mean(), [ix, inv](Tape& t, int self) {
    t.grad(ix).rowwise() += t.grad(self).row(0) * inv;
  });
}

}  // namespace pathise::ad
