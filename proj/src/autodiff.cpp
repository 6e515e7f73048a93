#include "hmkg/autodiff.hpp"

#include "hmkg/errors.hpp"

#include <string>

namespace hmkg::ad {

namespace {

void require(bool ok, const char* op, const Var& a, const Var& b) {
  if (!ok) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ShapeError("operation on an unbound Var");
  return *a.tape();
}

}  // namespace

const Matrix& Var::value() const { return tape_->value_of(id_); }

Matrix Var::grad() const {
  const Matrix& g = tape_->grad_of(id_);
  if (g.size() == 0) return Matrix::Zero(rows(), cols());
  return g;
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || nodes_[in.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix(), needs, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
  nodes_.push_back(
      Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& delta) { accumulate_expr(id, delta); }

void Tape::backward(Var root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward: root must be a 1x1 scalar");
  }
  for (Node& node : nodes_) node.grad.resize(0, 0);
  if (!nodes_[root.id()].requires_grad) return;
  nodes_[root.id()].grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && node.grad.size() != 0) node.backward(*this, i);
  }
}

Var matmul(Var a, Var b) {
  require(a.cols() == b.rows(), "matmul", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() * b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value_of(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate_expr(ib, t.value_of(ia).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require(a.cols() == b.cols(), "matmul_nt", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() * b.value().transpose(), {a, b},
                           [ia, ib](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad_of(self);
                             if (t.requires_grad(ia)) t.accumulate_expr(ia, g * t.value_of(ib));
                             if (t.requires_grad(ib)) {
                               t.accumulate_expr(ib, g.transpose() * t.value_of(ia));
                             }
                           });
}

Var add(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate(ib, t.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_of(self));
    t.accumulate_expr(ib, -t.grad_of(self));
  });
}

Var add_row(Var a, Var row) {
  require(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
  const std::size_t ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return tape_of(a).record(std::move(out), {a, row}, [ia, ir](Tape& t, std::size_t self) {
    t.accumulate(ia, t.grad_of(self));
    if (t.requires_grad(ir)) t.accumulate_expr(ir, t.grad_of(self).colwise().sum());
  });
}

Var hadamard(Var a, Var b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return tape_of(a).record(a.value().cwiseProduct(b.value()), {a, b},
                           [ia, ib](Tape& t, std::size_t self) {
                             const Matrix& g = t.grad_of(self);
                             if (t.requires_grad(ia)) {
                               t.accumulate_expr(ia, g.cwiseProduct(t.value_of(ib)));
                             }
                             if (t.requires_grad(ib)) {
                               t.accumulate_expr(ib, g.cwiseProduct(t.value_of(ia)));
                             }
                           });
}

Var scale(Var a, double factor) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value() * factor, {a}, [ia, factor](Tape& t, std::size_t self) {
    t.accumulate_expr(ia, t.grad_of(self) * factor);
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().transpose(), {a}, [ia](Tape& t, std::size_t self) {
    t.accumulate_expr(ia, t.grad_of(self).transpose());
  });
}

Var tanh(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).record(a.value().array().tanh().matrix(), {a},
                           [ia](Tape& t, std::size_t self) {
                             const auto y = t.value_of(self).array();
                             t.accumulate_expr(ia,
                                               (t.grad_of(self).array() * (1.0 - y * y)).matrix());
                           });
}

Var sigmoid(Var a) {
  const std::size_t ia = a.id();
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const auto y = t.value_of(self).array();
    t.accumulate_expr(ia, (t.grad_of(self).array() * y * (1.0 - y)).matrix());
  });
}

Var softmax_rows(Var a) {
  const std::size_t ia = a.id();
  Matrix out = a.value();
  for (Index r = 0; r < out.rows(); ++r) {
    const double peak = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& y = t.value_of(self);
    const Matrix& g = t.grad_of(self);
    // dL/dx = y * (g - <g, y>) per row
    const Eigen::VectorXd inner = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = g;
    dx.colwise() -= inner;
    t.accumulate_expr(ia, dx.cwiseProduct(y));
  });
}

Var gather_rows(Var a, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Index>(r)) = a.value().row(rows[r]);
  }
  const std::size_t ia = a.id();
  std::vector<Index> idx(rows.begin(), rows.end());
  return tape_of(a).record(std::move(out), {a}, [ia, idx = std::move(idx)](Tape& t,
                                                                           std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Matrix& g = t.grad_of(self);
    const Matrix& src = t.value_of(ia);
    Matrix d = Matrix::Zero(src.rows(), src.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) d.row(idx[r]) += g.row(static_cast<Index>(r));
    t.accumulate(ia, d);
  });
}

Var gather_row_entries(Var a, std::span<const Index> columns, Index width) {
  if (width < 1 || static_cast<Index>(columns.size()) != a.rows() * width) {
    throw ShapeError("gather_row_entries: column list does not match rows * width");
  }
  Matrix out(a.rows(), width);
  for (Index r = 0; r < a.rows(); ++r) {
    for (Index s = 0; s < width; ++s) {
      const Index c = columns[static_cast<std::size_t>(r * width + s)];
      if (c < 0 || c >= a.cols()) throw ShapeError("gather_row_entries: index out of range");
      out(r, s) = a.value()(r, c);
    }
  }
  const std::size_t ia = a.id();
  std::vector<Index> cols(columns.begin(), columns.end());
  return tape_of(a).record(std::move(out), {a}, [ia, width, cols = std::move(cols)](
                                                    Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& src = t.value_of(ia);
    Matrix d = Matrix::Zero(src.rows(), src.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      for (Index s = 0; s < width; ++s) d(r, cols[static_cast<std::size_t>(r * width + s)]) += g(r, s);
    }
    t.accumulate(ia, d);
  });
}

Var segment_weighted_sum(Var weights, Var values) {
  const Index n = weights.rows(), k = weights.cols();
  require(values.rows() == n * k, "segment_weighted_sum", weights, values);
  Matrix out = Matrix::Zero(n, values.cols());
  for (Index r = 0; r < n; ++r) {
    for (Index s = 0; s < k; ++s) out.row(r) += weights.value()(r, s) * values.value().row(r * k + s);
  }
  const std::size_t iw = weights.id(), iv = values.id();
  return tape_of(weights).record(std::move(out), {weights, values},
                                 [iw, iv, n, k](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    const Matrix& w = t.value_of(iw);
    const Matrix& v = t.value_of(iv);
    if (t.requires_grad(iw)) {
      Matrix dw(n, k);
      for (Index r = 0; r < n; ++r) {
        for (Index s = 0; s < k; ++s) dw(r, s) = g.row(r).dot(v.row(r * k + s));
      }
      t.accumulate(iw, dw);
    }
    if (t.requires_grad(iv)) {
      Matrix dv(n * k, v.cols());
      for (Index r = 0; r < n; ++r) {
        for (Index s = 0; s < k; ++s) dv.row(r * k + s) = w(r, s) * g.row(r);
      }
      t.accumulate(iv, dv);
    }
  });
}

namespace {

Var concat(std::span<const Var> parts, bool by_cols) {
  const char* op = by_cols ? "concat_cols" : "concat_rows";
  if (parts.empty()) throw ShapeError(std::string(op) + ": no inputs");
  Index total = 0;
  for (const Var& p : parts) {
    require(by_cols ? p.rows() == parts[0].rows() : p.cols() == parts[0].cols(), op, parts[0], p);
    total += by_cols ? p.cols() : p.rows();
  }
  Matrix out = by_cols ? Matrix(parts[0].rows(), total) : Matrix(total, parts[0].cols());
  std::vector<std::size_t> ids;
  std::vector<Index> offsets;
  Tape& tape = tape_of(parts[0]);
  bool needs = false;
  Index at = 0;
  for (const Var& p : parts) {
    const Index width = by_cols ? p.cols() : p.rows();
    if (by_cols) {
      out.middleCols(at, width) = p.value();
    } else {
      out.middleRows(at, width) = p.value();
    }
    ids.push_back(p.id());
    offsets.push_back(at);
    at += width;
    needs = needs || tape.requires_grad(p.id());
  }
  return tape.record(std::move(out), needs, [ids, offsets, by_cols](Tape& t, std::size_t self) {
    const Matrix& g = t.grad_of(self);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Matrix& part = t.value_of(ids[i]);
      if (by_cols) {
        t.accumulate_expr(ids[i], g.middleCols(offsets[i], part.cols()));
      } else {
        t.accumulate_expr(ids[i], g.middleRows(offsets[i], part.rows()));
      }
    }
  });
}

}  // namespace

Var concat_cols(std::span<const Var> parts) { return concat(parts, true); }

Var concat_rows(std::span<const Var> parts) { return concat(parts, false); }

Var mean_rows(Var a) {
  const std::size_t ia = a.id();
  const double n = static_cast<double>(a.rows());
  return tape_of(a).record(a.value().colwise().mean(), {a}, [ia, n](Tape& t, std::size_t self) {
    const Matrix& src = t.value_of(ia);
    t.accumulate_expr(ia, t.grad_of(self).replicate(src.rows(), 1) / n);
  });
}

Var sum_all(Var a) {
  const std::size_t ia = a.id();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return tape_of(a).record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Matrix& src = t.value_of(ia);
    t.accumulate_expr(ia, Matrix::Constant(src.rows(), src.cols(), t.grad_of(self)(0, 0)));
  });
}

}  // namespace hmkg::ad
