#include "ethident/autodiff.hpp"

#include <cmath>
#include <memory>
#include <fstream>
#include <limits>
#include <sstream>

#include "ethident/binary_io.hpp"
#include "ethident/error.hpp"

namespace ethident::ad {

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFiniteValue, std::string(op) + " produced a non-finite value");
}

void require_segments(std::span<const std::uint32_t> segment, Index rows, std::size_t segments, const char* op) {
  if (static_cast<Index>(segment.size()) != rows) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": segment ids do not match row count");
  }
  for (auto s : segment) {
    if (s >= segments) throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": segment id out of range");
  }
}

}  // namespace

void require_shape(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape(a) + " vs " + shape(b));
}

Var Tape::constant(Matrix value) {
  require_finite(value, "constant");
  nodes_.push_back({std::move(value), {}, nullptr, false, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  require_finite(p.value, "parameter");
  nodes_.push_back({p.value, {}, &p, true, {}});
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  require_finite(value, "operation");
  return record_unchecked(std::move(value), inputs, std::move(backward));
}

Var Tape::record_unchecked(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  for (const auto& v : inputs) needs = needs || nodes_[v.id].needs_grad;
  nodes_.push_back({std::move(value), {}, nullptr, needs, needs ? std::move(backward) : Backward{}});
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  auto& node = nodes_[v.id];
  if (!node.needs_grad) return;
  if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var root) {
  auto& r = nodes_[root.id];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "backward needs a 1x1 root, got " + shape(r.value));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!r.needs_grad) return;
  r.grad = Matrix::Ones(1, 1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.grad.rows() || n.param->grad.cols() != n.grad.cols()) n.param->zero_grad();
      n.param->grad += n.grad;
    }
  }
}

Var matmul(Var a, Var b) {
  const auto& A = a.value();
  const auto& B = b.value();
  require_shape(A.cols() == B.rows(), "matmul", A, B);
  return a.tape->record(A * B, {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

Var linear(Var x, Var w) {
  const auto& X = x.value();
  const auto& W = w.value();
  require_shape(X.cols() == W.cols(), "linear", X, W);
  return x.tape->record(X * W.transpose(), {x, w}, [x, w](Tape& t, const Matrix& g) {
    if (t.needs_grad(x)) t.accumulate(x, g * w.value());
    if (t.needs_grad(w)) t.accumulate(w, g.transpose() * x.value());
  });
}

Var sparse_linear(const SparseMatrix& x, Var w) {
  const auto& W = w.value();
  if (x.cols() != W.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "sparse_linear: " + std::to_string(x.rows()) + "x" +
                                              std::to_string(x.cols()) + " vs " + shape(W));
  }
  const Matrix wt = W.transpose();
  Matrix out = x * wt;
  auto xs = std::make_shared<SparseMatrix>(x);
  return w.tape->record(std::move(out), {w}, [xs, w](Tape& t, const Matrix& g) {
    Matrix gwt = Matrix::Zero(w.cols(), w.rows());
    for (Index r = 0; r < xs->outerSize(); ++r) {
      for (SparseMatrix::InnerIterator it(*xs, r); it; ++it) gwt.row(it.col()) += it.value() * g.row(r);
    }
    t.accumulate(w, gwt.transpose());
  });
}

Var transpose(Var a) {
  return a.tape->record_unchecked(a.value().transpose(), {a},
                        [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(Var a, Var b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.value(), b.value());
  return a.tape->record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a.value(), b.value());
  return a.tape->record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, -g);
  });
}

Var hadamard(Var a, Var b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a.value(), b.value());
  return a.tape->record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
    if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var add_row(Var a, Var row) {
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.value(), row.value());
  Matrix out = a.value().rowwise() + row.value().row(0);
  return a.tape->record(std::move(out), {a, row}, [a, row](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var scale(Var a, double s) {
  return a.tape->record(a.value() * s, {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var add_scalar(Var a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var concat_cols(Var a, Var b) {
  require_shape(a.rows() == b.rows(), "concat_cols", a.value(), b.value());
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ca = a.cols();
  const Index cb = b.cols();
  return a.tape->record_unchecked(std::move(out), {a, b}, [a, b, ca, cb](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.leftCols(ca));
    if (t.needs_grad(b)) t.accumulate(b, g.rightCols(cb));
  });
}

Var concat_rows(Var a, Var b) {
  require_shape(a.cols() == b.cols(), "concat_rows", a.value(), b.value());
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a.value(), b.value();
  const Index ra = a.rows();
  const Index rb = b.rows();
  return a.tape->record_unchecked(std::move(out), {a, b}, [a, b, ra, rb](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g.topRows(ra));
    if (t.needs_grad(b)) t.accumulate(b, g.bottomRows(rb));
  });
}

Var slice_rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "slice_rows out of range on " + shape(a.value()));
  }
  return a.tape->record_unchecked(a.value().middleRows(start, count), {a}, [a, start, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    t.accumulate(a, full);
  });
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "slice_cols out of range on " + shape(a.value()));
  }
  return a.tape->record_unchecked(a.value().middleCols(start, count), {a}, [a, start, count](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    t.accumulate(a, full);
  });
}

Var gather_rows(Var a, std::span<const std::uint32_t> index) {
  const auto& A = a.value();
  Matrix out(static_cast<Index>(index.size()), A.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= A.rows()) throw Error(ErrorKind::ShapeMismatch, "gather_rows index out of range");
    out.row(static_cast<Index>(r)) = A.row(index[r]);
  }
  std::vector<std::uint32_t> idx(index.begin(), index.end());
  return a.tape->record_unchecked(std::move(out), {a}, [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) full.row(idx[r]) += g.row(static_cast<Index>(r));
    t.accumulate(a, full);
  });
}

Var leaky_relu(Var a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return a.tape->record(std::move(out), {a}, [a, slope](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([slope](double x) { return x > 0.0 ? 1.0 : slope; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var elu(Var a) {
  Matrix out = a.value().unaryExpr([](double x) { return x > 0.0 ? x : std::expm1(x); });
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var relu(Var a) {
  Matrix out = a.value().cwiseMax(0.0);
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var dropout(Var a, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return a;
  if (rate >= 1.0) throw Error(ErrorKind::Config, "dropout rate must be below 1");
  const double keep = 1.0 - rate;
  Matrix mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  Matrix out = a.value().cwiseProduct(mask);
  return a.tape->record(std::move(out), {a},
                        [a, mask = std::move(mask)](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseProduct(mask)); });
}

Var log(Var a) {
  Matrix out = a.value().array().log();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseQuotient(a.value()));
  });
}

Var exp(Var a) {
  Matrix out = a.value().array().exp();
  const std::size_t self = a.tape->size();
  return a.tape->record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(self)));
  });
}

Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t segments) {
  const auto& s = scores.value();
  if (s.cols() != 1) throw Error(ErrorKind::ShapeMismatch, "segment_softmax expects a column of scores");
  require_segments(segment, s.rows(), segments, "segment_softmax");
  std::vector<double> peak(segments, -std::numeric_limits<double>::infinity());
  std::vector<double> total(segments, 0.0);
  for (Index r = 0; r < s.rows(); ++r) peak[segment[r]] = std::max(peak[segment[r]], s(r, 0));
  Matrix out(s.rows(), 1);
  for (Index r = 0; r < s.rows(); ++r) {
    out(r, 0) = std::exp(s(r, 0) - peak[segment[r]]);
    total[segment[r]] += out(r, 0);
  }
  for (Index r = 0; r < s.rows(); ++r) out(r, 0) /= total[segment[r]];
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  const std::size_t self = scores.tape->size();
  return scores.tape->record(std::move(out), {scores},
                             [scores, seg = std::move(seg), segments, self](Tape& t, const Matrix& g) {
                               const auto& y = t.value(self);
                               std::vector<double> dot(segments, 0.0);
                               for (std::size_t r = 0; r < seg.size(); ++r) dot[seg[r]] += y(r, 0) * g(r, 0);
                               Matrix d(y.rows(), 1);
                               for (std::size_t r = 0; r < seg.size(); ++r) d(r, 0) = y(r, 0) * (g(r, 0) - dot[seg[r]]);
                               t.accumulate(scores, d);
                             });
}

Var segment_weighted_sum(Var values, Var weights, std::span<const std::uint32_t> segment, std::size_t segments) {
  const auto& V = values.value();
  const auto& w = weights.value();
  require_shape(w.cols() == 1 && w.rows() == V.rows(), "segment_weighted_sum", V, w);
  require_segments(segment, V.rows(), segments, "segment_weighted_sum");
  Matrix out = Matrix::Zero(static_cast<Index>(segments), V.cols());
  for (Index r = 0; r < V.rows(); ++r) out.row(segment[r]) += w(r, 0) * V.row(r);
  std::vector<std::uint32_t> seg(segment.begin(), segment.end());
  return values.tape->record(std::move(out), {values, weights},
                             [values, weights, seg = std::move(seg)](Tape& t, const Matrix& g) {
                               const auto& V = values.value();
                               const auto& w = weights.value();
                               if (t.needs_grad(values)) {
                                 Matrix dv(V.rows(), V.cols());
                                 for (Index r = 0; r < V.rows(); ++r) dv.row(r) = w(r, 0) * g.row(seg[r]);
                                 t.accumulate(values, dv);
                               }
                               if (t.needs_grad(weights)) {
                                 Matrix dw(V.rows(), 1);
                                 for (Index r = 0; r < V.rows(); ++r) dw(r, 0) = V.row(r).dot(g.row(seg[r]));
                                 t.accumulate(weights, dw);
                               }
                             });
}

Var segment_weighted_sum(Var values, Var weights, std::span<const std::uint32_t> source,
                         std::span<const std::uint32_t> dest, std::size_t segments) {
  const auto& V = values.value();
  const auto& w = weights.value();
  if (w.cols() != 1 || static_cast<std::size_t>(w.rows()) != source.size() || source.size() != dest.size()) {
    throw Error(ErrorKind::ShapeMismatch, "segment_weighted_sum: weights, sources and destinations differ in length");
  }
  require_segments(dest, w.rows(), segments, "segment_weighted_sum");
  require_segments(source, w.rows(), static_cast<std::size_t>(V.rows()), "segment_weighted_sum");
  Matrix out = Matrix::Zero(static_cast<Index>(segments), V.cols());
  for (Index r = 0; r < w.rows(); ++r) out.row(dest[r]) += w(r, 0) * V.row(source[r]);
  std::vector<std::uint32_t> src(source.begin(), source.end());
  std::vector<std::uint32_t> dst(dest.begin(), dest.end());
  return values.tape->record(std::move(out), {values, weights},
                             [values, weights, src = std::move(src), dst = std::move(dst)](Tape& t, const Matrix& g) {
                               const auto& V = values.value();
                               const auto& w = weights.value();
                               if (t.needs_grad(values)) {
                                 Matrix dv = Matrix::Zero(V.rows(), V.cols());
                                 for (std::size_t r = 0; r < src.size(); ++r) {
                                   dv.row(src[r]) += w(static_cast<Index>(r), 0) * g.row(dst[r]);
                                 }
                                 t.accumulate(values, dv);
                               }
                               if (t.needs_grad(weights)) {
                                 Matrix dw(w.rows(), 1);
                                 for (std::size_t r = 0; r < src.size(); ++r) {
                                   dw(static_cast<Index>(r), 0) = V.row(src[r]).dot(g.row(dst[r]));
                                 }
                                 t.accumulate(weights, dw);
                               }
                             });
}

Var segment_max(Var values, std::span<const std::uint32_t> segment, std::size_t segments) {
  const auto& V = values.value();
  require_segments(segment, V.rows(), segments, "segment_max");
  Matrix out(static_cast<Index>(segments), V.cols());
  out.setConstant(-std::numeric_limits<double>::infinity());
  std::vector<Index> arg(segments * static_cast<std::size_t>(V.cols()), -1);
  for (Index r = 0; r < V.rows(); ++r) {
    const auto s = segment[r];
    for (Index c = 0; c < V.cols(); ++c) {
      if (V(r, c) > out(s, c)) {
        out(s, c) = V(r, c);
        arg[s * V.cols() + c] = r;
      }
    }
  }
  for (std::size_t s = 0; s < segments; ++s) {
    if (V.cols() > 0 && arg[s * V.cols()] < 0) {
      throw Error(ErrorKind::EmptySegment, "segment " + std::to_string(s) + " has no rows");
    }
  }
  return values.tape->record(std::move(out), {values}, [values, arg = std::move(arg)](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(values.rows(), values.cols());
    for (Index s = 0; s < g.rows(); ++s) {
      for (Index c = 0; c < g.cols(); ++c) d(arg[s * g.cols() + c], c) += g(s, c);
    }
    t.accumulate(values, d);
  });
}

Var column_max(Var values) {
  std::vector<std::uint32_t> seg(static_cast<std::size_t>(values.rows()), 0);
  return segment_max(values, seg, 1);
}

Var l2_normalize_rows(Var a) {
  const auto& A = a.value();
  Matrix norms = A.rowwise().norm();
  for (Index r = 0; r < A.rows(); ++r) {
    if (norms(r, 0) == 0.0) throw Error(ErrorKind::ZeroVector, "row " + std::to_string(r) + " has zero norm");
  }
  Matrix out = A.array().colwise() / norms.col(0).array();
  const std::size_t self = a.tape->size();
  return a.tape->record(std::move(out), {a}, [a, norms = std::move(norms), self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    Matrix dots = y.cwiseProduct(g).rowwise().sum();
    Matrix d = (g - (y.array().colwise() * dots.col(0).array()).matrix());
    d = d.array().colwise() / norms.col(0).array();
    t.accumulate(a, d);
  });
}

Var softmax_rows(Var a) {
  const auto& A = a.value();
  Matrix out = (A.colwise() - A.rowwise().maxCoeff()).array().exp();
  out = out.array().colwise() / out.rowwise().sum().array();
  const std::size_t self = a.tape->size();
  return a.tape->record(std::move(out), {a}, [a, self](Tape& t, const Matrix& g) {
    const auto& y = t.value(self);
    Matrix dots = y.cwiseProduct(g).rowwise().sum();
    Matrix d = y.cwiseProduct((g.colwise() - dots.col(0)));
    t.accumulate(a, d);
  });
}

Var logsumexp_rows(Var a, bool exclude_diagonal) {
  const auto& A = a.value();
  if (exclude_diagonal && A.cols() < 2) {
    throw Error(ErrorKind::ShapeMismatch, "logsumexp_rows without diagonal needs at least two columns");
  }
  Matrix weights = Matrix::Zero(A.rows(), A.cols());
  Matrix out(A.rows(), 1);
  for (Index r = 0; r < A.rows(); ++r) {
    double peak = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < A.cols(); ++c) {
      if (!(exclude_diagonal && c == r)) peak = std::max(peak, A(r, c));
    }
    double total = 0.0;
    for (Index c = 0; c < A.cols(); ++c) {
      if (exclude_diagonal && c == r) continue;
      weights(r, c) = std::exp(A(r, c) - peak);
      total += weights(r, c);
    }
    weights.row(r) /= total;
    out(r, 0) = peak + std::log(total);
  }
  return a.tape->record(std::move(out), {a}, [a, weights = std::move(weights)](Tape& t, const Matrix& g) {
    t.accumulate(a, weights.array().colwise() * g.col(0).array());
  });
}

Var diagonal(Var a) {
  const auto& A = a.value();
  const Index n = std::min(A.rows(), A.cols());
  Matrix out = A.diagonal().head(n);
  return a.tape->record(std::move(out), {a}, [a, n](Tape& t, const Matrix& g) {
    Matrix d = Matrix::Zero(a.rows(), a.cols());
    for (Index i = 0; i < n; ++i) d(i, i) = g(i, 0);
    t.accumulate(a, d);
  });
}

Var cross_entropy(Var logits, std::span<const std::uint32_t> labels) {
  const auto& L = logits.value();
  if (static_cast<Index>(labels.size()) != L.rows() || L.rows() == 0) {
    throw Error(ErrorKind::ShapeMismatch, "cross_entropy: label count does not match logits " + shape(L));
  }
  Matrix probs = (L.colwise() - L.rowwise().maxCoeff()).array().exp();
  probs = probs.array().colwise() / probs.rowwise().sum().array();
  double loss = 0.0;
  for (Index r = 0; r < L.rows(); ++r) {
    if (labels[r] >= L.cols()) throw Error(ErrorKind::ShapeMismatch, "cross_entropy: label out of range");
    const double peak = L.row(r).maxCoeff();
    const double lse = peak + std::log((L.row(r).array() - peak).exp().sum());
    loss += lse - L(r, labels[r]);
  }
  const double n = static_cast<double>(L.rows());
  Matrix out(1, 1);
  out(0, 0) = loss / n;
  std::vector<std::uint32_t> y(labels.begin(), labels.end());
  return logits.tape->record(std::move(out), {logits},
                             [logits, probs = std::move(probs), y = std::move(y), n](Tape& t, const Matrix& g) {
                               Matrix d = probs;
                               for (std::size_t r = 0; r < y.size(); ++r) d(static_cast<Index>(r), y[r]) -= 1.0;
                               t.accumulate(logits, d * (g(0, 0) / n));
                             });
}

Var sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw Error(ErrorKind::ShapeMismatch, "mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

void adam_step(Matrix& value, const Matrix& grad, AdamMoments& moments, const OptimizerConfig& config,
               std::uint64_t step) {
  require_shape(value.rows() == grad.rows() && value.cols() == grad.cols(), "adam_step", value, grad);
  if (moments.first.size() == 0) {
    moments.first = Matrix::Zero(value.rows(), value.cols());
    moments.second = Matrix::Zero(value.rows(), value.cols());
  }
  require_shape(moments.first.rows() == value.rows() && moments.first.cols() == value.cols(), "adam_step",
                value, moments.first);
  moments.first = config.beta1 * moments.first + (1.0 - config.beta1) * grad;
  moments.second = config.beta2 * moments.second + (1.0 - config.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  value.array() -= config.lr * (moments.first.array() / c1) / ((moments.second.array() / c2).sqrt() + config.eps);
}

void Optimizer::step(std::span<Parameter* const> params) {
  ++step_;
  if (config_.kind == OptimizerConfig::Kind::Sgd) {
    for (auto* p : params) {
      require_shape(p->value.rows() == p->grad.rows() && p->value.cols() == p->grad.cols(), "sgd_step", p->value,
                    p->grad);
      p->value -= config_.lr * p->grad;
    }
    return;
  }
  if (moments_.size() != params.size()) moments_.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) adam_step(params[i]->value, params[i]->grad, moments_[i], config_, step_);
}

namespace {
constexpr std::string_view kCheckpointMagic = "HGATE1";
}

void write_tensors(std::ostream& out, const NamedTensors& tensors) {
  using namespace binary;
  put_magic(out, kCheckpointMagic);
  put_u64(out, tensors.size());
  for (const auto& [name, m] : tensors) {
    put_string(out, name);
    put_u64(out, static_cast<std::uint64_t>(m.rows()));
    put_u64(out, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing tensor archive");
}

NamedTensors read_tensors(std::istream& in) {
  using namespace binary;
  expect_magic(in, kCheckpointMagic);
  const auto count = get_u64(in);
  NamedTensors tensors;
  for (std::uint64_t k = 0; k < count; ++k) {
    auto name = get_string(in);
    const auto rows = static_cast<Index>(get_u64(in));
    const auto cols = static_cast<Index>(get_u64(in));
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(in);
    tensors.emplace_back(std::move(name), std::move(m));
  }
  return tensors;
}

void save_tensors(const std::string& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_tensors(out, tensors);
}

NamedTensors load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_tensors(in);
}

}  // namespace ethident::ad
