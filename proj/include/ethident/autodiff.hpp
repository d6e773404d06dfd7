#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "ethident/random.hpp"

// Minimal tape-based reverse-mode differentiation over dense row-major
// matrices, with the segment operations graph attention needs.
namespace ethident::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Index = Eigen::Index;

// Learnable tensor living outside any tape; gradients from every tape that
// references it accumulate into `grad`.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  // Appends an operation. `inputs` decide whether the result needs a gradient;
  // `backward` receives d(root)/d(result) and must call accumulate() on inputs.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  // For ops that only move finite entries around.
  Var record_unchecked(Matrix value, std::initializer_list<Var> inputs, Backward backward);

  // Seeds d(root)/d(root) = 1 for a 1x1 root and walks the tape in exact
  // reverse recording order. Parameter gradients are added to Parameter::grad.
  void backward(Var root);

  void accumulate(Var v, const Matrix& g);
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Parameter* param = nullptr;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Throws ShapeMismatch unless the condition holds.
void require_shape(bool ok, const char* op, const Matrix& a, const Matrix& b);

Var matmul(Var a, Var b);
Var linear(Var x, Var w);  // x * w^T
Var sparse_linear(const SparseMatrix& x, Var w);  // constant sparse x times w^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var add_row(Var a, Var row);  // broadcasts a 1 x c row over every row of a
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var concat_cols(Var a, Var b);
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
Var gather_rows(Var a, std::span<const std::uint32_t> index);
Var leaky_relu(Var a, double slope);
Var elu(Var a);
Var relu(Var a);
// Inverted dropout while training, identity otherwise.
Var dropout(Var a, double rate, bool training, Rng& rng);
Var log(Var a);
Var exp(Var a);

// Softmax of a column of scores within groups sharing a segment id.
Var segment_softmax(Var scores, std::span<const std::uint32_t> segment, std::size_t segments);
// out[s] = sum over rows r with segment[r] == s of weights[r] * values[r].
Var segment_weighted_sum(Var values, Var weights, std::span<const std::uint32_t> segment, std::size_t segments);
// out[dest[r]] += weights[r] * values[source[r]], without materialising the gathered rows.
Var segment_weighted_sum(Var values, Var weights, std::span<const std::uint32_t> source,
                         std::span<const std::uint32_t> dest, std::size_t segments);
// Column-wise max of the rows in each segment; EmptySegment when a segment has none.
Var segment_max(Var values, std::span<const std::uint32_t> segment, std::size_t segments);
Var column_max(Var values);

// ZeroVector when a row has zero norm.
Var l2_normalize_rows(Var a);
Var softmax_rows(Var a);
// log(sum_j exp(a_ij)) per row; with exclude_diagonal the j == i term is skipped.
Var logsumexp_rows(Var a, bool exclude_diagonal = false);
Var diagonal(Var a);
// Mean negative log-likelihood of integer labels under row softmax(logits).
Var cross_entropy(Var logits, std::span<const std::uint32_t> labels);
Var sum(Var a);
Var mean(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

// Adam, plus plain SGD behind the same interface.
struct OptimizerConfig {
  enum class Kind { Adam, Sgd } kind = Kind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Matrix first;
  Matrix second;
};

// One bias-corrected Adam update of `value` in place; `step` counts from 1.
void adam_step(Matrix& value, const Matrix& grad, AdamMoments& moments, const OptimizerConfig& config,
               std::uint64_t step);

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config = {}) : config_(config) {}

  // Applies one update using each parameter's accumulated gradient.
  void step(std::span<Parameter* const> params);

  std::uint64_t steps() const { return step_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::uint64_t step_ = 0;
  std::vector<AdamMoments> moments_;
};

// "HGATE1" named-tensor archive: names -> (shape, row-major doubles).
using NamedTensors = std::vector<std::pair<std::string, Matrix>>;
void write_tensors(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_tensors(std::istream& in);
void save_tensors(const std::string& path, const NamedTensors& tensors);
NamedTensors load_tensors(const std::string& path);

}  // namespace ethident::ad
