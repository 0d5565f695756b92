#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// matrices, plus the feedforward networks built on it.
//
// A Tape records every operation applied to Vars in creation order; since a
// node can only depend on nodes recorded before it, reverse recording order is
// a reverse topological order and Tape::backward visits each node once.
// Nodes that do not depend on a parameter or a declared variable carry no
// backward closure, so evaluation-only graphs are cheap.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace scdc::nn {

using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Tape;

class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// A leaf whose gradient can be read back with gradient() after backward().
  Var variable(Tensor value);
  /// A leaf bound to a Parameter; backward() accumulates into p.grad.
  Var parameter(Parameter& p);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
    return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(fn));
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Adjoint buffer of a node, allocated on first use.
  Tensor& grad(std::size_t id);

  /// Reverse sweep seeded with d(output)/d(output) = 1. The output must be 1x1
  /// and the sweep may run once per tape.
  void backward(const Var& output);
  /// Adjoint of any node after backward(); zeros when the node is unreachable.
  Tensor gradient(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise binary ops broadcast a 1-row, 1-column or 1x1 operand against
// the other operand.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

Var neg(const Var& a);
inline Var operator-(const Var& a) { return neg(a); }
Var scale(const Var& a, double c);
Var add_const(const Var& a, double c);
Var exp(const Var& a);
Var log(const Var& a);
Var square(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);
Var sigmoid(const Var& a);
Var log_sigmoid(const Var& a);
Var clamp(const Var& a, double lo, double hi);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

Var sum(const Var& a);       // 1x1
Var row_sum(const Var& a);   // n x 1
Var col_sum(const Var& a);   // 1 x c
Var dot(const Var& a, const Var& b);

Var row(const Var& a, Eigen::Index i);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var vstack(std::span<const Var> parts);
Var hstack(std::span<const Var> parts);

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
Var logsumexp_rows(const Var& a);

/// 1 x d vector to the row-major flattening (1 x d*d) of its diagonal matrix.
Var diag_embed(const Var& v);

/// mean + std * noise, differentiable in mean and std. Throws DomainError
/// unless std > 0 everywhere.
Var reparameterize(const Var& mean, const Var& std, const Tensor& noise);

/// Sum over rows and columns of log N(x; mean, diag(exp(log_var))).
Var gaussian_diag_log_density(const Var& x, const Var& mean, const Var& log_var);

// ------------------------------------------------------------------ Mlp

struct HeadSpec {
  std::string name;
  std::size_t width = 0;
  std::optional<std::pair<double, double>> clamp;
};

struct MlpSpec {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::vector<HeadSpec> heads;
  bool skip = false;  // each head also gets a linear map straight from the input
};

inline constexpr double kLogVarMin = -8.0;
inline constexpr double kLogVarMax = 8.0;

/// Dense ReLU network with named linear output heads. Weights are stored
/// (fan_in x fan_out) so a batch of row inputs maps as x W + b.
class Mlp {
 public:
  Mlp() = default;
  /// Weights uniform in +-1/sqrt(fan_in); biases zero.
  Mlp(MlpSpec spec, std::mt19937_64& rng);

  const MlpSpec& spec() const { return spec_; }

  std::map<std::string, Var> forward(Tape& tape, const Var& input);
  std::map<std::string, Tensor> forward(const Tensor& input);

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  void zero_grad();
  std::size_t num_weights() const;

 private:
  MlpSpec spec_;
  std::vector<Parameter> layers_w_;
  std::vector<Parameter> layers_b_;
  std::vector<Parameter> heads_w_;
  std::vector<Parameter> heads_b_;
  std::vector<Parameter> skips_w_;
};

// ------------------------------------------------------------ Optimizer

enum class OptimizerKind { kSgdMomentum, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Ascent moves parameters along +grad (maximizing an objective).
  bool ascent = false;
};

struct OptimizerState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  long steps = 0;
};

/// One update of every parameter from its accumulated grad. Throws
/// TrainingDivergence on a non-finite gradient, before touching anything.
void optimizer_step(std::span<Parameter* const> params, OptimizerState& state, const OptimizerConfig& config);

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

}  // namespace scdc::nn
