#include <cmath>
#include <numbers>
#include <string>

#include "scdc/error.hpp"
#include "scdc/nnet.hpp"

namespace scdc::nn {

namespace {

using Index = Eigen::Index;

std::string shape_str(const Tensor& t) { return std::to_string(t.rows()) + "x" + std::to_string(t.cols()); }

Index broadcast_dim(Index a, Index b, const char* op) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  throw ShapeError(std::string(op) + ": incompatible dimensions " + std::to_string(a) + " and " + std::to_string(b));
}

Tensor broadcast(const Tensor& x, Index r, Index c) {
  if (x.rows() == r && x.cols() == c) return x;
  return x.replicate(r / x.rows(), c / x.cols());
}

Tensor reduce_to(const Tensor& g, Index r, Index c) {
  if (g.rows() == r && g.cols() == c) return g;
  if (r == 1 && c == 1) return Tensor::Constant(1, 1, g.sum());
  if (r == 1) return g.colwise().sum();
  return g.rowwise().sum();
}

void accumulate(Tape& t, std::size_t id, const Tensor& g) {
  if (!t.requires_grad(id)) return;
  Tensor& acc = t.grad(id);
  acc += reduce_to(g, acc.rows(), acc.cols());
}

// y = f(x) elementwise with dy/dx = df(x, y).
template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tensor y = a.value().unaryExpr(f);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, df](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor d(x.rows(), x.cols());
    for (Index k = 0; k < x.size(); ++k) d.data()[k] = g.data()[k] * df(x.data()[k], y.data()[k]);
    accumulate(t, ia, d);
  });
}

double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), "add");
  const Index c = broadcast_dim(a.cols(), b.cols(), "add");
  Tensor y = broadcast(a.value(), r, c) + broadcast(b.value(), r, c);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), "sub");
  const Index c = broadcast_dim(a.cols(), b.cols(), "sub");
  Tensor y = broadcast(a.value(), r, c) - broadcast(b.value(), r, c);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t, ia, g);
    accumulate(t, ib, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), "mul");
  const Index c = broadcast_dim(a.cols(), b.cols(), "mul");
  Tensor y = broadcast(a.value(), r, c).cwiseProduct(broadcast(b.value(), r, c));
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) accumulate(t, ia, g.cwiseProduct(broadcast(t.value(ib), r, c)));
    if (t.requires_grad(ib)) accumulate(t, ib, g.cwiseProduct(broadcast(t.value(ia), r, c)));
  });
}

Var div(const Var& a, const Var& b) {
  const Index r = broadcast_dim(a.rows(), b.rows(), "div");
  const Index c = broadcast_dim(a.cols(), b.cols(), "div");
  Tensor y = broadcast(a.value(), r, c).cwiseQuotient(broadcast(b.value(), r, c));
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor bb = broadcast(t.value(ib), r, c);
    if (t.requires_grad(ia)) accumulate(t, ia, g.cwiseQuotient(bb));
    if (t.requires_grad(ib)) {
      const Tensor& y = t.value(self);
      accumulate(t, ib, -g.cwiseProduct(y).cwiseQuotient(bb));
    }
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale(const Var& a, double c) {
  Tensor y = c * a.value();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, c](Tape& t, std::size_t self) { accumulate(t, ia, c * t.grad(self)); });
}

Var add_const(const Var& a, double c) {
  Tensor y = a.value().array() + c;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) { accumulate(t, ia, t.grad(self)); });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(const Var& a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(const Var& a) {
  return unary(a, softplus_value, [](double x, double) { return sigmoid_value(x); });
}

Var sigmoid(const Var& a) {
  return unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Var log_sigmoid(const Var& a) {
  return unary(
      a, [](double x) { return -softplus_value(-x); }, [](double x, double) { return sigmoid_value(-x); });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_str(a.value()) + " times " + shape_str(b.value()));
  }
  Tensor y = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(y), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var transpose(const Var& a) {
  Tensor y = a.value().transpose();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia) += t.grad(self).transpose();
  });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.value()) + " as " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  Tensor y = Eigen::Map<const Tensor>(a.value().data(), rows, cols);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    Tensor& acc = t.grad(ia);
    acc += Eigen::Map<const Tensor>(t.grad(self).data(), acc.rows(), acc.cols());
  });
}

Var sum(const Var& a) {
  Tensor y = Tensor::Constant(1, 1, a.value().sum());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia).array() += t.grad(self)(0, 0);
  });
}

Var row_sum(const Var& a) {
  Tensor y = a.value().rowwise().sum();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia).colwise() += t.grad(self).col(0);
  });
}

Var col_sum(const Var& a) {
  Tensor y = a.value().colwise().sum();
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia).rowwise() += t.grad(self).row(0);
  });
}

Var dot(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("dot: " + shape_str(a.value()) + " vs " + shape_str(b.value()));
  }
  return sum(mul(a, b));
}

Var row(const Var& a, Eigen::Index i) { return slice_rows(a, i, 1); }

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  Tensor y = a.value().middleRows(start, count);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, start, count](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia).middleRows(start, count) += t.grad(self);
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: range out of bounds");
  Tensor y = a.value().middleCols(start, count);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia, start, count](Tape& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia).middleCols(start, count) += t.grad(self);
  });
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vstack: no operands");
  const Index c = parts.front().cols();
  Index r = 0;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ShapeError("vstack: column mismatch");
    r += p.rows();
  }
  Tensor y(r, c);
  std::vector<std::size_t> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return parts.front().tape().record(std::move(y), parts, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& acc = t.grad(ids[k]);
      acc += g.middleRows(offsets[k], acc.rows());
    }
  });
}

Var hstack(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("hstack: no operands");
  const Index r = parts.front().rows();
  Index c = 0;
  for (const Var& p : parts) {
    if (p.rows() != r) throw ShapeError("hstack: row mismatch");
    c += p.cols();
  }
  Tensor y(r, c);
  std::vector<std::size_t> ids;
  std::vector<Index> offsets;
  Index off = 0;
  for (const Var& p : parts) {
    y.middleCols(off, p.cols()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.cols();
  }
  return parts.front().tape().record(std::move(y), parts, [ids, offsets](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& acc = t.grad(ids[k]);
      acc += g.middleCols(offsets[k], acc.cols());
    }
  });
}

Var logsumexp_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), 1);
  for (Index i = 0; i < x.rows(); ++i) {
    const double mx = x.row(i).maxCoeff();
    y(i, 0) = mx + std::log((x.row(i).array() - mx).exp().sum());
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad(ia);
    for (Index i = 0; i < x.rows(); ++i) acc.row(i).array() += g(i, 0) * (x.row(i).array() - y(i, 0)).exp();
  });
}

Var log_softmax_rows(const Var& a) { return sub(a, logsumexp_rows(a)); }

Var softmax_rows(const Var& a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    y.row(i) = (x.row(i).array() - x.row(i).maxCoeff()).exp();
    y.row(i) /= y.row(i).sum();
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(y), {a}, [ia](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad(ia);
    for (Index i = 0; i < y.rows(); ++i) {
      const double inner = g.row(i).dot(y.row(i));
      acc.row(i).array() += y.row(i).array() * (g.row(i).array() - inner);
    }
  });
}

Var diag_embed(const Var& v) {
  if (v.rows() != 1) throw ShapeError("diag_embed: expected a row vector, got " + shape_str(v.value()));
  const Index d = v.cols();
  Tensor y = Tensor::Zero(1, d * d);
  for (Index i = 0; i < d; ++i) y(0, i * d + i) = v.value()(0, i);
  const std::size_t iv = v.id();
  return v.tape().record(std::move(y), {v}, [iv, d](Tape& t, std::size_t self) {
    if (!t.requires_grad(iv)) return;
    const Tensor& g = t.grad(self);
    Tensor& acc = t.grad(iv);
    for (Index i = 0; i < d; ++i) acc(0, i) += g(0, i * d + i);
  });
}

Var reparameterize(const Var& mean, const Var& std, const Tensor& noise) {
  if (mean.rows() != std.rows() || mean.cols() != std.cols() || noise.rows() != mean.rows() ||
      noise.cols() != mean.cols()) {
    throw ShapeError("reparameterize: mean, std and noise must share a shape");
  }
  if (!(std.value().array() > 0.0).all()) throw DomainError("reparameterize: standard deviation must be positive");
  Var eps = mean.tape().constant(noise);
  return add(mean, mul(std, eps));
}

Var gaussian_diag_log_density(const Var& x, const Var& mean, const Var& log_var) {
  const double log2pi = std::log(2.0 * std::numbers::pi);
  Var diff = sub(x, mean);
  Var quad = mul(square(diff), exp(neg(log_var)));
  Var per = add_const(add(quad, log_var), log2pi);
  return scale(sum(per), -0.5);
}

}  // namespace scdc::nn
