#include <cmath>
#include <string>

#include "scdc/error.hpp"
#include "scdc/vmp.hpp"

namespace scdc::vmp {

using nn::Tape;
using nn::Tensor;
using nn::Var;
using Eigen::Index;
using Matrix = Eigen::MatrixXd;

namespace {

Index flat_dim(Index size) {
  const auto d = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(size))));
  if (d * d != size) throw ShapeError("expected a flattened square matrix, got " + std::to_string(size) + " entries");
  return d;
}

Matrix unflatten(const Tensor& row, Index offset, Index d) {
  Matrix m(d, d);
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) m(a, b) = row(0, offset + a * d + b);
  }
  return m;
}

void flatten_into(const Matrix& m, Tensor& row, Index offset) {
  const Index d = m.rows();
  for (Index a = 0; a < d; ++a) {
    for (Index b = 0; b < d; ++b) row(0, offset + a * d + b) = m(a, b);
  }
}

}  // namespace

Var gauss_mean_cov(const Var& h, const Var& J) {
  if (h.rows() != 1 || J.rows() != 1) throw ShapeError("gauss_mean_cov: expected row vectors");
  const Index d = h.cols();
  if (flat_dim(J.cols()) != d) throw ShapeError("gauss_mean_cov: h and J dimensions differ");
  const Matrix Js = [&] {
    Matrix m = unflatten(J.value(), 0, d);
    return Matrix(0.5 * (m + m.transpose()));
  }();
  Eigen::LLT<Matrix> llt(-Js);
  if (llt.info() != Eigen::Success) throw LinAlgError("gauss_mean_cov: J is not negative definite");
  Matrix sigma = 0.5 * llt.solve(Matrix::Identity(d, d));
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  const Eigen::VectorXd hv = h.value().row(0).transpose();
  const Eigen::VectorXd mu = sigma * hv;

  Tensor out(1, d + d * d);
  for (Index a = 0; a < d; ++a) out(0, a) = mu[a];
  flatten_into(sigma, out, d);

  const std::size_t ih = h.id(), iJ = J.id();
  return h.tape().record(std::move(out), {h, J}, [ih, iJ, d](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    const Matrix S = unflatten(y, d, d);
    Eigen::VectorXd gmu(d);
    for (Index a = 0; a < d; ++a) gmu[a] = g(0, a);
    const Matrix gS = unflatten(g, d, d);
    const Eigen::VectorXd hv = t.value(ih).row(0).transpose();
    // mean = Sigma h, Sigma = -1/2 sym(J)^-1 so dSigma = 2 Sigma dJs Sigma.
    if (t.requires_grad(ih)) {
      const Eigen::VectorXd gh = S * gmu;
      for (Index a = 0; a < d; ++a) t.grad(ih)(0, a) += gh[a];
    }
    if (t.requires_grad(iJ)) {
      const Matrix sbar = gS + gmu * hv.transpose();
      const Matrix gJs = 2.0 * S * sbar * S;
      const Matrix gJ = 0.5 * (gJs + gJs.transpose());
      Tensor& acc = t.grad(iJ);
      for (Index a = 0; a < d; ++a) {
        for (Index b = 0; b < d; ++b) acc(0, a * d + b) += gJ(a, b);
      }
    }
  });
}

Var cholesky_flat(const Var& sigma) {
  if (sigma.rows() != 1) throw ShapeError("cholesky_flat: expected a row vector");
  const Index d = flat_dim(sigma.cols());
  Matrix S = unflatten(sigma.value(), 0, d);
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::LLT<Matrix> llt(S);
  if (llt.info() != Eigen::Success) throw LinAlgError("cholesky_flat: matrix is not positive definite");
  const Matrix L = llt.matrixL();
  Tensor out(1, d * d);
  flatten_into(L, out, 0);

  const std::size_t is = sigma.id();
  return sigma.tape().record(std::move(out), {sigma}, [is, d](Tape& t, std::size_t self) {
    if (!t.requires_grad(is)) return;
    const Matrix L = unflatten(t.value(self), 0, d);
    const Matrix Lbar = unflatten(t.grad(self), 0, d).triangularView<Eigen::Lower>();
    // P = Phi(L^T Lbar): lower triangle with the diagonal halved.
    Matrix P = (L.transpose() * Lbar).triangularView<Eigen::Lower>();
    P.diagonal() *= 0.5;
    const Matrix sym = P + P.transpose();
    const auto Lt = L.triangularView<Eigen::Lower>();
    // Sbar = 1/2 L^-T (P + P^T) L^-1.
    Matrix tmp = Lt.transpose().solve(sym);
    Matrix sbar = 0.5 * Lt.transpose().solve(tmp.transpose()).transpose();
    sbar = 0.5 * (sbar + sbar.transpose()).eval();
    Tensor& acc = t.grad(is);
    for (Index a = 0; a < d; ++a) {
      for (Index b = 0; b < d; ++b) acc(0, a * d + b) += sbar(a, b);
    }
  });
}

GaussVars gauss_vars(const Var& h, const Var& J) {
  const Index d = h.cols();
  Var packed = gauss_mean_cov(h, J);
  GaussVars g;
  g.mean = nn::slice_cols(packed, 0, d);
  g.cov = nn::slice_cols(packed, d, d * d);
  g.second = nn::add(g.cov, nn::reshape(nn::matmul(nn::transpose(g.mean), g.mean), 1, d * d));
  g.chol = cholesky_flat(g.cov);
  return g;
}

Var gauss_log_partition(const Var& h, const GaussVars& g) {
  Tape& tape = h.tape();
  const Index d = h.cols();
  // ln|Sigma| = 2 sum ln L_aa; off-diagonal entries are masked to 1 first.
  Tensor diag_mask = Tensor::Zero(1, d * d), off_fill = Tensor::Constant(1, d * d, 1.0);
  for (Index a = 0; a < d; ++a) {
    diag_mask(0, a * d + a) = 1.0;
    off_fill(0, a * d + a) = 0.0;
  }
  Var diag_only = nn::add(nn::mul(g.chol, tape.constant(diag_mask)), tape.constant(off_fill));
  Var half_logdet = nn::sum(nn::log(diag_only));
  return nn::add(nn::scale(nn::dot(h, g.mean), 0.5), half_logdet);
}

Var gauss_sample(const GaussVars& g, const Tensor& eps) {
  const Index d = g.mean.cols();
  if (eps.rows() != 1 || eps.cols() != d) throw ShapeError("gauss_sample: noise must be 1 x d");
  Tape& tape = g.mean.tape();
  Var L = nn::reshape(g.chol, d, d);
  return nn::add(g.mean, nn::matmul(tape.constant(eps), nn::transpose(L)));
}

}  // namespace scdc::vmp
