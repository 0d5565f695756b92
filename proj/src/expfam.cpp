#include "scdc/expfam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/special_functions/digamma.hpp>

#include "scdc/error.hpp"

namespace scdc::expfam {

namespace {

void require_finite(const Eigen::Ref<const Matrix>& v, const char* what) {
  if (!v.allFinite()) {
    throw InvalidParameter(std::string(what) + ": non-finite natural parameter");
  }
}

double logsumexp(const Vector& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

Eigen::LLT<Matrix> spd_factor(const Matrix& A, const char* what) {
  Eigen::LLT<Matrix> llt(0.5 * (A + A.transpose()));
  if (llt.info() != Eigen::Success) {
    throw LinAlgError(std::string(what) + ": matrix is not positive definite");
  }
  return llt;
}

double logdet_from(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Central difference of f along a perturbation direction.
template <typename Param, typename Perturb>
double central_difference(const Param& p, double eps, Perturb&& perturb) {
  Param plus = p;
  Param minus = p;
  perturb(plus, eps);
  perturb(minus, -eps);
  double fp = 0.0;
  double fm = 0.0;
  try {
    plus.validate();
    minus.validate();
    fp = log_partition(plus);
    fm = log_partition(minus);
  } catch (const Error& e) {
    throw DomainError(std::string("finite-difference step leaves the domain: ") + e.what());
  }
  return (fp - fm) / (2.0 * eps);
}

}  // namespace

double digamma(double x) { return boost::math::digamma(x); }

double log_multigamma(double a, int d) {
  double out = 0.25 * d * (d - 1) * std::log(std::numbers::pi);
  for (int i = 1; i <= d; ++i) out += std::lgamma(a + 0.5 * (1 - i));
  return out;
}

double multi_digamma(double a, int d) {
  double out = 0.0;
  for (int i = 1; i <= d; ++i) out += digamma(a + 0.5 * (1 - i));
  return out;
}

double logdet_spd(const Matrix& A) { return logdet_from(spd_factor(A, "logdet")); }

// ---------------------------------------------------------------- Dirichlet

DirichletNat DirichletNat::from_concentration(const Vector& alpha) {
  DirichletNat p{alpha.array() - 1.0};
  p.validate();
  return p;
}

void DirichletNat::validate() const {
  require_finite(eta, "Dirichlet");
  if (eta.size() < 2) throw InvalidParameter("Dirichlet: need at least two components");
  if ((eta.array() <= -1.0).any()) throw InvalidParameter("Dirichlet: concentration must be positive");
}

Vector dirichlet_expected_stats(const DirichletNat& p) {
  p.validate();
  const Vector alpha = p.concentration();
  const double total = digamma(alpha.sum());
  return alpha.unaryExpr([](double a) { return digamma(a); }).array() - total;
}

double log_partition(const DirichletNat& p) {
  p.validate();
  const Vector alpha = p.concentration();
  double out = -std::lgamma(alpha.sum());
  for (double a : alpha) out += std::lgamma(a);
  return out;
}

double grad_log_partition_check(const DirichletNat& p, double epsilon) {
  const Vector expected = dirichlet_expected_stats(p);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < p.eta.size(); ++k) {
    const double g = central_difference(p, epsilon, [k](DirichletNat& q, double e) { q.eta[k] += e; });
    worst = std::max(worst, std::abs(g - expected[k]));
  }
  return worst;
}

// ---------------------------------------------------------------------- NIW

void NiwStandard::validate() const {
  const auto d = static_cast<double>(m.size());
  if (!m.allFinite() || !S.allFinite() || !std::isfinite(kappa) || !std::isfinite(nu)) {
    throw InvalidParameter("NIW: non-finite parameter");
  }
  if (S.rows() != m.size() || S.cols() != m.size()) throw ShapeError("NIW: scale matrix shape mismatch");
  if (kappa <= 0.0) throw InvalidParameter("NIW: kappa must be positive");
  if (nu <= d - 1.0) throw InvalidParameter("NIW: nu must exceed d - 1");
  spd_factor(S, "NIW scale");
}

NiwNat niw_from_standard(const NiwStandard& p) {
  p.validate();
  const auto d = static_cast<double>(p.m.size());
  return NiwNat{p.kappa * p.m, p.S + p.kappa * p.m * p.m.transpose(), p.kappa, p.nu + d + 2.0};
}

NiwStandard niw_to_standard(const NiwNat& p) {
  require_finite(p.h1, "NIW");
  require_finite(p.h2, "NIW");
  if (!std::isfinite(p.h3) || !std::isfinite(p.h4)) throw InvalidParameter("NIW: non-finite natural parameter");
  if (p.h2.rows() != p.dim() || p.h2.cols() != p.dim()) throw ShapeError("NIW: h2 shape mismatch");
  if (p.h3 <= 0.0) throw InvalidParameter("NIW: kappa must be positive");
  const auto d = static_cast<double>(p.dim());
  NiwStandard s;
  s.kappa = p.h3;
  s.m = p.h1 / p.h3;
  const Matrix S = p.h2 - p.h1 * p.h1.transpose() / p.h3;
  s.S = 0.5 * (S + S.transpose());
  s.nu = p.h4 - d - 2.0;
  return s;
}

void NiwNat::validate() const { niw_to_standard(*this).validate(); }

NiwExpectedStats niw_expected_stats(const NiwNat& p) {
  const NiwStandard s = niw_to_standard(p);
  s.validate();
  const auto d = static_cast<int>(s.m.size());
  const auto llt = spd_factor(s.S, "NIW scale");
  const Vector Sinv_m = llt.solve(s.m);
  const Matrix Sinv = llt.solve(Matrix::Identity(d, d));
  NiwExpectedStats out;
  out.prec_mean = s.nu * Sinv_m;
  out.neg_half_prec = -0.5 * s.nu * 0.5 * (Sinv + Sinv.transpose());
  out.neg_half_quad = -0.5 * (d / s.kappa + s.nu * s.m.dot(Sinv_m));
  out.neg_half_logdet = 0.5 * (multi_digamma(0.5 * s.nu, d) + d * std::log(2.0) - logdet_from(llt));
  return out;
}

double log_partition(const NiwNat& p) {
  const NiwStandard s = niw_to_standard(p);
  s.validate();
  const auto d = static_cast<int>(s.m.size());
  return 0.5 * s.nu * (d * std::log(2.0) - logdet_spd(s.S)) + log_multigamma(0.5 * s.nu, d) -
         0.5 * d * std::log(s.kappa);
}

double grad_log_partition_check(const NiwNat& p, double epsilon) {
  const NiwExpectedStats e = niw_expected_stats(p);
  const Eigen::Index d = p.dim();
  double worst = 0.0;
  auto track = [&](double g, double expected) { worst = std::max(worst, std::abs(g - expected)); };

  for (Eigen::Index i = 0; i < d; ++i) {
    track(central_difference(p, epsilon, [i](NiwNat& q, double eps) { q.h1[i] += eps; }), e.prec_mean[i]);
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double g = central_difference(p, epsilon, [i, j](NiwNat& q, double eps) {
        q.h2(i, j) += eps;
        if (i != j) q.h2(j, i) += eps;
      });
      const double expected = i == j ? e.neg_half_prec(i, i) : e.neg_half_prec(i, j) + e.neg_half_prec(j, i);
      track(g, expected);
    }
  }
  track(central_difference(p, epsilon, [](NiwNat& q, double eps) { q.h3 += eps; }), e.neg_half_quad);
  track(central_difference(p, epsilon, [](NiwNat& q, double eps) { q.h4 += eps; }), e.neg_half_logdet);
  return worst;
}

// --------------------------------------------------------------------- Beta

BetaNat BetaNat::from_shape(double tau1, double tau2) {
  BetaNat p;
  p.eta = Eigen::Vector2d(tau1 - 1.0, tau2 - 1.0);
  p.validate();
  return p;
}

void BetaNat::validate() const {
  if (!eta.allFinite()) throw InvalidParameter("Beta: non-finite natural parameter");
  if ((eta.array() <= -1.0).any()) throw InvalidParameter("Beta: shape parameters must be positive");
}

Eigen::Vector2d beta_expected_stats(const BetaNat& p) {
  p.validate();
  const double total = digamma(p.tau1() + p.tau2());
  return {digamma(p.tau1()) - total, digamma(p.tau2()) - total};
}

double log_partition(const BetaNat& p) {
  p.validate();
  return std::lgamma(p.tau1()) + std::lgamma(p.tau2()) - std::lgamma(p.tau1() + p.tau2());
}

double grad_log_partition_check(const BetaNat& p, double epsilon) {
  const Eigen::Vector2d expected = beta_expected_stats(p);
  double worst = 0.0;
  for (int k = 0; k < 2; ++k) {
    const double g = central_difference(p, epsilon, [k](BetaNat& q, double e) { q.eta[k] += e; });
    worst = std::max(worst, std::abs(g - expected[k]));
  }
  return worst;
}

// -------------------------------------------------------------- Categorical

namespace {
struct CategoricalChecked : CategoricalNat {
  void validate() const { require_finite(eta, "Categorical"); }
};
struct GaussianChecked : GaussianNat {
  void validate() const { gaussian_nat_to_moment(*this); }
};
double log_partition(const CategoricalChecked& p) { return scdc::expfam::log_partition(static_cast<const CategoricalNat&>(p)); }
double log_partition(const GaussianChecked& p) { return scdc::expfam::log_partition(static_cast<const GaussianNat&>(p)); }
}  // namespace

Vector categorical_expected_stats(const CategoricalNat& p) {
  require_finite(p.eta, "Categorical");
  const Vector shifted = (p.eta.array() - p.eta.maxCoeff()).exp();
  return shifted / shifted.sum();
}

double log_partition(const CategoricalNat& p) {
  require_finite(p.eta, "Categorical");
  return logsumexp(p.eta);
}

double grad_log_partition_check(const CategoricalNat& p, double epsilon) {
  const Vector expected = categorical_expected_stats(p);
  const CategoricalChecked c{p};
  double worst = 0.0;
  for (Eigen::Index k = 0; k < p.eta.size(); ++k) {
    const double g = central_difference(c, epsilon, [k](CategoricalChecked& q, double e) { q.eta[k] += e; });
    worst = std::max(worst, std::abs(g - expected[k]));
  }
  return worst;
}

// ----------------------------------------------------------------- Gaussian

GaussianMoments gaussian_nat_to_moment(const GaussianNat& p) {
  require_finite(p.h, "Gaussian");
  require_finite(p.J, "Gaussian");
  const Eigen::Index d = p.h.size();
  if (p.J.rows() != d || p.J.cols() != d) throw ShapeError("Gaussian: J shape mismatch");
  const Matrix precision = -2.0 * p.J;
  Eigen::LLT<Matrix> llt(0.5 * (precision + precision.transpose()));
  if (llt.info() != Eigen::Success) throw LinAlgError("Gaussian: J is not negative definite");
  GaussianMoments m;
  m.cov = llt.solve(Matrix::Identity(d, d));
  m.cov = 0.5 * (m.cov + m.cov.transpose());
  m.mean = llt.solve(p.h);
  return m;
}

GaussianNat gaussian_moment_to_nat(const GaussianMoments& m) {
  const Eigen::Index d = m.mean.size();
  if (m.cov.rows() != d || m.cov.cols() != d) throw ShapeError("Gaussian: covariance shape mismatch");
  const auto llt = spd_factor(m.cov, "Gaussian covariance");
  Matrix precision = llt.solve(Matrix::Identity(d, d));
  precision = 0.5 * (precision + precision.transpose());
  return GaussianNat{precision * m.mean, -0.5 * precision};
}

double log_partition(const GaussianNat& p) {
  const GaussianMoments m = gaussian_nat_to_moment(p);
  // 1/2 (mu^T Sigma^-1 mu + ln|Sigma|) with Sigma^-1 mu = h.
  return 0.5 * (m.mean.dot(p.h) + logdet_spd(m.cov));
}

double grad_log_partition_check(const GaussianNat& p, double epsilon) {
  const GaussianMoments m = gaussian_nat_to_moment(p);
  const Matrix second = m.cov + m.mean * m.mean.transpose();
  const GaussianChecked c{p};
  const Eigen::Index d = p.h.size();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double g = central_difference(c, epsilon, [i](GaussianChecked& q, double e) { q.h[i] += e; });
    worst = std::max(worst, std::abs(g - m.mean[i]));
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double g = central_difference(c, epsilon, [i, j](GaussianChecked& q, double e) {
        q.J(i, j) += e;
        if (i != j) q.J(j, i) += e;
      });
      const double expected = i == j ? second(i, i) : second(i, j) + second(j, i);
      worst = std::max(worst, std::abs(g - expected));
    }
  }
  return worst;
}

}  // namespace scdc::expfam
