#pragma once

// Exponential-family primitives for the five conjugate families used by the
// Bayesian model: Dirichlet, Normal-Inverse-Wishart, Beta, Categorical and
// multivariate Gaussian.
//
// Every family is stored in natural parameters. Log-partition functions drop
// parameter-free constants (e.g. the (d/2) ln 2pi of the Gaussian), which
// cancel in every KL divergence and do not affect gradients.

#include <Eigen/Dense>

namespace scdc::expfam {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// eta_k = alpha_k - 1.
struct DirichletNat {
  Vector eta;

  static DirichletNat from_concentration(const Vector& alpha);
  Vector concentration() const { return eta.array() + 1.0; }
  void validate() const;
};

/// Natural parameters (kappa m, S + kappa m m^T, kappa, nu + d + 2) paired with
/// t(mu, Sigma) = (Sigma^-1 mu, -1/2 Sigma^-1, -1/2 mu^T Sigma^-1 mu,
/// -1/2 ln|Sigma|).
struct NiwNat {
  Vector h1;
  Matrix h2;
  double h3 = 0.0;
  double h4 = 0.0;

  Eigen::Index dim() const { return h1.size(); }
  void validate() const;
};

struct NiwStandard {
  Vector m;
  double kappa = 1.0;
  Matrix S;
  double nu = 1.0;

  void validate() const;
};

NiwNat niw_from_standard(const NiwStandard& p);
/// Recovers (m, kappa, S, nu); S is symmetrized before it is returned.
NiwStandard niw_to_standard(const NiwNat& p);

/// eta = (tau1 - 1, tau2 - 1).
struct BetaNat {
  Eigen::Vector2d eta = Eigen::Vector2d::Zero();

  static BetaNat from_shape(double tau1, double tau2);
  double tau1() const { return eta[0] + 1.0; }
  double tau2() const { return eta[1] + 1.0; }
  void validate() const;
};

/// Unnormalized log-probabilities; any constant shift denotes the same
/// distribution.
struct CategoricalNat {
  Vector eta;
};

/// h = Sigma^-1 mu, J = -1/2 Sigma^-1.
struct GaussianNat {
  Vector h;
  Matrix J;
};

struct GaussianMoments {
  Vector mean;
  Matrix cov;
};

struct NiwExpectedStats {
  Vector prec_mean;        // E[Sigma^-1 mu]
  Matrix neg_half_prec;    // E[-1/2 Sigma^-1]
  double neg_half_quad;    // E[-1/2 mu^T Sigma^-1 mu]
  double neg_half_logdet;  // E[-1/2 ln|Sigma|]
};

// Special functions.
double digamma(double x);
double log_multigamma(double a, int d);
double multi_digamma(double a, int d);
/// ln|A| through a Cholesky factorization; throws LinAlgError when A is not
/// symmetric positive definite.
double logdet_spd(const Matrix& A);

Vector dirichlet_expected_stats(const DirichletNat& p);
NiwExpectedStats niw_expected_stats(const NiwNat& p);
Eigen::Vector2d beta_expected_stats(const BetaNat& p);
Vector categorical_expected_stats(const CategoricalNat& p);

GaussianMoments gaussian_nat_to_moment(const GaussianNat& p);
GaussianNat gaussian_moment_to_nat(const GaussianMoments& m);

double log_partition(const DirichletNat& p);
double log_partition(const NiwNat& p);
double log_partition(const BetaNat& p);
double log_partition(const CategoricalNat& p);
double log_partition(const GaussianNat& p);

// Numerical check of grad_eta log Z(eta) = E[t]: central differences of
// log_partition against the expected-statistics operation. Returns the max
// absolute deviation over all natural-parameter coordinates. Matrix blocks
// are perturbed symmetrically. Throws DomainError when a perturbed point
// leaves the parameter domain.
double grad_log_partition_check(const DirichletNat& p, double epsilon);
double grad_log_partition_check(const NiwNat& p, double epsilon);
double grad_log_partition_check(const BetaNat& p, double epsilon);
double grad_log_partition_check(const CategoricalNat& p, double epsilon);
double grad_log_partition_check(const GaussianNat& p, double epsilon);

}  // namespace scdc::expfam
