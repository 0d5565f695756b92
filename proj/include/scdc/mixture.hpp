#pragma once

// Latent Gaussian mixture: Dirichlet/NIW priors, the global variational
// family q(pi) prod_k q(mu_k, Sigma_k) prod_m q(alpha_m) q(beta_m), and the
// natural-gradient updates on it.

#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "scdc/expfam.hpp"
#include "scdc/nnet.hpp"
#include "scdc/relational.hpp"

namespace scdc {

struct MixturePrior {
  std::size_t K = 0;
  std::size_t d = 0;
  double alpha0 = 1.0;
  expfam::NiwStandard niw;

  void validate() const;
  /// alpha0 = 0.05 / K, kappa = 0.5, m = 0, S = (d + kappa) I, nu = d + kappa.
  static MixturePrior sparse_default(std::size_t K, std::size_t d);
};

struct GlobalVariational {
  expfam::DirichletNat pi;
  std::vector<expfam::NiwNat> components;
  std::vector<WorkerBeta> workers;

  std::size_t K() const { return components.size(); }
  std::size_t M() const { return workers.size(); }
  std::size_t d() const { return components.empty() ? 0 : static_cast<std::size_t>(components.front().dim()); }
  void validate() const;
};

struct GlobalInit {
  double spread = 3.0;           // std of the initial component locations
  double kappa = 1.0;
  double pi_low = 1.0;           // Dirichlet concentrations ~ U(pi_low, pi_high)
  double pi_high = 2.0;
  WorkerBeta worker = {expfam::BetaNat::from_shape(10.0, 1.0), expfam::BetaNat::from_shape(10.0, 1.0)};
};

/// Variational parameters equal to the prior (the zero-KL point).
GlobalVariational prior_as_global(const MixturePrior& prior, const WorkerBeta& worker_prior, std::size_t M);

/// Dirichlet concentrations drawn from U(pi_low, pi_high); NIW with m ~
/// N(0, spread^2 I), the configured kappa, S = (d + kappa) I and nu = d + kappa;
/// every worker set to init.worker.
GlobalVariational init_global(const MixturePrior& prior, std::size_t M, const GlobalInit& init, std::mt19937_64& rng);

/// Sufficient statistics E t(x_i) of one local Gaussian factor.
struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd second;  // E[x x^T]
};

struct GlobalNatGrad {
  Eigen::VectorXd pi;
  std::vector<expfam::NiwNat> components;  // used as plain increments
  std::vector<BetaNatGrad> workers;        // empty when workers are not updated
};

/// Approximate natural gradient prior + scale * sum_i stats_i - current for
/// eta_pi and every eta_{mu,Sigma}; q_z holds one simplex per row aligned with
/// x_stats.
GlobalNatGrad mixture_natural_gradient(const MixturePrior& prior, const Eigen::MatrixXd& q_z,
                                       const std::vector<GaussianStats>& x_stats, const GlobalVariational& current,
                                       double scale = 1.0);

/// eta <- eta + step * grad. Throws StepRejected when any family invariant
/// fails afterwards; `current` is never modified.
GlobalVariational apply_natural_gradient(const GlobalVariational& current, const GlobalNatGrad& grad, double step);

Eigen::VectorXd expected_pi(const GlobalVariational& g);
std::size_t effective_components(const GlobalVariational& g, double threshold);

/// Point mixture parameters (one draw, or the SCDC parameterization).
struct MixturePoint {
  Eigen::VectorXd pi;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
};

MixturePoint sample_point_params(const GlobalVariational& g, std::mt19937_64& rng);

struct GenerativeSample {
  std::vector<int> z;
  Eigen::MatrixXd x;  // N x d
  Eigen::MatrixXd o;  // N x D; empty without a decoder
};

/// z ~ Cat(pi), x | z ~ N(mu_z, Sigma_z), and o | x ~ N(mean(x), diag exp(log_var(x)))
/// when a decoder with "mean" and "log_var" heads is supplied.
GenerativeSample sample_generative(const MixturePoint& params, std::size_t N, nn::Mlp* decoder, std::mt19937_64& rng);
GenerativeSample sample_generative(const GlobalVariational& g, std::size_t N, nn::Mlp* decoder, std::mt19937_64& rng);

// Samplers shared by generation and initialization.
Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alpha, std::mt19937_64& rng);
/// Sigma ~ IW(S, nu) via the Bartlett decomposition of its inverse.
Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& S, double nu, std::mt19937_64& rng);
Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, std::mt19937_64& rng);

}  // namespace scdc
