#pragma once

// An N=2, K=2, d=1 instance of the final objective with one annotation,
// described by plain numbers, plus its quadrature/enumeration value and a
// translation to library types.

#include <array>
#include <cmath>

#include "oracles.hpp"
#include "scdc/vmp.hpp"

namespace toy {

struct Instance {
  std::array<double, 2> pi_conc{1.7, 2.4};
  std::array<double, 2> pi_prior{0.6, 0.6};
  std::array<oracle::Nig, 2> comp{oracle::Nig{-1.2, 1.5, 2.2, 3.1}, oracle::Nig{0.9, 0.7, 1.4, 4.5}};
  oracle::Nig comp_prior{0.0, 0.5, 1.5, 1.5};
  std::array<double, 2> alpha{6.0, 2.0};  // Beta shape of worker 0 sensitivity
  std::array<double, 2> beta{4.0, 1.5};
  std::array<double, 2> worker_prior{1.0, 1.0};
  int label = 1;  // annotation (0, 1) by worker 0
  // Local factors: z logits and x mean/variance per item.
  std::array<std::array<double, 2>, 2> z_logits{{{0.3, -0.8}, {-0.4, 0.5}}};
  std::array<double, 2> x_mean{-0.7, 1.1};
  std::array<double, 2> x_var{0.35, 0.6};
  // Linear observation potential per item.
  std::array<double, 2> obs_h{0.8, -0.3};
  std::array<double, 2> obs_j{-0.45, -0.9};
};

inline std::array<double, 2> softmax2(const std::array<double, 2>& l) {
  const double m = std::max(l[0], l[1]);
  const double a = std::exp(l[0] - m), b = std::exp(l[1] - m);
  return {a / (a + b), b / (a + b)};
}

/// J by quadrature over the globals and enumeration over (z_0, z_1).
inline double oracle_objective(const Instance& t) {
  using oracle::beta_expect;
  double J = 0.0;
  std::array<std::array<double, 2>, 2> q{softmax2(t.z_logits[0]), softmax2(t.z_logits[1])};

  // <r_i, E t(x_i)> with x_i ~ N(x_mean, x_var).
  for (int i = 0; i < 2; ++i) {
    const double m = t.x_mean[i], v = t.x_var[i];
    J += oracle::integrate_real([&](double x) {
      return (t.obs_h[i] * x + t.obs_j[i] * x * x) * std::exp(oracle::log_normal_density(x, m, v));
    });
  }

  // Relational term, enumerating both cluster indicators.
  const auto la = [&](double a) { return std::log(a); };
  const auto l1m = [&](double a) { return std::log1p(-a); };
  const double e_log_alpha = beta_expect(t.alpha[0], t.alpha[1], la);
  const double e_log1m_alpha = beta_expect(t.alpha[0], t.alpha[1], l1m);
  const double e_log_beta = beta_expect(t.beta[0], t.beta[1], la);
  const double e_log1m_beta = beta_expect(t.beta[0], t.beta[1], l1m);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const double ll = a == b ? (t.label == 1 ? e_log_alpha : e_log1m_alpha)
                               : (t.label == 1 ? e_log1m_beta : e_log_beta);
      J += q[0][a] * q[1][b] * ll;
    }
  }

  // Local KL: z part under pi_0 ~ Beta(conc_0, conc_1), x part under each NIG.
  const double e_log_pi0 = beta_expect(t.pi_conc[0], t.pi_conc[1], la);
  const double e_log_pi1 = beta_expect(t.pi_conc[0], t.pi_conc[1], l1m);
  for (int i = 0; i < 2; ++i) {
    J -= q[i][0] * (std::log(q[i][0]) - e_log_pi0) + q[i][1] * (std::log(q[i][1]) - e_log_pi1);
    for (int k = 0; k < 2; ++k) {
      J -= q[i][k] * t.comp[k].expect([&](double mu, double s) {
        return oracle::kl_normal(t.x_mean[i], t.x_var[i], mu, s);
      });
    }
  }

  // Global KL.
  J -= oracle::kl_beta_quad(t.pi_conc[0], t.pi_conc[1], t.pi_prior[0], t.pi_prior[1]);
  for (int k = 0; k < 2; ++k) J -= oracle::kl_nig_quad(t.comp[k], t.comp_prior);
  J -= oracle::kl_beta_quad(t.alpha[0], t.alpha[1], t.worker_prior[0], t.worker_prior[1]);
  J -= oracle::kl_beta_quad(t.beta[0], t.beta[1], t.worker_prior[0], t.worker_prior[1]);
  return J;
}

inline scdc::expfam::NiwNat niw(const oracle::Nig& g) {
  scdc::expfam::NiwStandard s;
  s.m = Eigen::VectorXd::Constant(1, g.m);
  s.kappa = g.kappa;
  s.S = Eigen::MatrixXd::Constant(1, 1, g.S);
  s.nu = g.nu;
  return scdc::expfam::niw_from_standard(s);
}

struct LibraryInstance {
  scdc::GlobalVariational globals;
  scdc::GlobalVariational prior;
  scdc::vmp::LocalVariational locals;
  scdc::vmp::LocalProblem problem;
  scdc::vmp::RecognitionPotential observation;
};

inline LibraryInstance to_library(const Instance& t) {
  using namespace scdc;
  LibraryInstance L;
  L.globals.pi = expfam::DirichletNat::from_concentration(Eigen::Vector2d(t.pi_conc[0], t.pi_conc[1]));
  L.prior.pi = expfam::DirichletNat::from_concentration(Eigen::Vector2d(t.pi_prior[0], t.pi_prior[1]));
  for (int k = 0; k < 2; ++k) {
    L.globals.components.push_back(niw(t.comp[k]));
    L.prior.components.push_back(niw(t.comp_prior));
  }
  L.globals.workers.push_back({expfam::BetaNat::from_shape(t.alpha[0], t.alpha[1]),
                               expfam::BetaNat::from_shape(t.beta[0], t.beta[1])});
  L.prior.workers.push_back({expfam::BetaNat::from_shape(t.worker_prior[0], t.worker_prior[1]),
                             expfam::BetaNat::from_shape(t.worker_prior[0], t.worker_prior[1])});
  for (int i = 0; i < 2; ++i) {
    L.locals.z.push_back({Eigen::Vector2d(t.z_logits[i][0], t.z_logits[i][1])});
    expfam::GaussianNat g;
    g.h = Eigen::VectorXd::Constant(1, t.x_mean[i] / t.x_var[i]);
    g.J = Eigen::MatrixXd::Constant(1, 1, -0.5 / t.x_var[i]);
    L.locals.x.push_back(g);
  }
  L.problem.items = {0, 1};
  L.problem.annotations = {Annotation{0, 1, 0, t.label}};
  L.observation.h = Eigen::MatrixXd(2, 1);
  L.observation.jdiag = Eigen::MatrixXd(2, 1);
  for (int i = 0; i < 2; ++i) {
    L.observation.h(i, 0) = t.obs_h[i];
    L.observation.jdiag(i, 0) = t.obs_j[i];
  }
  return L;
}

inline double library_objective(const Instance& t) {
  const LibraryInstance L = to_library(t);
  const auto workers = scdc::WorkerAccuracy::posterior(std::span<const scdc::WorkerBeta>(L.globals.workers));
  return scdc::vmp::final_objective(L.globals, L.prior, L.locals, L.problem, workers, L.observation);
}

}  // namespace toy
