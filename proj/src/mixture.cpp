#include "scdc/mixture.hpp"

#include <cmath>
#include <string>

#include "scdc/error.hpp"

namespace scdc {

using expfam::Matrix;
using expfam::Vector;

void MixturePrior::validate() const {
  if (K < 1 || d < 1) throw InvalidParameter("mixture prior: K and d must be positive");
  if (!(alpha0 > 0.0)) throw InvalidParameter("mixture prior: alpha0 must be positive");
  if (niw.m.size() != static_cast<Eigen::Index>(d)) throw ShapeError("mixture prior: NIW location has wrong dimension");
  niw.validate();
}

MixturePrior MixturePrior::sparse_default(std::size_t K, std::size_t d) {
  MixturePrior p;
  p.K = K;
  p.d = d;
  p.alpha0 = 0.05 / static_cast<double>(K);
  const double kappa = 0.5;
  const auto dd = static_cast<Eigen::Index>(d);
  p.niw = {Vector::Zero(dd), kappa, (static_cast<double>(d) + kappa) * Matrix::Identity(dd, dd),
           static_cast<double>(d) + kappa};
  return p;
}

void GlobalVariational::validate() const {
  pi.validate();
  if (pi.eta.size() != static_cast<Eigen::Index>(components.size())) {
    throw ShapeError("global variational: Dirichlet size differs from the component count");
  }
  for (const auto& c : components) {
    if (c.dim() != components.front().dim()) throw ShapeError("global variational: mixed component dimensions");
    c.validate();
  }
  for (const auto& w : workers) {
    w.alpha.validate();
    w.beta.validate();
  }
}

GlobalVariational prior_as_global(const MixturePrior& prior, const WorkerBeta& worker_prior, std::size_t M) {
  prior.validate();
  GlobalVariational g;
  g.pi = expfam::DirichletNat::from_concentration(Vector::Constant(static_cast<Eigen::Index>(prior.K), prior.alpha0));
  g.components.assign(prior.K, expfam::niw_from_standard(prior.niw));
  g.workers.assign(M, worker_prior);
  return g;
}

GlobalVariational init_global(const MixturePrior& prior, std::size_t M, const GlobalInit& init, std::mt19937_64& rng) {
  prior.validate();
  if (init.spread < 0.0) throw InvalidParameter("init spread must be nonnegative");
  const auto K = static_cast<Eigen::Index>(prior.K), d = static_cast<Eigen::Index>(prior.d);
  GlobalVariational g;
  std::uniform_real_distribution<double> u(init.pi_low, init.pi_high);
  Vector alpha(K);
  for (Eigen::Index k = 0; k < K; ++k) alpha[k] = u(rng);
  g.pi = expfam::DirichletNat::from_concentration(alpha);

  std::normal_distribution<double> n01(0.0, 1.0);
  const double dof = static_cast<double>(prior.d) + init.kappa;
  for (Eigen::Index k = 0; k < K; ++k) {
    Vector m(d);
    for (Eigen::Index a = 0; a < d; ++a) m[a] = init.spread * n01(rng);
    g.components.push_back(expfam::niw_from_standard({m, init.kappa, dof * Matrix::Identity(d, d), dof}));
  }
  g.workers.assign(M, init.worker);
  g.validate();
  return g;
}

GlobalNatGrad mixture_natural_gradient(const MixturePrior& prior, const Eigen::MatrixXd& q_z,
                                       const std::vector<GaussianStats>& x_stats, const GlobalVariational& current,
                                       double scale) {
  const auto K = static_cast<Eigen::Index>(current.K());
  if (q_z.rows() != static_cast<Eigen::Index>(x_stats.size()) || (q_z.rows() > 0 && q_z.cols() != K)) {
    throw ShapeError("mixture_natural_gradient: responsibilities do not match the statistics");
  }
  const expfam::NiwNat prior_niw = expfam::niw_from_standard(prior.niw);
  const auto d = prior_niw.dim();

  GlobalNatGrad g;
  g.pi = Vector::Constant(K, prior.alpha0 - 1.0) + scale * q_z.colwise().sum().transpose() - current.pi.eta;
  for (Eigen::Index k = 0; k < K; ++k) {
    expfam::NiwNat acc{Vector::Zero(d), Matrix::Zero(d, d), 0.0, 0.0};
    for (std::size_t i = 0; i < x_stats.size(); ++i) {
      const double r = q_z(static_cast<Eigen::Index>(i), k);
      acc.h1 += r * x_stats[i].mean;
      acc.h2 += r * x_stats[i].second;
      acc.h3 += r;
    }
    const expfam::NiwNat& cur = current.components[static_cast<std::size_t>(k)];
    g.components.push_back({prior_niw.h1 + scale * acc.h1 - cur.h1, prior_niw.h2 + scale * acc.h2 - cur.h2,
                            prior_niw.h3 + scale * acc.h3 - cur.h3, prior_niw.h4 + scale * acc.h3 - cur.h4});
  }
  return g;
}

GlobalVariational apply_natural_gradient(const GlobalVariational& current, const GlobalNatGrad& grad, double step) {
  if (!(step >= 0.0)) throw InvalidParameter("natural-gradient step must be nonnegative");
  if (grad.pi.size() != current.pi.eta.size() || grad.components.size() != current.K() ||
      (!grad.workers.empty() && grad.workers.size() != current.M())) {
    throw ShapeError("apply_natural_gradient: gradient does not match the parameters");
  }
  GlobalVariational next = current;
  next.pi.eta += step * grad.pi;
  for (std::size_t k = 0; k < next.K(); ++k) {
    next.components[k].h1 += step * grad.components[k].h1;
    next.components[k].h2 += step * grad.components[k].h2;
    next.components[k].h2 = 0.5 * (next.components[k].h2 + next.components[k].h2.transpose()).eval();
    next.components[k].h3 += step * grad.components[k].h3;
    next.components[k].h4 += step * grad.components[k].h4;
  }
  for (std::size_t m = 0; m < grad.workers.size(); ++m) {
    next.workers[m].alpha.eta += step * grad.workers[m].alpha;
    next.workers[m].beta.eta += step * grad.workers[m].beta;
  }
  try {
    next.validate();
  } catch (const Error& e) {
    throw StepRejected(std::string("natural-gradient step rejected: ") + e.what());
  }
  return next;
}

Eigen::VectorXd expected_pi(const GlobalVariational& g) {
  const Vector a = g.pi.concentration();
  return a / a.sum();
}

std::size_t effective_components(const GlobalVariational& g, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidParameter("effective-component threshold must be in (0,1)");
  const Vector p = expected_pi(g);
  return static_cast<std::size_t>((p.array() > threshold).count());
}

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alpha, std::mt19937_64& rng) {
  Vector x(alpha.size());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    std::gamma_distribution<double> g(alpha[k], 1.0);
    x[k] = g(rng);
  }
  const double s = x.sum();
  if (!(s > 0.0)) {
    // All draws underflowed (tiny concentrations): fall back to the largest.
    x.setZero();
    Eigen::Index k;
    alpha.maxCoeff(&k);
    x[k] = 1.0;
    return x;
  }
  return x / s;
}

Eigen::MatrixXd sample_inverse_wishart(const Eigen::MatrixXd& S, double nu, std::mt19937_64& rng) {
  const auto d = S.rows();
  if (!(nu > static_cast<double>(d) - 1.0)) throw InvalidParameter("inverse Wishart: nu must exceed d - 1");
  const Matrix V = S.inverse();
  Eigen::LLT<Matrix> llt(0.5 * (V + V.transpose()));
  if (llt.info() != Eigen::Success) throw LinAlgError("inverse Wishart: scale matrix is not positive definite");
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix A = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi(nu - static_cast<double>(i));
    A(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = n01(rng);
  }
  const Matrix LA = llt.matrixL() * A;
  const Matrix W = LA * LA.transpose();
  Matrix sigma = W.inverse();
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::VectorXd sample_mvn(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov, std::mt19937_64& rng) {
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) throw LinAlgError("sample_mvn: covariance is not positive definite");
  std::normal_distribution<double> n01(0.0, 1.0);
  Vector e(mean.size());
  for (Eigen::Index a = 0; a < e.size(); ++a) e[a] = n01(rng);
  return mean + llt.matrixL() * e;
}

MixturePoint sample_point_params(const GlobalVariational& g, std::mt19937_64& rng) {
  MixturePoint p;
  p.pi = sample_dirichlet(g.pi.concentration(), rng);
  for (const auto& c : g.components) {
    const expfam::NiwStandard s = expfam::niw_to_standard(c);
    Matrix sigma = sample_inverse_wishart(s.S, s.nu, rng);
    p.means.push_back(sample_mvn(s.m, sigma / s.kappa, rng));
    p.covs.push_back(std::move(sigma));
  }
  return p;
}

GenerativeSample sample_generative(const MixturePoint& params, std::size_t N, nn::Mlp* decoder, std::mt19937_64& rng) {
  const auto K = params.pi.size();
  if (K < 1 || params.means.size() != static_cast<std::size_t>(K) || params.covs.size() != params.means.size()) {
    throw ShapeError("sample_generative: inconsistent point parameters");
  }
  const auto d = params.means.front().size();
  GenerativeSample out;
  out.x.resize(static_cast<Eigen::Index>(N), d);
  std::discrete_distribution<int> cat(params.pi.data(), params.pi.data() + K);
  for (std::size_t n = 0; n < N; ++n) {
    const int k = cat(rng);
    out.z.push_back(k);
    out.x.row(static_cast<Eigen::Index>(n)) = sample_mvn(params.means[static_cast<std::size_t>(k)],
                                                         params.covs[static_cast<std::size_t>(k)], rng)
                                                  .transpose();
  }
  if (decoder != nullptr && N > 0) {
    auto heads = decoder->forward(nn::Tensor(out.x));
    const nn::Tensor& mean = heads.at("mean");
    const nn::Tensor& log_var = heads.at("log_var");
    std::normal_distribution<double> n01(0.0, 1.0);
    out.o.resize(mean.rows(), mean.cols());
    for (Eigen::Index n = 0; n < mean.rows(); ++n) {
      for (Eigen::Index a = 0; a < mean.cols(); ++a) {
        out.o(n, a) = mean(n, a) + std::exp(0.5 * log_var(n, a)) * n01(rng);
      }
    }
  }
  return out;
}

GenerativeSample sample_generative(const GlobalVariational& g, std::size_t N, nn::Mlp* decoder, std::mt19937_64& rng) {
  return sample_generative(sample_point_params(g, rng), N, decoder, rng);
}

}  // namespace scdc
