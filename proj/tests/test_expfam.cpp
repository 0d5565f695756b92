#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "expfam_fd.hpp"
#include "scdc/error.hpp"
#include "scdc/expfam.hpp"

using namespace scdc::expfam;
using scdc::LinAlgError;

TEST_CASE("Dirichlet expected statistics") {
  CHECK(dirichlet_expected_stats(DirichletNat::from_concentration(Vector::Constant(2, 1.0))).isApprox(Vector::Constant(2, -1.0)));
  CHECK(dirichlet_expected_stats(DirichletNat::from_concentration(Eigen::Vector2d(10, 1)))(0) == doctest::Approx(-0.1).epsilon(1e-12));

  // Monte-Carlo oracle for Dir(2, 2).
  std::mt19937_64 rng(1);
  std::gamma_distribution<double> g(2.0, 1.0);
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double a = g(rng), b = g(rng);
    acc += std::log(a / (a + b));
  }
  const double e = dirichlet_expected_stats(DirichletNat::from_concentration(Vector::Constant(2, 2.0)))(0);
  CHECK(std::abs(acc / n - e) < 1e-3);
  CHECK(e == doctest::Approx(digamma(2.0) - digamma(4.0)).epsilon(1e-12));
}

TEST_CASE("Beta expected statistics") {
  CHECK(beta_expected_stats(BetaNat::from_shape(1, 1)).isApprox(Eigen::Vector2d(-1, -1)));
  CHECK(beta_expected_stats(BetaNat::from_shape(10, 1))(0) == doctest::Approx(-0.1).epsilon(1e-12));
  std::mt19937_64 rng(2);
  std::gamma_distribution<double> ga(9.0, 1.0), gb(1.0, 1.0);
  double acc = 0.0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    const double a = ga(rng), b = gb(rng);
    acc += std::log(a / (a + b));
  }
  CHECK(std::abs(acc / n - beta_expected_stats(BetaNat::from_shape(9, 1))(0)) < 1e-3);
}

TEST_CASE("categorical expected statistics") {
  CHECK(categorical_expected_stats({Vector::Zero(3)}).isApprox(Vector::Constant(3, 1.0 / 3.0)));
  CHECK(categorical_expected_stats({Vector::Constant(3, 712.5)}).isApprox(Vector::Constant(3, 1.0 / 3.0)));
  CHECK(categorical_expected_stats({Eigen::Vector2d(0.0, std::log(3.0))}).isApprox(Eigen::Vector2d(0.25, 0.75)));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01(0.0, 3.0);
  for (int t = 0; t < 50; ++t) {
    Vector eta(5);
    for (int k = 0; k < 5; ++k) eta(k) = n01(rng);
    const Vector p = categorical_expected_stats({eta});
    const Vector q = categorical_expected_stats({(eta.array() + n01(rng) * 100).matrix()});
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK((p.array() > 0).all());
  }
}

TEST_CASE("NIW expected statistics reference cases") {
  for (int d : {1, 2, 3}) {
    const NiwStandard s{Vector::Zero(d), 1.0, Matrix::Identity(d, d), d + 2.0};
    const NiwExpectedStats e = niw_expected_stats(niw_from_standard(s));
    CHECK(e.prec_mean.isZero());
    CHECK(e.neg_half_prec.isApprox(-0.5 * (d + 2.0) * Matrix::Identity(d, d)));
  }
  const NiwStandard s{Vector::Zero(2), 2.0, 2.0 * Matrix::Identity(2, 2), 4.0};
  CHECK(niw_expected_stats(niw_from_standard(s)).neg_half_quad == doctest::Approx(-0.5));
}

TEST_CASE("NIW expected statistics match Monte Carlo") {
  // Sigma^-1 ~ Wishart(S^-1, nu) for integer nu is a sum of nu outer products.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::Vector2d m(0.7, -0.4);
  Matrix S(2, 2);
  S << 2.0, 0.3, 0.3, 1.5;
  const double kappa = 1.7;
  const int nu = 5;
  const Matrix Lw = S.inverse().llt().matrixL();
  Eigen::Vector2d acc1 = Eigen::Vector2d::Zero();
  Matrix acc2 = Matrix::Zero(2, 2);
  double acc3 = 0.0, acc4 = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    Matrix P = Matrix::Zero(2, 2);
    for (int j = 0; j < nu; ++j) {
      const Eigen::Vector2d g = Lw * Eigen::Vector2d(n01(rng), n01(rng));
      P += g * g.transpose();
    }
    const Matrix Sigma = P.inverse();
    const Matrix Lc = (Sigma / kappa).llt().matrixL();
    const Eigen::Vector2d mu = m + Lc * Eigen::Vector2d(n01(rng), n01(rng));
    acc1 += P * mu;
    acc2 += -0.5 * P;
    acc3 += -0.5 * mu.dot(P * mu);
    acc4 += -0.5 * std::log(Sigma.determinant());
  }
  const NiwExpectedStats e = niw_expected_stats(niw_from_standard({m, kappa, S, static_cast<double>(nu)}));
  CHECK((acc1 / n - e.prec_mean).cwiseAbs().maxCoeff() < 1e-2);
  CHECK((acc2 / n - e.neg_half_prec).cwiseAbs().maxCoeff() < 1e-2);
  CHECK(std::abs(acc3 / n - e.neg_half_quad) < 1e-2);
  CHECK(std::abs(acc4 / n - e.neg_half_logdet) < 1e-2);
}

TEST_CASE("NIW conversions round-trip") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const int d = 1 + t % 3;
    Vector m(d);
    for (int a = 0; a < d; ++a) m(a) = n01(rng);
    const NiwStandard s{m, 0.3 + std::abs(n01(rng)), random_spd(rng, d, 0.5), d + 1.0 + std::abs(n01(rng))};
    const NiwStandard back = niw_to_standard(niw_from_standard(s));
    CHECK((back.m - s.m).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(back.kappa - s.kappa) < 1e-10);
    CHECK((back.S - s.S).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(std::abs(back.nu - s.nu) < 1e-10);
  }
  NiwNat bad = niw_from_standard({Vector::Zero(2), 1.0, Matrix::Identity(2, 2), 3.0});
  bad.h2 = -Matrix::Identity(2, 2);
  CHECK_THROWS(niw_expected_stats(bad));
}

TEST_CASE("Gaussian conversions") {
  GaussianNat p{Vector::Zero(2), -0.5 * Matrix::Identity(2, 2)};
  GaussianMoments m = gaussian_nat_to_moment(p);
  CHECK(m.mean.isZero());
  CHECK(m.cov.isApprox(Matrix::Identity(2, 2)));
  p.h = Eigen::Vector2d(1, 0);
  CHECK(gaussian_nat_to_moment(p).mean.isApprox(Eigen::Vector2d(1, 0)));

  std::mt19937_64 rng(6);
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    const int d = 1 + t % 4;
    GaussianMoments x{Vector(d), random_spd(rng, d, 0.2)};
    for (int a = 0; a < d; ++a) x.mean(a) = n01(rng);
    const GaussianMoments back = gaussian_nat_to_moment(gaussian_moment_to_nat(x));
    CHECK((back.mean - x.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((back.cov - x.cov).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK_THROWS_AS(gaussian_nat_to_moment({Vector::Zero(2), 0.5 * Matrix::Identity(2, 2)}), LinAlgError);
}

TEST_CASE("log partition reference values") {
  CHECK(log_partition(BetaNat::from_shape(1, 1)) == doctest::Approx(0.0));
  CHECK(log_partition(DirichletNat::from_concentration(Vector::Constant(3, 1.0))) == doctest::Approx(-std::log(2.0)));
  CHECK(log_partition(GaussianNat{Vector::Zero(3), -0.5 * Matrix::Identity(3, 3)}) == doctest::Approx(0.0));
}

TEST_CASE("library gradient checks on the reference points") {
  CHECK(grad_log_partition_check(BetaNat::from_shape(3, 2), 1e-5) < 1e-5);
  CHECK(grad_log_partition_check(DirichletNat::from_concentration(Eigen::Vector3d(2, 3, 4)), 1e-5) < 1e-5);
  CHECK(grad_log_partition_check(niw_from_standard({Vector::Zero(2), 1.0, Matrix::Identity(2, 2), 5.0}), 1e-4) < 1e-3);
  CHECK_THROWS_AS(grad_log_partition_check(BetaNat::from_shape(1e-3, 2), 0.1), scdc::DomainError);
}

TEST_CASE("central differences of log Z equal expected statistics at random interior points") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> conc(0.5, 8.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const double eps = 1e-5;
  for (int t = 0; t < 20; ++t) {
    {
      const BetaNat p = BetaNat::from_shape(conc(rng), conc(rng));
      const Vector g = fd_gradient([](const Vector& x) { return log_partition(BetaNat{Eigen::Vector2d(x)}); }, p.eta, eps);
      CHECK((g - beta_expected_stats(p)).cwiseAbs().maxCoeff() < 1e-4);
    }
    {
      Vector a(4);
      for (int k = 0; k < 4; ++k) a(k) = conc(rng);
      const DirichletNat p = DirichletNat::from_concentration(a);
      const Vector g = fd_gradient([](const Vector& x) { return log_partition(DirichletNat{x}); }, p.eta, eps);
      CHECK((g - dirichlet_expected_stats(p)).cwiseAbs().maxCoeff() < 1e-4);
    }
    {
      Vector eta(5);
      for (int k = 0; k < 5; ++k) eta(k) = 2.0 * n01(rng);
      const Vector g = fd_gradient([](const Vector& x) { return log_partition(CategoricalNat{x}); }, eta, eps);
      CHECK((g - categorical_expected_stats({eta})).cwiseAbs().maxCoeff() < 1e-4);
    }
    {
      const int d = 2;
      GaussianMoments x{Vector(d), random_spd(rng, d, 0.3)};
      for (int a = 0; a < d; ++a) x.mean(a) = n01(rng);
      const GaussianNat p = gaussian_moment_to_nat(x);
      // Parameters (h, J upper triangle); E t = (mean, E xx^T with doubled off-diagonals).
      Vector flat(d + 3);
      flat << p.h, p.J(0, 0), p.J(0, 1), p.J(1, 1);
      const auto f = [](const Vector& v) {
        GaussianNat q;
        q.h = v.head(2);
        q.J.resize(2, 2);
        q.J << v(2), v(3), v(3), v(4);
        return log_partition(q);
      };
      const Matrix second = x.cov + x.mean * x.mean.transpose();
      Vector expected(d + 3);
      expected << x.mean, second(0, 0), 2.0 * second(0, 1), second(1, 1);
      CHECK((fd_gradient(f, flat, eps) - expected).cwiseAbs().maxCoeff() < 1e-4);
    }
    {
      const int d = 2;
      Vector m(d);
      for (int a = 0; a < d; ++a) m(a) = n01(rng);
      const NiwNat p = niw_from_standard({m, conc(rng) / 2.0, random_spd(rng, d, 0.5), d + 1.0 + conc(rng)});
      const Vector g = fd_gradient([d](const Vector& v) { return log_partition(niw_unflat(v, d)); }, niw_flat(p), 1e-4);
      CHECK((g - niw_stats_flat(niw_expected_stats(p))).cwiseAbs().maxCoeff() < 1e-3);
    }
  }
}
