#pragma once

// Independent reference computations for the test suite: numerical
// quadrature, brute-force enumeration and finite differences. Nothing here
// calls into the library under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454836;

/// Integral over the real line.
inline double integrate_real(const std::function<double(double)>& f) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -kInf, kInf, 15, 1e-13);
}

/// Integral over (0, inf).
inline double integrate_positive(const std::function<double(double)>& f) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, kInf, 15, 1e-13);
}

/// Integral over (0, 1), tolerant of integrable endpoint singularities.
inline double integrate_unit(const std::function<double(double)>& f) {
  static boost::math::quadrature::tanh_sinh<double> ts;
  auto g = [&](double x) { return f(x); };
  return ts.integrate(g, 0.0, 1.0, 1e-13);
}

inline double log_beta_density(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

inline double log_normal_density(double x, double mean, double var) {
  return -0.5 * (kLog2Pi + std::log(var) + (x - mean) * (x - mean) / var);
}

/// sigma^2 ~ InvGamma(shape, scale).
inline double log_inv_gamma_density(double s, double shape, double scale) {
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(s) - scale / s;
}

/// E[g(a)] for a ~ Beta(a, b).
inline double beta_expect(double a, double b, const std::function<double(double)>& g) {
  return integrate_unit([&](double x) { return g(x) * std::exp(log_beta_density(x, a, b)); });
}

/// One-dimensional Normal-Inverse-Wishart: sigma^2 ~ InvGamma(nu/2, S/2),
/// mu | sigma^2 ~ N(m, sigma^2 / kappa).
struct Nig {
  double m, kappa, S, nu;

  double log_density(double mu, double s) const {
    return log_inv_gamma_density(s, 0.5 * nu, 0.5 * S) + log_normal_density(mu, m, s / kappa);
  }

  /// E[g(mu, sigma^2)] by nested quadrature.
  double expect(const std::function<double(double, double)>& g) const {
    return integrate_positive([&](double s) {
      const double ps = std::exp(log_inv_gamma_density(s, 0.5 * nu, 0.5 * S));
      if (ps == 0.0) return 0.0;
      const double inner = integrate_real([&](double mu) { return g(mu, s) * std::exp(log_normal_density(mu, m, s / kappa)); });
      return ps * inner;
    });
  }
};

inline double kl_beta_quad(double a1, double b1, double a2, double b2) {
  return beta_expect(a1, b1, [&](double x) { return log_beta_density(x, a1, b1) - log_beta_density(x, a2, b2); });
}

inline double kl_nig_quad(const Nig& q, const Nig& p) {
  return q.expect([&](double mu, double s) { return q.log_density(mu, s) - p.log_density(mu, s); });
}

/// KL(N(m1, v1) || N(m2, v2)) in one dimension.
inline double kl_normal(double m1, double v1, double m2, double v2) {
  return 0.5 * (std::log(v2 / v1) + (v1 + (m1 - m2) * (m1 - m2)) / v2 - 1.0);
}

/// Every permutation of 0..n-1 in lexicographic order.
inline std::vector<std::vector<int>> permutations(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

/// Every assignment in {0..K-1}^n, first coordinate fastest.
inline std::vector<std::vector<int>> assignments(int n, int K) {
  std::vector<std::vector<int>> out;
  std::vector<int> z(static_cast<std::size_t>(n), 0);
  while (true) {
    out.push_back(z);
    int a = 0;
    while (a < n && ++z[static_cast<std::size_t>(a)] == K) z[static_cast<std::size_t>(a++)] = 0;
    if (a == n) break;
  }
  return out;
}

/// Every size-k subset of 0..n-1.
inline std::vector<std::vector<std::size_t>> subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<bool> mask(n, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(k), true);
  do {
    std::vector<std::size_t> s;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) s.push_back(i);
    }
    out.push_back(s);
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return out;
}

/// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(std::vector<double>)>& f, std::vector<double> x,
                                 std::size_t i, double eps) {
  const double x0 = x[i];
  x[i] = x0 + eps;
  const double up = f(x);
  x[i] = x0 - eps;
  const double down = f(x);
  return (up - down) / (2.0 * eps);
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
