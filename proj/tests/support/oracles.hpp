#pragma once

// Test-only reference implementations, kept independent of the library's
// computational paths: Gauss-Hermite quadrature for the latent-field
// integrals, a closed-form 2x2 Cholesky, and the reference normal CDF.

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace oracles {

inline double ref_normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

/// Gauss-Hermite nodes/weights for weight exp(-x^2) via the Golub-Welsch
/// symmetric tridiagonal eigenproblem.
inline void gauss_hermite(int n, std::vector<double>& nodes,
                          std::vector<double>& weights) {
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    jac(i, i - 1) = b;
    jac(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  nodes.resize(n);
  weights.resize(n);
  const double sqrt_pi = std::sqrt(3.14159265358979323846);
  for (int i = 0; i < n; ++i) {
    nodes[i] = es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = sqrt_pi * v0 * v0;
  }
}

struct Chol2 {
  double a, b, c;  // lower [[a,0],[b,c]]
};

inline Chol2 chol2(double s11, double s12, double s22) {
  Chol2 out;
  out.a = std::sqrt(s11);
  out.b = s12 / out.a;
  out.c = std::sqrt(s22 - out.b * out.b);
  return out;
}

/// E[f(v)] for v ~ N(mu 1, Sigma) in 2-D via tensorized Gauss-Hermite.
template <typename F>
double gh_expect_2d(double mu, double s11, double s12, double s22, int n,
                    F&& f) {
  std::vector<double> x, w;
  gauss_hermite(n, x, w);
  const Chol2 C = chol2(s11, s12, s22);
  const double rt2 = std::sqrt(2.0);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double u1 = rt2 * x[i];
      const double u2 = rt2 * x[j];
      const double v1 = mu + C.a * u1;
      const double v2 = mu + C.b * u1 + C.c * u2;
      acc += w[i] * w[j] * f(v1, v2);
    }
  }
  return acc / 3.14159265358979323846;
}

/// E[f(v)] for scalar v ~ N(mu, s2).
template <typename F>
double gh_expect_1d(double mu, double s2, int n, F&& f) {
  std::vector<double> x, w;
  gauss_hermite(n, x, w);
  const double rt2s = std::sqrt(2.0 * s2);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += w[i] * f(mu + rt2s * x[i]);
  return acc / std::sqrt(3.14159265358979323846);
}

inline double binom_pmf(int y, int n, double p) {
  double c = std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0);
  double lp = c;
  if (y > 0) lp += y * std::log(p);
  if (y < n) lp += (n - y) * std::log1p(-p);
  return std::exp(lp);
}

}  // namespace oracles
