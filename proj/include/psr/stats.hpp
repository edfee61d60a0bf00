#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace psr {

// Lanczos approximation, |error| < 2e-10 over the positive axis.
inline double log_gamma(double x) {
  static const double c[9] = {0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
                              771.32342877765313,   -176.61502916214059, 12.507343278686905,
                              -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};
  if (x < 0.5) return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
  x -= 1.0;
  double a = c[0];
  const double t = x + 7.5;
  for (int i = 1; i < 9; ++i) a += c[i] / (x + static_cast<double>(i));
  return 0.5 * std::log(2.0 * M_PI) + (x + 0.5) * std::log(t) - t + std::log(a);
}

// Regularized lower incomplete gamma P(a, x) via series / continued fraction.
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double lg = log_gamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  // Lentz continued fraction for Q(a,x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  const double q = std::exp(-x + a * std::log(x) - lg) * h;
  return 1.0 - q;
}

inline double chi2_cdf(int dof, double x) {
  if (dof < 1) throw std::invalid_argument("chi2_cdf: dof must be >= 1");
  if (x <= 0.0) return 0.0;
  return gamma_p(0.5 * static_cast<double>(dof), 0.5 * x);
}

// Upper-p quantile by bisection on the CDF.
inline double chi2_quantile(int dof, double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("chi2_quantile: p in (0,1)");
  double lo = 0.0;
  double hi = static_cast<double>(dof) + 10.0;
  while (chi2_cdf(dof, hi) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi2_cdf(dof, mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Closed-form KL( N(mu0, cov0) || N(mu1, cov1) ). Singular covariances are
// ridge-regularized with 1e-6 * I.
inline double gaussian_kl(const Eigen::VectorXd& mu0, Eigen::MatrixXd cov0,
                          const Eigen::VectorXd& mu1, Eigen::MatrixXd cov1) {
  const Eigen::Index d = mu0.size();
  if (mu1.size() != d || cov0.rows() != d || cov0.cols() != d || cov1.rows() != d || cov1.cols() != d)
    throw std::invalid_argument("gaussian_kl: dimension mismatch");
  auto chol = [](Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
      m += 1e-6 * Eigen::MatrixXd::Identity(m.rows(), m.cols());
      llt.compute(m);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("gaussian_kl: covariance not positive definite");
    }
    return llt;
  };
  Eigen::LLT<Eigen::MatrixXd> l1 = chol(cov1);
  Eigen::LLT<Eigen::MatrixXd> l0 = chol(cov0);
  auto log_det = [](const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  const double trace_term = l1.solve(cov0).trace();
  const Eigen::VectorXd diff = mu1 - mu0;
  const double maha = diff.dot(l1.solve(diff));
  return 0.5 * (trace_term + maha - static_cast<double>(d) + log_det(l1) - log_det(l0));
}

// Squared Mahalanobis distance under a fixed covariance.
inline double mahalanobis_sq(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                             const Eigen::LLT<Eigen::MatrixXd>& cov_llt) {
  const Eigen::VectorXd diff = x - mean;
  return diff.dot(cov_llt.solve(diff));
}

}  // namespace psr
