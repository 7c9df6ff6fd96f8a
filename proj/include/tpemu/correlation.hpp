#pragma once

#include <cmath>

#include "tpemu/types.hpp"

namespace tpemu {

// Anisotropic correlation on the unit box,
//   rho(x, x'; theta) = prod_j theta_j^(4 (x_j - x'_j)^2),   theta_j in (0, 1).
// theta_j is the correlation between two points half a box apart in dimension j
// (exponent 4 * 0.25 = 1); theta_j^4 is the corner-to-corner correlation.
struct CorrelationParams {
  Vector theta;
  double nugget = 1e-6;  // added to the diagonal of correlation matrices
};

inline void check_theta(const Vector& theta) {
  require(theta.size() >= 1, "correlation: theta must be non-empty");
  for (Eigen::Index j = 0; j < theta.size(); ++j)
    require(theta[j] > 0.0 && theta[j] < 1.0,
            "correlation: theta[" + std::to_string(j) + "] must lie in (0,1)");
}

inline double sq_exp_correlation(const Vector& x, const Vector& y, const Vector& theta) {
  require(x.size() == y.size() && x.size() == theta.size(),
          "sq_exp_correlation: dimension mismatch");
  check_theta(theta);
  double log_rho = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double d = x[j] - y[j];
    log_rho += 4.0 * d * d * std::log(theta[j]);
  }
  return std::exp(log_rho);
}

// Correlations between the rows of a (na x d) and b (nb x d); no nugget here,
// cross blocks have no self-pairs.
inline Matrix cross_correlation(const Matrix& a, const Matrix& b, const Vector& theta) {
  require(a.cols() == b.cols() && a.cols() == theta.size(),
          "cross_correlation: dimension mismatch");
  check_theta(theta);
  Vector log_theta = theta.array().log().matrix();
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < theta.size(); ++k) {
        double d = a(i, k) - b(j, k);
        s += 4.0 * d * d * log_theta[k];
      }
      out(i, j) = std::exp(s);
    }
  return out;
}

// n x n correlation matrix of a design (rows = points) with `nugget` added to
// the diagonal. Symmetric positive definite for nugget > 0.
inline Matrix correlation_matrix(const Matrix& design, const CorrelationParams& params) {
  require(design.rows() >= 1, "correlation_matrix: design needs at least one row");
  require(design.cols() == params.theta.size(),
          "correlation_matrix: design/theta dimension mismatch");
  require(params.nugget >= 0.0, "correlation_matrix: nugget must be non-negative");
  check_theta(params.theta);
  const Eigen::Index n = design.rows();
  Vector log_theta = params.theta.array().log().matrix();
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out(i, i) = 1.0 + params.nugget;
    for (Eigen::Index j = 0; j < i; ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < design.cols(); ++k) {
        double d = design(i, k) - design(j, k);
        s += 4.0 * d * d * log_theta[k];
      }
      double rho = std::exp(s);
      out(i, j) = rho;
      out(j, i) = rho;
    }
  }
  return out;
}

}  // namespace tpemu
