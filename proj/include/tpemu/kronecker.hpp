#pragma once

#include "tpemu/types.hpp"

namespace tpemu {

// Dense Kronecker product, block (i,j) = A(i,j) * B. Reference implementation
// for tests and small problems; the emulators use the factored identities
// below and never materialize a large Kronecker inverse.
inline Matrix kronecker_product(const Matrix& a, const Matrix& b) {
  require(a.size() > 0 && b.size() > 0, "kronecker_product: empty factor");
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// vec convention: for v = vec(X) stacking the columns of X (rows(Kr) x rows(Kl)),
//   (Kl (x) Kr) vec(X) = vec(Kr X Kl^T).
// Both factors must be symmetric positive definite (pass cached Cholesky factors).

// (Kl (x) Kr)^{-1} vec(X) returned in matrix form, i.e. Kr^{-1} X Kl^{-1}.
inline Matrix kron_solve(const Eigen::LLT<Matrix>& llt_left, const Eigen::LLT<Matrix>& llt_right,
                         const Matrix& x) {
  require(x.rows() == llt_right.matrixL().rows() && x.cols() == llt_left.matrixL().rows(),
          "kron_solve: shape mismatch");
  Matrix t = llt_right.solve(x);
  return llt_left.solve(t.transpose()).transpose();
}

// vec(X)^T (Kl (x) Kr)^{-1} vec(X) = tr(Kl^{-1} X^T Kr^{-1} X).
inline double kron_quadform(const Eigen::LLT<Matrix>& llt_left,
                            const Eigen::LLT<Matrix>& llt_right, const Matrix& x) {
  require(x.rows() == llt_right.matrixL().rows() && x.cols() == llt_left.matrixL().rows(),
          "kron_quadform: shape mismatch");
  Matrix t = llt_right.solve(x);       // Kr^{-1} X
  Matrix g = x.transpose() * t;        // X^T Kr^{-1} X
  return llt_left.solve(g).trace();    // tr(Kl^{-1} X^T Kr^{-1} X)
}

// Cholesky of a symmetric positive definite matrix; throws naming the factor
// when the decomposition fails so callers can surface which matrix went bad.
inline Eigen::LLT<Matrix> checked_llt(const Matrix& m, const std::string& name) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw numeric_error("Cholesky factorization of " + name +
                        " failed (matrix not positive definite)");
  return llt;
}

// log det from a Cholesky factor.
inline double llt_log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
}

}  // namespace tpemu
