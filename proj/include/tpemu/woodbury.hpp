#pragma once

#include <cmath>
#include <optional>

#include "tpemu/types.hpp"

namespace tpemu {

/*
 * Low-rank refresh of a cached inverse when one diagonal block of a symmetric
 * positive definite matrix D changes by `delta`:
 *
 *   D' = D + P Q,   P = [0; P1; 0],  Q = [0  Q1  0]   (P1 Q1 = delta)
 *   D'^{-1} = D^{-1} - D^{-1} P (I + Q D^{-1} P)^{-1} Q D^{-1}
 *
 * With D^{-1} cached, only X = I + Q1 D22^{-1} P1 (rho x rho, rho = rank of
 * delta) has to be factorized, instead of re-inverting the full matrix.
 * det(D') = det(X) det(D), so log det comes along for free.
 */

struct BlockFactors {
  Matrix p1;  // n x rho
  Matrix q1;  // rho x n
  int rank = 0;
};

// delta = P1 Q1 via LU with partial pivoting; diagonal entries of U at or
// below 1e-12 * max|delta| are treated as zero and shrink the factors.
inline BlockFactors rank_revealing_lu(const Matrix& delta) {
  require(delta.rows() == delta.cols() && delta.rows() >= 1,
          "rank_revealing_lu: delta must be square and non-empty");
  const Eigen::Index n = delta.rows();
  double scale = delta.cwiseAbs().maxCoeff();
  if (scale == 0.0) return {Matrix(n, 0), Matrix(0, n), 0};
  const double tol = 1e-12 * scale;

  Eigen::PartialPivLU<Matrix> lu(delta);
  Matrix lu_mat = lu.matrixLU();
  // A = P^{-1} L U; fold the permutation into the L factor.
  Matrix l = Matrix::Identity(n, n);
  l.triangularView<Eigen::StrictlyLower>() = lu_mat.triangularView<Eigen::StrictlyLower>();
  Matrix pl = lu.permutationP().inverse() * l;

  Eigen::Index rank = n;
  while (rank > 0 && std::abs(lu_mat(rank - 1, rank - 1)) <= tol) --rank;

  BlockFactors out;
  out.rank = static_cast<int>(rank);
  out.p1 = pl.leftCols(rank);
  out.q1 = Matrix::Zero(rank, n);
  for (Eigen::Index i = 0; i < rank; ++i)
    for (Eigen::Index j = i; j < n; ++j) out.q1(i, j) = lu_mat(i, j);
  return out;
}

struct WoodburyUpdate {
  Matrix inverse;        // refreshed D'^{-1}
  double log_det_delta;  // log det(D') - log det(D)
};

namespace detail {

// Shared piece: X = I + Q1 D22^{-1} P1 with its LU factorization; throws when
// X is numerically singular so callers can fall back to a dense inverse.
inline Eigen::PartialPivLU<Matrix> factor_x(const Matrix& d_inv, const BlockFactors& f,
                                            Eigen::Index offset, Eigen::Index n) {
  Matrix d22 = d_inv.block(offset, offset, n, n);
  Matrix x = Matrix::Identity(f.rank, f.rank) + f.q1 * d22 * f.p1;
  Eigen::PartialPivLU<Matrix> xlu(x);
  Matrix xu = xlu.matrixLU();
  double xmax = xu.diagonal().cwiseAbs().maxCoeff();
  double xmin = xu.diagonal().cwiseAbs().minCoeff();
  if (!(xmin > 1e-13 * xmax))
    throw numeric_error("woodbury_block_update: capacitance matrix singular");
  return xlu;
}

}  // namespace detail

// Refresh the cached inverse of D after adding `delta` to diagonal block
// `block_index` (blocks of size block_size). D must stay positive definite.
inline WoodburyUpdate woodbury_block_update(const Matrix& d_inv, const Matrix& delta,
                                            int block_index, int block_size) {
  const Eigen::Index n = block_size, np = d_inv.rows();
  require(d_inv.rows() == d_inv.cols(), "woodbury_block_update: D_inv must be square");
  require(delta.rows() == n && delta.cols() == n, "woodbury_block_update: delta size mismatch");
  require(block_index >= 0 && (block_index + 1) * n <= np,
          "woodbury_block_update: block out of range");

  BlockFactors f = rank_revealing_lu(delta);
  if (f.rank == 0) return {d_inv, 0.0};

  const Eigen::Index off = block_index * n;
  auto xlu = detail::factor_x(d_inv, f, off, n);
  double det_x = xlu.determinant();
  if (!(det_x > 0.0))
    throw numeric_error("woodbury_block_update: update would lose positive definiteness");

  Matrix m = d_inv.middleCols(off, n);          // D^{-1} columns of the block
  Matrix t = m * f.p1;                          // D^{-1} P
  Matrix s = f.q1 * m.transpose();              // Q D^{-1} (D symmetric)
  Matrix out = d_inv - t * xlu.solve(s);
  out = 0.5 * (out + out.transpose()).eval();   // keep symmetry from drifting
  return {std::move(out), std::log(det_x)};
}

struct WoodburyEval {
  double log_det_delta;   // log det(D') - log det(D)
  double quadform_delta;  // b^T D'^{-1} b - b^T D^{-1} b
};

// Proposal fast path: the determinant and quadratic-form changes of a block
// update without materializing the refreshed inverse (O(n^3), not O((np)^2 n)).
inline std::optional<WoodburyEval> woodbury_eval(const Matrix& d_inv, const Matrix& delta,
                                                 int block_index, int block_size,
                                                 const Vector& b) {
  const Eigen::Index n = block_size;
  require(b.size() == d_inv.rows(), "woodbury_eval: vector size mismatch");
  require(delta.rows() == n && delta.cols() == n, "woodbury_eval: delta size mismatch");
  BlockFactors f = rank_revealing_lu(delta);
  if (f.rank == 0) return WoodburyEval{0.0, 0.0};

  const Eigen::Index off = block_index * n;
  try {
    auto xlu = detail::factor_x(d_inv, f, off, n);
    double det_x = xlu.determinant();
    if (!(det_x > 0.0)) return std::nullopt;
    Vector u = d_inv.middleRows(off, n) * b;          // (Q D^{-1} b) before Q1
    Vector w = xlu.solve(f.q1 * u);
    double corr = (f.p1.transpose() * u).dot(w);
    return WoodburyEval{std::log(det_x), -corr};
  } catch (const numeric_error&) {
    return std::nullopt;  // singular capacitance: caller re-evaluates densely
  }
}

}  // namespace tpemu
