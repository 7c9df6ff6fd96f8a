#pragma once

#include <cmath>
#include <memory>
#include <set>
#include <vector>

#include "tpemu/correlation.hpp"
#include "tpemu/types.hpp"

namespace tpemu {

// Output locations shared by all runs. `unit` holds the per-dimension affine
// image of the physical coordinates on [0,1]; all kernels and polynomial
// terms operate on these standardized coordinates.
struct OutputGrid {
  Matrix physical;
  Matrix unit;
  bool lattice = false;

  Eigen::Index r() const { return physical.rows(); }
  Eigen::Index q() const { return physical.cols(); }
};

namespace detail {

inline std::vector<std::vector<double>> dim_values(const Matrix& pts) {
  std::vector<std::vector<double>> vals(pts.cols());
  for (Eigen::Index j = 0; j < pts.cols(); ++j) {
    std::set<double> s;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) s.insert(pts(i, j));
    vals[j].assign(s.begin(), s.end());
  }
  return vals;
}

inline bool detect_lattice(const Matrix& pts) {
  auto vals = dim_values(pts);
  std::size_t prod = 1;
  for (auto& v : vals) {
    prod *= v.size();
    if (prod > static_cast<std::size_t>(pts.rows())) return false;
  }
  if (prod != static_cast<std::size_t>(pts.rows())) return false;
  std::set<std::size_t> seen;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    std::size_t lin = 0;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      auto& v = vals[j];
      auto it = std::lower_bound(v.begin(), v.end(), pts(i, j));
      lin = lin * v.size() + static_cast<std::size_t>(it - v.begin());
    }
    seen.insert(lin);
  }
  return seen.size() == static_cast<std::size_t>(pts.rows());
}

}  // namespace detail

inline OutputGrid make_output_grid(const Matrix& physical) {
  require(physical.rows() >= 1 && physical.cols() >= 1, "output grid: empty coordinates");
  OutputGrid g;
  g.physical = physical;
  g.unit = physical;
  for (Eigen::Index j = 0; j < physical.cols(); ++j) {
    double lo = physical.col(j).minCoeff(), hi = physical.col(j).maxCoeff();
    if (hi > lo)
      g.unit.col(j) = (physical.col(j).array() - lo) / (hi - lo);
    else
      g.unit.col(j).setConstant(0.5);
  }
  g.lattice = detail::detect_lattice(physical);
  return g;
}

// Regular lattice with counts[j] points per dimension placed at the stratum
// midpoints low + (i + 0.5) (high - low) / counts[j]; no point ever sits on
// the box boundary. Rows iterate the last dimension fastest.
inline OutputGrid midpoint_lattice(const std::vector<int>& counts, const Vector& low,
                                   const Vector& high) {
  require(!counts.empty() && static_cast<Eigen::Index>(counts.size()) == low.size() &&
              low.size() == high.size(),
          "midpoint_lattice: counts/extent size mismatch");
  Eigen::Index r = 1;
  for (int c : counts) {
    require(c >= 1, "midpoint_lattice: counts must be positive");
    r *= c;
  }
  const int q = static_cast<int>(counts.size());
  Matrix phys(r, q);
  for (Eigen::Index idx = 0; idx < r; ++idx) {
    Eigen::Index rem = idx;
    for (int j = q - 1; j >= 0; --j) {
      Eigen::Index i = rem % counts[j];
      rem /= counts[j];
      phys(idx, j) = low[j] + (static_cast<double>(i) + 0.5) * (high[j] - low[j]) / counts[j];
    }
  }
  return make_output_grid(phys);
}

// Rows of a full lattice closest to an ideal coarser midpoint lattice over
// the same box; used to train on a sub-grid of the response locations.
inline std::vector<int> nested_subgrid_indices(const OutputGrid& grid,
                                               const std::vector<int>& sub_counts) {
  require(grid.lattice, "nested_subgrid_indices: grid must be a lattice");
  require(static_cast<Eigen::Index>(sub_counts.size()) == grid.q(),
          "nested_subgrid_indices: dimension mismatch");
  auto vals = detail::dim_values(grid.physical);

  // recover the box: midpoints imply half-spacing margins beyond the extremes
  std::vector<std::vector<int>> picks(grid.q());
  for (Eigen::Index j = 0; j < grid.q(); ++j) {
    auto& v = vals[j];
    double lo = v.front(), hi = v.back();
    double h = v.size() > 1 ? (hi - lo) / static_cast<double>(v.size() - 1) : 0.0;
    double box_lo = lo - 0.5 * h, box_hi = hi + 0.5 * h;
    require(sub_counts[j] >= 1 && sub_counts[j] <= static_cast<int>(v.size()),
            "nested_subgrid_indices: sub-grid finer than the grid");
    for (int s = 0; s < sub_counts[j]; ++s) {
      double target = box_lo + (s + 0.5) * (box_hi - box_lo) / sub_counts[j];
      int best = 0;
      for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (std::abs(v[i] - target) < std::abs(v[best] - target)) best = i;
      picks[j].push_back(best);
    }
  }

  std::vector<int> strides(grid.q());
  Eigen::Index acc = 1;
  for (Eigen::Index j = grid.q() - 1; j >= 0; --j) {
    strides[j] = static_cast<int>(acc);
    acc *= static_cast<Eigen::Index>(vals[j].size());
  }

  std::vector<int> out;
  std::vector<int> cursor(grid.q(), 0);
  while (true) {
    int lin = 0;
    for (Eigen::Index j = 0; j < grid.q(); ++j) lin += picks[j][cursor[j]] * strides[j];
    out.push_back(lin);
    Eigen::Index j = grid.q() - 1;
    while (j >= 0 && ++cursor[j] == static_cast<Eigen::Index>(picks[j].size())) {
      cursor[j] = 0;
      --j;
    }
    if (j < 0) break;
  }
  std::set<int> uniq(out.begin(), out.end());
  require(uniq.size() == out.size(), "nested_subgrid_indices: sub-grid points collide");
  return out;
}

// Radial basis function of thin-plate spline smoothing with order l in q
// dimensions (2l > q):
//   even q:  (-1)^(l+1+q/2) / (2^(2l-1) pi^(q/2) (l-1)! (l-q/2)!) t^(2l-q) log t
//   odd q:   Gamma(q/2 - l) / (2^(2l) pi^(q/2) (l-1)!)            t^(2l-q)
// with the t -> 0 limit value 0.
inline double tprs_eta(double t, int l, int q) {
  require(t >= 0.0, "tprs_eta: distance must be non-negative");
  require(l >= 1 && q >= 1 && 2 * l > q, "tprs_eta: requires l >= 1, q >= 1 and 2l > q");
  if (t == 0.0) return 0.0;
  auto fact = [](int k) { return std::tgamma(static_cast<double>(k) + 1.0); };
  if (q % 2 == 0) {
    double sign = ((l + 1 + q / 2) % 2 == 0) ? 1.0 : -1.0;
    double denom = std::pow(2.0, 2 * l - 1) * std::pow(M_PI, q / 2.0) * fact(l - 1) *
                   fact(l - q / 2);
    return sign / denom * std::pow(t, 2 * l - q) * std::log(t);
  }
  double coef = std::tgamma(q / 2.0 - l) /
                (std::pow(2.0, 2 * l) * std::pow(M_PI, q / 2.0) * fact(l - 1));
  return coef * std::pow(t, 2 * l - q);
}

enum class BasisKind { PCA, TPRS };

struct BasisSet {
  BasisKind kind = BasisKind::PCA;
  Matrix vectors;  // r x p, columns are the basis functions evaluated on the grid
  int m = 0;       // TPRS: spline (non-polynomial) columns; vectors also holds cols(T) polynomial ones
  int l = 2;       // TPRS smoothing order
  Matrix u, z, t;  // TPRS auxiliaries: retained eigenvectors, null-space basis, polynomial block
  Vector d;        // retained eigenvalues of the radial-basis matrix, |.|-descending
  Vector singular_values;  // PCA spectrum (diagnostic)

  int p() const { return static_cast<int>(vectors.cols()); }
};

namespace detail {

// Exponent tuples of total degree < l over q variables, graded
// lexicographically; for l = 2 this is [1 | s_1 .. s_q].
inline std::vector<std::vector<int>> monomial_exponents(int q, int l) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(q, 0);
  for (int deg = 0; deg < l; ++deg) {
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == q) {
        if (left == 0) out.push_back(cur);
        return;
      }
      for (int e = left; e >= 0; --e) {
        cur[pos] = e;
        rec(pos + 1, left - e);
      }
      cur[pos] = 0;
    };
    rec(0, deg);
  }
  return out;
}

inline Matrix polynomial_block(const OutputGrid& grid, int l) {
  auto expo = monomial_exponents(static_cast<int>(grid.q()), l);
  Matrix t(grid.r(), static_cast<Eigen::Index>(expo.size()));
  for (std::size_t c = 0; c < expo.size(); ++c)
    for (Eigen::Index i = 0; i < grid.r(); ++i) {
      double v = 1.0;
      for (Eigen::Index j = 0; j < grid.q(); ++j)
        for (int e = 0; e < expo[c][j]; ++e) v *= grid.unit(i, j);
      t(i, static_cast<Eigen::Index>(c)) = v;
    }
  if (!grid.lattice) {
    // irregular grids: orthonormalize the monomials to keep the block well
    // conditioned (same span, so the constraint semantics do not change)
    Eigen::HouseholderQR<Matrix> qr(t);
    t = qr.householderQ() * Matrix::Identity(grid.r(), t.cols());
  }
  return t;
}

}  // namespace detail

inline int tprs_polynomial_count(int q, int l) {
  return static_cast<int>(detail::monomial_exponents(q, l).size());
}

// Full eigendecomposition of the radial-basis matrix E on a grid, columns
// sorted by |eigenvalue| descending (ties keep the lower original index).
// Depends only on (grid, l), so one spectrum serves every basis size m and
// can be shared across experiment replicates.
struct TprsSpectrum {
  Vector values;
  Matrix vectors;
  int l = 2;
};

inline std::shared_ptr<const TprsSpectrum> tprs_spectrum(const OutputGrid& grid, int l = 2) {
  const Eigen::Index r = grid.r();
  const int q = static_cast<int>(grid.q());
  require(2 * l > q, "tprs_spectrum: requires 2l > q");
  Matrix e(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    e(i, i) = 0.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      double v = tprs_eta((grid.unit.row(i) - grid.unit.row(j)).norm(), l, q);
      e(i, j) = v;
      e(j, i) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(e);
  if (eig.info() != Eigen::Success)
    throw numeric_error("tprs_spectrum: eigendecomposition failed");

  std::vector<Eigen::Index> order(r);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(eig.eigenvalues()[a]) > std::abs(eig.eigenvalues()[b]);
  });
  auto spec = std::make_shared<TprsSpectrum>();
  spec->l = l;
  spec->values.resize(r);
  spec->vectors.resize(r, r);
  for (Eigen::Index k = 0; k < r; ++k) {
    spec->values[k] = eig.eigenvalues()[order[k]];
    spec->vectors.col(k) = eig.eigenvectors().col(order[k]);
  }
  return spec;
}

// Rank-m thin-plate regression spline basis on the grid: the m + cols(T)
// eigenpairs of E largest by |eigenvalue| are retained, and Z spans the null
// space of T^T U so the spline columns U D Z satisfy the polynomial
// orthogonality constraint exactly. Basis = [U D Z | T], p = m + cols(T).
inline BasisSet tprs_basis(const OutputGrid& grid, int m, int l, const TprsSpectrum& spectrum) {
  const Eigen::Index r = grid.r();
  require(spectrum.l == l && spectrum.values.size() == r, "tprs_basis: spectrum mismatch");
  require(m >= 1, "tprs_basis: need at least one spline column");
  Matrix t = detail::polynomial_block(grid, l);
  const Eigen::Index big_m = t.cols();
  require(m + big_m <= r, "tprs_basis: m + polynomial columns exceeds grid size");

  const Eigen::Index keep = m + big_m;
  BasisSet basis;
  basis.kind = BasisKind::TPRS;
  basis.m = m;
  basis.l = l;
  basis.t = t;
  basis.u = spectrum.vectors.leftCols(keep);
  basis.d = spectrum.values.head(keep);

  Matrix constraint = t.transpose() * basis.u;  // cols(T) x keep
  Eigen::FullPivLU<Matrix> lu(constraint);
  Matrix kernel = lu.kernel();
  if (kernel.cols() < m)
    throw numeric_error("tprs_basis: null space of the polynomial constraint is too small");
  Eigen::HouseholderQR<Matrix> qr(kernel);
  basis.z = Matrix(qr.householderQ() * Matrix::Identity(keep, kernel.cols())).leftCols(m);

  double viol = (constraint * basis.z).cwiseAbs().maxCoeff();
  if (viol > 1e-8)
    throw numeric_error("tprs_basis: polynomial constraint violated (" + std::to_string(viol) +
                        ")");

  basis.vectors.resize(r, m + big_m);
  basis.vectors.leftCols(m) = basis.u * basis.d.asDiagonal() * basis.z;
  basis.vectors.rightCols(big_m) = t;
  return basis;
}

inline BasisSet tprs_basis(const OutputGrid& grid, int m, int l = 2) {
  return tprs_basis(grid, m, l, *tprs_spectrum(grid, l));
}

// Coefficient scale matrix for the separable thin-plate emulator: spatial
// correlation Q (parameters nu, on unit-box grid coordinates) transferred to
// the spline coefficients through the orthonormal map U Z, identity on the
// polynomial block.
inline Matrix tprs_scale_matrix(const BasisSet& basis, const OutputGrid& grid,
                                const Vector& nu) {
  require(basis.kind == BasisKind::TPRS, "tprs_scale_matrix: needs a thin-plate basis");
  require(nu.size() == grid.q(), "tprs_scale_matrix: nu dimension mismatch");
  check_theta(nu);
  Matrix q_mat = cross_correlation(grid.unit, grid.unit, nu);
  Matrix uz = basis.u * basis.z;  // r x m, orthonormal columns
  const int p = basis.p();
  Matrix v = Matrix::Identity(p, p);
  Matrix top = uz.transpose() * q_mat * uz;
  v.topLeftCorner(basis.m, basis.m) = 0.5 * (top + top.transpose());
  return v;
}

// Principal-component basis of standardized responses z (runs x locations):
// left singular vectors of z^T scaled by their singular values over sqrt(n).
// Least-squares projection then recovers the sqrt(n)-scaled right singular
// vectors as coefficients, so each coefficient series has variance near one.
inline BasisSet pca_basis(const Matrix& z, int p) {
  const Eigen::Index n = z.rows(), r = z.cols();
  require(n >= 1 && r >= 1, "pca_basis: empty response matrix");
  require(p >= 1 && p <= std::min(n, r), "pca_basis: p must lie in [1, min(n, r)]");
  Eigen::BDCSVD<Matrix> svd(z.transpose(), Eigen::ComputeThinU);
  BasisSet basis;
  basis.kind = BasisKind::PCA;
  basis.singular_values = svd.singularValues();
  basis.vectors = svd.matrixU().leftCols(p) *
                  (svd.singularValues().head(p) / std::sqrt(static_cast<double>(n)))
                      .asDiagonal();
  return basis;
}

// Unpenalized least-squares coefficients of each run on the basis columns
// (runs x p). The residual of every run is orthogonal to the basis span.
inline Matrix project_coefficients(const BasisSet& basis, const Matrix& z) {
  require(z.cols() == basis.vectors.rows(), "project_coefficients: location count mismatch");
  Eigen::ColPivHouseholderQR<Matrix> qr(basis.vectors);
  return qr.solve(z.transpose()).transpose();
}

inline Matrix reconstruct(const BasisSet& basis, const Matrix& coeffs) {
  require(coeffs.cols() == basis.vectors.cols(), "reconstruct: coefficient count mismatch");
  return coeffs * basis.vectors.transpose();
}

}  // namespace tpemu
