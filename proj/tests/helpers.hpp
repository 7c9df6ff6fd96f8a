#pragma once

#include <random>

#include "tpemu/types.hpp"

namespace test_helpers {

using tpemu::Matrix;
using tpemu::Vector;

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Matrix random_matrix(std::mt19937_64& g, int rows, int cols, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = u(g);
  return m;
}

inline Vector random_vector(std::mt19937_64& g, int n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = u(g);
  return v;
}

// Random symmetric positive definite matrix with a diagonal shift keeping the
// condition number moderate.
inline Matrix random_spd(std::mt19937_64& g, int n, double shift = 0.5) {
  Matrix a = random_matrix(g, n, n);
  return a * a.transpose() + shift * static_cast<double>(n) * Matrix::Identity(n, n);
}

}  // namespace test_helpers
