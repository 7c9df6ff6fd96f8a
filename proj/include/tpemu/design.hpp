#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

#include "tpemu/types.hpp"

namespace tpemu {

struct InputRanges {
  Vector low, high;

  Eigen::Index dims() const { return low.size(); }
  void check() const {
    require(low.size() == high.size() && low.size() >= 1, "ranges: low/high size mismatch");
    for (Eigen::Index j = 0; j < low.size(); ++j)
      require(low[j] < high[j], "ranges: low must be strictly below high in dimension " +
                                    std::to_string(j));
  }
};

// Affine map of physical inputs (rows) onto the unit box and back.
inline Matrix to_unit_box(const Matrix& x, const InputRanges& r) {
  r.check();
  require(x.cols() == r.dims(), "to_unit_box: dimension mismatch");
  Matrix u = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    u.col(j) = (x.col(j).array() - r.low[j]) / (r.high[j] - r.low[j]);
  return u;
}

inline Matrix from_unit_box(const Matrix& u, const InputRanges& r) {
  r.check();
  require(u.cols() == r.dims(), "from_unit_box: dimension mismatch");
  Matrix x = u;
  for (Eigen::Index j = 0; j < u.cols(); ++j)
    x.col(j) = u.col(j).array() * (r.high[j] - r.low[j]) + r.low[j];
  return x;
}

namespace detail {

inline Matrix pairwise_dist2(const Matrix& pts) {
  const Eigen::Index n = pts.rows();
  Matrix d2 = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) {
      double s = (pts.row(i) - pts.row(j)).squaredNorm();
      d2(i, j) = s;
      d2(j, i) = s;
    }
  return d2;
}

inline double min_offdiag(const Matrix& d2) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < d2.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) m = std::min(m, d2(i, j));
  return m;
}

// One random Latin hypercube on the unit box: each column gets exactly one
// point per stratum [i/n, (i+1)/n), placed uniformly within the stratum.
inline Matrix lhs_candidate(int n, int d, std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix pts(n, d);
  std::vector<int> strata(n);
  for (int c = 0; c < d; ++c) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), g);
    for (int i = 0; i < n; ++i) pts(i, c) = (strata[i] + u(g)) / n;
  }
  return pts;
}

// Greedy pairwise swaps within a column. Only swaps touching a row of a
// current closest pair can raise the minimum distance, which keeps each round
// cheap; swapping whole entries preserves the Latin property of every column.
inline double maximin_swap_refine(Matrix& pts, int max_rounds = 60) {
  const int n = static_cast<int>(pts.rows()), d = static_cast<int>(pts.cols());
  Matrix d2 = pairwise_dist2(pts);
  double min2 = n > 1 ? min_offdiag(d2) : std::numeric_limits<double>::infinity();
  if (n < 3) return min2;

  for (int round = 0; round < max_rounds; ++round) {
    const double tol = min2 * (1.0 + 1e-12);
    std::vector<std::pair<int, int>> argmin;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < i; ++j)
        if (d2(i, j) <= tol) argmin.emplace_back(j, i);

    std::vector<int> rows;
    for (auto& pr : argmin) {
      rows.push_back(pr.first);
      rows.push_back(pr.second);
    }
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

    double best_min2 = min2;
    int best_u = -1, best_t = -1, best_c = -1;
    Vector du(n), dt(n);
    for (int u : rows) {
      for (int c = 0; c < d; ++c) {
        for (int t = 0; t < n; ++t) {
          if (t == u) continue;
          // every current closest pair must involve u or t, otherwise the
          // global minimum cannot move
          bool covered = true;
          for (auto& pr : argmin)
            if (pr.first != u && pr.second != u && pr.first != t && pr.second != t) {
              covered = false;
              break;
            }
          if (!covered) continue;

          std::swap(pts(u, c), pts(t, c));
          double cand = std::numeric_limits<double>::infinity();
          for (int i = 0; i < n; ++i) {
            if (i != u) cand = std::min(cand, (pts.row(u) - pts.row(i)).squaredNorm());
            if (i != t && i != u) cand = std::min(cand, (pts.row(t) - pts.row(i)).squaredNorm());
          }
          std::swap(pts(u, c), pts(t, c));
          if (cand <= best_min2 * (1.0 + 1e-12)) continue;

          // candidate improves the changed pairs; confirm against unchanged ones
          double unchanged = std::numeric_limits<double>::infinity();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < i; ++j)
              if (i != u && i != t && j != u && j != t) unchanged = std::min(unchanged, d2(i, j));
          double total = std::min(cand, unchanged);
          if (total > best_min2) {
            best_min2 = total;
            best_u = u;
            best_t = t;
            best_c = c;
          }
        }
      }
    }
    if (best_u < 0) break;
    std::swap(pts(best_u, best_c), pts(best_t, best_c));
    for (int i = 0; i < n; ++i) {
      for (int t : {best_u, best_t}) {
        if (i == t) continue;
        double s = (pts.row(t) - pts.row(i)).squaredNorm();
        d2(t, i) = s;
        d2(i, t) = s;
      }
    }
    min2 = min_offdiag(d2);
  }
  return min2;
}

}  // namespace detail

// Maximin Latin hypercube: `iterations` random candidates, each polished by
// greedy column swaps, keeping the design with the largest minimum pairwise
// distance (unit-box metric). Candidate c uses its own sub-seeded generator,
// so the winner over `iterations` candidates is non-decreasing in
// `iterations` for a fixed seed, and candidates can be evaluated in any
// order. Ties keep the lowest candidate index.
inline Matrix maximin_lhs(int n, const InputRanges& ranges, int iterations,
                          std::uint64_t seed) {
  ranges.check();
  require(n >= 1, "maximin_lhs: n must be at least 1");
  require(iterations >= 1, "maximin_lhs: iterations must be at least 1");
  const int d = static_cast<int>(ranges.dims());

  Matrix best;
  double best_score = -1.0;
  for (int c = 0; c < iterations; ++c) {
    std::mt19937_64 g(mix_seed(seed, static_cast<std::uint64_t>(c)));
    Matrix pts = detail::lhs_candidate(n, d, g);
    double score = detail::maximin_swap_refine(pts);
    if (score > best_score) {
      best_score = score;
      best = std::move(pts);
    }
  }
  return from_unit_box(best, ranges);
}

// n independent uniform draws over the ranges; rows filled in order.
inline Matrix monte_carlo_sample(int n, const InputRanges& ranges, std::uint64_t seed) {
  ranges.check();
  require(n >= 1, "monte_carlo_sample: n must be at least 1");
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(n, ranges.dims());
  for (int i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < ranges.dims(); ++j)
      x(i, j) = ranges.low[j] + (ranges.high[j] - ranges.low[j]) * u(g);
  return x;
}

// Per-output-location centering and scaling fitted on training responses,
// with an optional log(1+y) transform applied first. Constant locations are
// flagged and standardized to all-zeros; predictions there invert to the
// training constant.
struct StandardizationParams {
  Vector mean, sd;               // per location; sd stored as 1 where degenerate
  std::vector<char> degenerate;  // constant training columns
  bool log1p = false;
  Vector input_low, input_high;  // affine input map onto the unit box
};

namespace detail {
inline Matrix maybe_log1p(const Matrix& y, bool use_log1p) {
  if (!use_log1p) return y;
  Matrix out = y;
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.cols(); ++j) {
      require(y(i, j) > -1.0, "standardize: log1p requires responses > -1, got " +
                                  std::to_string(y(i, j)));
      out(i, j) = std::log1p(y(i, j));
    }
  return out;
}
}  // namespace detail

inline std::pair<Matrix, StandardizationParams> standardize(const Matrix& responses,
                                                            bool use_log1p,
                                                            const InputRanges& ranges) {
  require(responses.rows() >= 1, "standardize: need at least one run");
  ranges.check();
  const Eigen::Index n = responses.rows(), r = responses.cols();
  Matrix y = detail::maybe_log1p(responses, use_log1p);

  StandardizationParams p;
  p.log1p = use_log1p;
  p.input_low = ranges.low;
  p.input_high = ranges.high;
  p.mean.resize(r);
  p.sd.resize(r);
  p.degenerate.assign(r, 0);

  Matrix z(n, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    double m = y.col(j).mean();
    double ss = (y.col(j).array() - m).square().sum();
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    p.mean[j] = m;
    // a constant column can leak rounding noise into ss (the mean of n equal
    // values need not subtract exactly); treat variation at rounding level as
    // degenerate so such columns still pass through as zeros
    if (sd > 1e-13 * std::max(1.0, std::abs(m))) {
      p.sd[j] = sd;
      z.col(j) = (y.col(j).array() - m) / sd;
    } else {
      p.sd[j] = 1.0;
      p.degenerate[j] = 1;
      z.col(j).setZero();
    }
  }
  return {std::move(z), std::move(p)};
}

// Standardize further responses (validation/test truth) with training-fitted
// parameters.
inline Matrix apply_standardization(const StandardizationParams& p, const Matrix& responses) {
  require(responses.cols() == p.mean.size(), "apply_standardization: location count mismatch");
  Matrix y = detail::maybe_log1p(responses, p.log1p);
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    if (p.degenerate[j])
      y.col(j) = (y.col(j).array() - p.mean[j]).matrix();  // exact zeros when constant
    else
      y.col(j) = ((y.col(j).array() - p.mean[j]) / p.sd[j]).matrix();
  }
  return y;
}

// Back-transform values on the modeling scale to the original response scale.
inline Matrix invert_standardization(const StandardizationParams& p, const Matrix& z) {
  require(z.cols() == p.mean.size(), "invert_standardization: location count mismatch");
  Matrix y = z;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    if (p.degenerate[j])
      y.col(j).setConstant(p.mean[j]);
    else
      y.col(j) = (z.col(j).array() * p.sd[j] + p.mean[j]).matrix();
  }
  if (p.log1p) y = y.array().exp() - 1.0;
  return y;
}

}  // namespace tpemu
