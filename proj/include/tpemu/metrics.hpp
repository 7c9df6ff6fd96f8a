#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "tpemu/types.hpp"

namespace tpemu {

// Per-run root mean squared error over output locations.
inline Vector rmse_per_run(const Matrix& pred_means, const Matrix& truth) {
  require(pred_means.rows() == truth.rows() && pred_means.cols() == truth.cols(),
          "rmse: prediction/truth shape mismatch");
  require(pred_means.rows() >= 1 && pred_means.cols() >= 1, "rmse: empty inputs");
  Vector out(pred_means.rows());
  for (Eigen::Index i = 0; i < pred_means.rows(); ++i)
    out[i] = std::sqrt((pred_means.row(i) - truth.row(i)).squaredNorm() /
                       static_cast<double>(pred_means.cols()));
  return out;
}

// Linear-interpolation quantile (the common spreadsheet/statistics default)
// of the entries of v at probability p in [0, 1].
inline double quantile(const Vector& v, double p) {
  require(v.size() >= 1, "quantile: empty sample");
  require(p >= 0.0 && p <= 1.0, "quantile: probability outside [0, 1]");
  std::vector<double> s(v.data(), v.data() + v.size());
  std::sort(s.begin(), s.end());
  double h = p * static_cast<double>(s.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= s.size()) return s.back();
  return s[lo] + (h - static_cast<double>(lo)) * (s[lo + 1] - s[lo]);
}

struct RmseSummary {
  double min = 0.0, lower_quartile = 0.0, median = 0.0, upper_quartile = 0.0, max = 0.0;
};

inline RmseSummary summarize_rmse(const Vector& per_run) {
  RmseSummary s;
  s.min = quantile(per_run, 0.0);
  s.lower_quartile = quantile(per_run, 0.25);
  s.median = quantile(per_run, 0.5);
  s.upper_quartile = quantile(per_run, 0.75);
  s.max = quantile(per_run, 1.0);
  return s;
}

// Fraction of (run, location) cells with |truth - mean| <= k * sd.  Cells
// with zero predictive sd count as covered only under exact equality.
inline double coverage(const Matrix& means, const Matrix& sds, const Matrix& truth,
                       double k = 3.0) {
  require(means.rows() == truth.rows() && means.cols() == truth.cols() &&
              sds.rows() == truth.rows() && sds.cols() == truth.cols(),
          "coverage: shape mismatch");
  require(means.size() >= 1, "coverage: empty inputs");
  require(k > 0.0, "coverage: interval multiplier must be positive");
  Eigen::Index hit = 0;
  for (Eigen::Index i = 0; i < means.rows(); ++i)
    for (Eigen::Index j = 0; j < means.cols(); ++j) {
      double sd = sds(i, j);
      if (sd == 0.0) {
        if (truth(i, j) == means(i, j)) ++hit;
      } else if (std::abs(truth(i, j) - means(i, j)) <= k * sd) {
        ++hit;
      }
    }
  return static_cast<double>(hit) / static_cast<double>(means.size());
}

}  // namespace tpemu
