#pragma once

#include <cmath>

#include "tpemu/dataset.hpp"

namespace tpemu {

// Analytic test simulator: pollutant concentration in a one-dimensional
// channel after two instantaneous spills.  Inputs are (mass1, diffusion1,
// mass2, diffusion2); the output index is (location s1, time s2).
struct SpillConfig {
  double second_location = 1.505;
  double second_time = 30.1525;
  double location_extent = 3.0;  // observed locations in [0, location_extent]
  double time_origin = 0.0;      // observed times in (time_origin, time_extent]
  double time_extent = 60.5;
};

inline double pollutant_concentration(const Vector& x, double s1, double s2,
                                      const SpillConfig& cfg = {}) {
  require(x.size() == 4, "simulator input must have 4 components");
  require(s2 > 0.0, "observation time must be positive");
  require(x[1] > 0.0 && x[3] > 0.0, "diffusion rates must be positive");
  double c = x[0] / std::sqrt(4.0 * M_PI * x[1] * s2) *
             std::exp(-s1 * s1 / (4.0 * x[1] * s2));
  if (s2 > cfg.second_time) {  // strictly after the second spill
    double dt = s2 - cfg.second_time;
    double ds = s1 - cfg.second_location;
    c += x[2] / std::sqrt(4.0 * M_PI * x[3] * dt) * std::exp(-ds * ds / (4.0 * x[3] * dt));
  }
  return c;
}

// Input ranges for the four study scenarios: the first d of
// (mass1, diffusion1, mass2, diffusion2) vary, the rest sit at midpoints.
inline InputRanges scenario_ranges(int d) {
  require(d >= 1 && d <= 4, "scenario dimension must be 1..4");
  Vector lo(4), hi(4);
  lo << 7.0, 0.02, 7.0, 0.02;
  hi << 13.0, 0.12, 13.0, 0.12;
  return {lo.head(d), hi.head(d)};
}

inline Vector expand_scenario_input(const Vector& x, int d) {
  require(d >= 1 && d <= 4 && x.size() == d, "scenario input dimension mismatch");
  Vector full(4);
  full << 10.0, 0.07, 10.0, 0.07;  // midpoints of the scenario ranges
  full.head(d) = x;
  return full;
}

inline OutputGrid default_output_grid(int per_dim = 50, const SpillConfig& cfg = {}) {
  require(cfg.time_origin >= 0.0 && cfg.time_origin < cfg.time_extent,
          "output grid needs 0 <= time_origin < time_extent");
  Vector lo(2), hi(2);
  lo << 0.0, cfg.time_origin;
  hi << cfg.location_extent, cfg.time_extent;
  return midpoint_lattice({per_dim, per_dim}, lo, hi);
}

inline SimDataset generate_dataset(const Matrix& design, int scenario_d,
                                   const OutputGrid& grid, const SpillConfig& cfg = {},
                                   bool log_transform = false) {
  require(design.cols() == scenario_d, "design columns must match the scenario dimension");
  SimDataset data;
  data.inputs = design;
  data.ranges = scenario_ranges(scenario_d);
  data.grid = grid;
  data.log_transform = log_transform;
  data.responses.resize(design.rows(), grid.r());
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    Vector full = expand_scenario_input(design.row(i).transpose(), scenario_d);
    for (Eigen::Index j = 0; j < grid.r(); ++j)
      data.responses(i, j) =
          pollutant_concentration(full, grid.physical(j, 0), grid.physical(j, 1), cfg);
  }
  return data;
}

}  // namespace tpemu
