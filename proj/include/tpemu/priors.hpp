#pragma once

#include <cmath>
#include <limits>

#include "tpemu/types.hpp"

namespace tpemu {

// Hyperparameters for the Bayesian emulators.  Gamma entries use the
// shape/scale convention throughout.
struct PriorConfig {
  double a_tau = 1.0;
  double b_tau = 1.0;
  double a_theta = 1.0;
  double b_theta = 1.0;
  double a_sigma = 2.0;   // on the noise precision
  double b_sigma = 0.01;
};

inline double gamma_log_density(double v, double shape, double scale) {
  require(shape > 0.0 && scale > 0.0, "gamma prior needs positive shape and scale");
  if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
  return (shape - 1.0) * std::log(v) - v / scale - shape * std::log(scale) -
         std::lgamma(shape);
}

inline double beta_log_density(double v, double a, double b) {
  require(a > 0.0 && b > 0.0, "beta prior needs positive parameters");
  if (!(v > 0.0 && v < 1.0)) return -std::numeric_limits<double>::infinity();
  return (a - 1.0) * std::log(v) + (b - 1.0) * std::log1p(-v) + std::lgamma(a + b) -
         std::lgamma(a) - std::lgamma(b);
}

}  // namespace tpemu
