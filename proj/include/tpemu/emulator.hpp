#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tpemu/basis.hpp"
#include "tpemu/correlation.hpp"
#include "tpemu/dataset.hpp"
#include "tpemu/design.hpp"
#include "tpemu/kronecker.hpp"
#include "tpemu/mcmc.hpp"
#include "tpemu/priors.hpp"
#include "tpemu/reduced_posterior.hpp"
#include "tpemu/types.hpp"

namespace tpemu {

enum class EmulatorKind { PCGP, ITPRS, STPRS, SGP };

inline std::string kind_name(EmulatorKind k) {
  switch (k) {
    case EmulatorKind::PCGP: return "pcgp";
    case EmulatorKind::ITPRS: return "itprs";
    case EmulatorKind::STPRS: return "stprs";
    case EmulatorKind::SGP: return "sgp";
  }
  throw input_error("unknown emulator kind");
}

inline EmulatorKind kind_from_name(const std::string& s) {
  if (s == "pcgp") return EmulatorKind::PCGP;
  if (s == "itprs") return EmulatorKind::ITPRS;
  if (s == "stprs") return EmulatorKind::STPRS;
  if (s == "sgp") return EmulatorKind::SGP;
  throw input_error("unknown emulator kind '" + s + "'");
}

// Reference hyper-prior defaults per emulator family.  The sampled emulators
// get an informative Gamma(5, 0.2) on each coefficient scale (mean 1 on the
// standardized scale) and Beta(1, b) correlation priors; the plug-in
// emulators only use the flat Gamma(1, 1) tau prior.
inline PriorConfig default_priors(EmulatorKind kind) {
  PriorConfig p;
  switch (kind) {
    case EmulatorKind::PCGP:
      p.a_tau = 5.0; p.b_tau = 0.2; p.a_theta = 1.0; p.b_theta = 3.0;
      break;
    case EmulatorKind::ITPRS:
      p.a_tau = 5.0; p.b_tau = 0.2; p.a_theta = 1.0; p.b_theta = 0.1;
      break;
    default:
      p.a_tau = 1.0; p.b_tau = 1.0;
      break;
  }
  return p;
}

struct McmcSettings {
  int n_iter = 10000;
  int burn_in = 1000;
  std::uint64_t seed = 0;
  bool sample_nugget = false;
  double nugget = 1e-6;
  int reinvert_every = 100;
  bool use_woodbury = true;
  double init_scale = 0.3;
};

// Fitted emulator.  Immutable after fitting (except estimate_sigma2, which
// writes sigma2 once); predict never mutates, so concurrent prediction is
// safe.
struct EmulatorModel {
  EmulatorKind kind = EmulatorKind::STPRS;
  bool fitted = false;

  StandardizationParams standardization;
  OutputGrid grid;
  Matrix design;  // n x d training inputs mapped onto the unit box
  BasisSet basis; // empty for SGP
  Matrix coeffs;  // n x p training coefficients (empty for SGP)
  PriorConfig priors;

  double nugget = 1e-6;     // diagonal jitter on the input correlation
  double sigma2 = 0.0;      // independent error variance, standardized scale

  // plug-in hyper-parameters (STPRS / SGP)
  Vector theta;             // input correlation parameters
  Vector nu;                // spatial / location correlation parameters
  double nu_nugget = 0.0;   // nugget on the location factor (SGP only)
  double tau = 0.0;         // posterior-mean plug-in scale
  double tau_shape = 0.0;   // Gamma posterior of 1/tau: shape
  double tau_rate = 0.0;    // Gamma posterior of 1/tau: rate

  // STPRS extras
  Matrix v_scale;   // p x p coefficient scale matrix V
  Vector row_quad;  // a_j' V a_j per output location (variance pushforward)

  // SGP extras
  std::vector<Eigen::Index> train_locations;  // rows of grid used in training
  Matrix ytr;       // n x r_train standardized training responses
  Matrix h_pred;    // r_train x r: W_s^-1 K(s_train, s_grid)
  Vector loc_quad;  // k_j' W_s^-1 k_j per output location

  // sampled posteriors (PCGP / ITPRS)
  Matrix gram;      // p x p basis gram matrix
  ReducedLayout layout;
  TrainingSummary summary;
  PosteriorSamples samples;
  std::uint64_t prediction_seed = 0;

  // runtime factor caches (rebuilt on load, not serialized)
  Eigen::LLT<Matrix> w_llt;   // STPRS: W; SGP: W_x
  Eigen::LLT<Matrix> ws_llt;  // SGP: W_s

  Eigen::Index n() const { return design.rows(); }
  Eigen::Index d() const { return design.cols(); }
  Eigen::Index r() const { return grid.r(); }

  InputRanges input_ranges() const {
    return InputRanges{standardization.input_low, standardization.input_high};
  }
};

struct PredictiveDistribution {
  Vector mean, sd;          // original response scale
  Vector mean_std, sd_std;  // standardized modeling scale
  std::optional<Matrix> samples;  // per-draw predictions (original scale)
};

namespace detail {

struct Standardized {
  Matrix z;
  StandardizationParams params;
  Matrix design_unit;
};

inline Standardized prepare_training(const SimDataset& data) {
  require(data.responses.rows() == data.inputs.rows(),
          "fit: responses and inputs disagree on the number of runs");
  require(data.responses.cols() == data.grid.r(),
          "fit: responses and output grid disagree on the number of locations");
  auto [z, params] = standardize(data.responses, data.log_transform, data.ranges);
  Matrix u = to_unit_box(data.inputs, data.ranges);
  return {std::move(z), std::move(params), std::move(u)};
}

// Gamma posterior of 1/tau given the quadratic form of N effective
// observations: shape (a + N)/2, rate (b + q)/2, so E[tau] = (b+q)/(a+N-2).
inline void set_tau_posterior(EmulatorModel& m, double q, double n_eff) {
  require(m.priors.a_tau + n_eff > 2.0,
          "tau posterior mean undefined: a_tau + n*p must exceed 2");
  m.tau_shape = 0.5 * (m.priors.a_tau + n_eff);
  m.tau_rate = 0.5 * (m.priors.b_tau + q);
  m.tau = m.tau_rate / (m.tau_shape - 1.0);
}

}  // namespace detail

inline EmulatorModel fit_stprs(const SimDataset& data, const BasisSet& basis,
                               const CorrelationParams& theta, const Vector& nu,
                               const PriorConfig& priors) {
  require(basis.kind == BasisKind::TPRS, "fit_stprs: basis must be thin-plate");
  require(basis.vectors.rows() == data.grid.r(),
          "fit_stprs: basis grid size does not match the dataset grid");
  auto st = detail::prepare_training(data);

  EmulatorModel m;
  m.kind = EmulatorKind::STPRS;
  m.standardization = std::move(st.params);
  m.grid = data.grid;
  m.design = std::move(st.design_unit);
  m.basis = basis;
  m.priors = priors;
  m.nugget = theta.nugget;
  m.theta = theta.theta;
  m.nu = nu;

  m.coeffs = project_coefficients(basis, st.z);
  m.v_scale = tprs_scale_matrix(basis, data.grid, nu);

  m.w_llt = checked_llt(correlation_matrix(m.design, theta), "input correlation matrix W");
  auto v_llt = checked_llt(m.v_scale, "coefficient scale matrix V");
  double q = kron_quadform(v_llt, m.w_llt, m.coeffs);
  detail::set_tau_posterior(m, q, static_cast<double>(m.coeffs.size()));

  m.row_quad = (basis.vectors * m.v_scale).cwiseProduct(basis.vectors).rowwise().sum();
  m.fitted = true;
  return m;
}

inline EmulatorModel fit_stprs(const SimDataset& data, const BasisSet& basis,
                               const CorrelationParams& theta, const Vector& nu) {
  return fit_stprs(data, basis, theta, nu, default_priors(EmulatorKind::STPRS));
}

inline EmulatorModel fit_sgp(const SimDataset& data, const CorrelationParams& theta,
                             const CorrelationParams& nu, const PriorConfig& priors,
                             const std::vector<Eigen::Index>* subgrid = nullptr,
                             Eigen::Index dense_cap = 20000) {
  auto st = detail::prepare_training(data);
  const Eigen::Index n = st.design_unit.rows(), r = data.grid.r();

  std::vector<Eigen::Index> locs;
  if (subgrid) {
    require(!subgrid->empty(), "fit_sgp: location subset is empty");
    for (std::size_t i = 0; i < subgrid->size(); ++i) {
      Eigen::Index idx = (*subgrid)[i];
      require(idx >= 0 && idx < r, "fit_sgp: location index out of range");
      require(i == 0 || idx > (*subgrid)[i - 1],
              "fit_sgp: location subset must be strictly increasing");
    }
    locs = *subgrid;
  } else {
    locs.resize(static_cast<std::size_t>(r));
    for (Eigen::Index j = 0; j < r; ++j) locs[static_cast<std::size_t>(j)] = j;
  }
  const Eigen::Index rt = static_cast<Eigen::Index>(locs.size());
  if (n * rt > dense_cap)
    throw input_error("fit_sgp: n * r_train = " + std::to_string(n * rt) +
                      " exceeds the dense-training cap " + std::to_string(dense_cap) +
                      "; train on a location subgrid");

  EmulatorModel m;
  m.kind = EmulatorKind::SGP;
  m.standardization = std::move(st.params);
  m.grid = data.grid;
  m.design = std::move(st.design_unit);
  m.priors = priors;
  m.nugget = theta.nugget;
  m.nu_nugget = nu.nugget;
  m.theta = theta.theta;
  m.nu = nu.theta;
  m.train_locations = std::move(locs);

  Matrix s_tr(rt, data.grid.q());
  m.ytr.resize(n, rt);
  for (Eigen::Index j = 0; j < rt; ++j) {
    s_tr.row(j) = data.grid.unit.row(m.train_locations[static_cast<std::size_t>(j)]);
    m.ytr.col(j) = st.z.col(m.train_locations[static_cast<std::size_t>(j)]);
  }

  m.w_llt = checked_llt(correlation_matrix(m.design, theta), "input correlation matrix W_x");
  m.ws_llt = checked_llt(correlation_matrix(s_tr, nu), "location correlation matrix W_s");

  double q = kron_quadform(m.w_llt, m.ws_llt, Matrix(m.ytr.transpose()));
  detail::set_tau_posterior(m, q, static_cast<double>(n * rt));

  Matrix k_pred = cross_correlation(s_tr, data.grid.unit, m.nu);  // rt x r
  m.h_pred = m.ws_llt.solve(k_pred);
  m.loc_quad = k_pred.cwiseProduct(m.h_pred).colwise().sum().transpose();
  m.fitted = true;
  return m;
}

inline EmulatorModel fit_sgp(const SimDataset& data, const CorrelationParams& theta,
                             const CorrelationParams& nu) {
  return fit_sgp(data, theta, nu, default_priors(EmulatorKind::SGP));
}

namespace detail {

inline void fit_sampled(EmulatorModel& m, Matrix gram, const Matrix& z,
                        const PriorConfig& priors, const McmcSettings& settings) {
  m.priors = priors;
  m.nugget = settings.nugget;
  m.gram = std::move(gram);
  m.layout.p = m.basis.p();
  m.layout.d = static_cast<int>(m.design.cols());
  m.layout.sample_nugget = settings.sample_nugget;
  m.summary.n = m.design.rows();
  m.summary.r = z.cols();
  m.summary.residual_ss = (z - reconstruct(m.basis, m.coeffs)).squaredNorm();

  ReducedGpPosterior target(m.design, m.coeffs, m.gram, m.summary, priors, m.layout,
                            settings.nugget, settings.use_woodbury, settings.reinvert_every);

  // Start every block at its prior bulk; deterministic per settings.
  Vector init(m.layout.dim());
  init[m.layout.sigma_index()] = target.a_sigma_post() * target.b_sigma_post();
  for (int k = 0; k < m.layout.p; ++k) {
    init[m.layout.tau_index(k)] = priors.a_tau * priors.b_tau;
    for (int j = 0; j < m.layout.d; ++j)
      init[m.layout.theta_index(k) + j] = priors.a_theta / (priors.a_theta + priors.b_theta);
  }
  if (m.layout.sample_nugget) init[m.layout.nugget_index()] = settings.nugget;

  ChainOptions copts;
  copts.n_iter = settings.n_iter;
  copts.burn_in = settings.burn_in;
  copts.seed = settings.seed;
  copts.init_scale = settings.init_scale;
  m.samples = metropolis_chain(target, init, target.blocks(), copts);
  m.prediction_seed = mix_seed(settings.seed, 0x70726564u);
  m.fitted = true;
}

}  // namespace detail

inline EmulatorModel fit_itprs(const SimDataset& data, const BasisSet& basis,
                               const PriorConfig& priors, const McmcSettings& settings) {
  require(basis.kind == BasisKind::TPRS, "fit_itprs: basis must be thin-plate");
  require(basis.vectors.rows() == data.grid.r(),
          "fit_itprs: basis grid size does not match the dataset grid");
  auto st = detail::prepare_training(data);

  EmulatorModel m;
  m.kind = EmulatorKind::ITPRS;
  m.standardization = std::move(st.params);
  m.grid = data.grid;
  m.design = std::move(st.design_unit);
  m.basis = basis;
  m.coeffs = project_coefficients(basis, st.z);
  Matrix gram = basis.vectors.transpose() * basis.vectors;
  detail::fit_sampled(m, std::move(gram), st.z, priors, settings);
  return m;
}

inline EmulatorModel fit_itprs(const SimDataset& data, const BasisSet& basis,
                               const McmcSettings& settings) {
  return fit_itprs(data, basis, default_priors(EmulatorKind::ITPRS), settings);
}

inline EmulatorModel fit_pcgp(const SimDataset& data, int p, const PriorConfig& priors,
                              const McmcSettings& settings) {
  auto st = detail::prepare_training(data);

  EmulatorModel m;
  m.kind = EmulatorKind::PCGP;
  m.standardization = std::move(st.params);
  m.grid = data.grid;
  m.design = std::move(st.design_unit);
  m.basis = pca_basis(st.z, p);
  m.coeffs = project_coefficients(m.basis, st.z);
  // The principal-component columns are orthogonal, so the gram matrix is
  // diagonal by construction; assemble it exactly diagonal.
  Vector colsq = m.basis.vectors.colwise().squaredNorm().transpose();
  Matrix gram = colsq.asDiagonal();
  detail::fit_sampled(m, std::move(gram), st.z, priors, settings);
  return m;
}

inline EmulatorModel fit_pcgp(const SimDataset& data, int p, const McmcSettings& settings) {
  return fit_pcgp(data, p, default_priors(EmulatorKind::PCGP), settings);
}

namespace detail {

inline void warn_extrapolation(const Matrix& x_unit) {
  for (Eigen::Index i = 0; i < x_unit.rows(); ++i)
    for (Eigen::Index j = 0; j < x_unit.cols(); ++j)
      if (x_unit(i, j) < -1e-9 || x_unit(i, j) > 1.0 + 1e-9) {
        std::cerr << "warning: prediction input " << i
                  << " lies outside the unit training box (extrapolation)\n";
        return;
      }
}

// Enforce non-negative predictive variance: negatives at rounding level
// (within -1e-13) are clamped silently, larger ones up to -1e-10 are clamped
// with a warning, and anything beyond that is a genuine numerical failure.
inline Vector finalize_variance(Vector var) {
  double mn = var.minCoeff();
  if (mn < -1e-10)
    throw numeric_error("negative predictive variance " + std::to_string(mn) +
                        " exceeds the rounding tolerance");
  if (mn < -1e-13)
    std::cerr << "warning: predictive variance " << mn << " clamped to zero\n";
  if (mn < 0.0) var = var.cwiseMax(0.0);
  return var;
}

// Map standardized-scale mean/sd to the original response scale for the
// plug-in emulators.  Affine part is exact; with log1p active the sd is the
// half-width of the exact image of the one-sd standardized interval.
inline void plugin_transport(const StandardizationParams& sp, const Vector& mean_std,
                             const Vector& sd_std, Vector& mean, Vector& sd) {
  const Eigen::Index r = mean_std.size();
  Matrix mid = invert_standardization(sp, mean_std.transpose());
  mean = mid.row(0).transpose();
  sd.resize(r);
  if (!sp.log1p) {
    for (Eigen::Index j = 0; j < r; ++j)
      sd[j] = sp.degenerate[static_cast<std::size_t>(j)] ? 0.0 : sp.sd[j] * sd_std[j];
  } else {
    Matrix hi = invert_standardization(sp, (mean_std + sd_std).transpose());
    Matrix lo = invert_standardization(sp, (mean_std - sd_std).transpose());
    sd = 0.5 * (hi.row(0) - lo.row(0)).transpose();
  }
}

inline std::vector<PredictiveDistribution> predict_plugin(const EmulatorModel& m,
                                                          const Matrix& x_unit) {
  const Eigen::Index t = x_unit.rows();
  Matrix wc = cross_correlation(m.design, x_unit, m.theta);  // n x t
  Matrix alpha = m.w_llt.solve(wc);
  Vector covered = wc.cwiseProduct(alpha).colwise().sum().transpose();  // w*' W^-1 w*

  std::vector<PredictiveDistribution> out(static_cast<std::size_t>(t));
  for (Eigen::Index i = 0; i < t; ++i) {
    PredictiveDistribution& pd = out[static_cast<std::size_t>(i)];
    Vector var;
    if (m.kind == EmulatorKind::STPRS) {
      Vector coef_mean = m.coeffs.transpose() * alpha.col(i);
      pd.mean_std = m.basis.vectors * coef_mean;
      double s = std::max(0.0, 1.0 - covered[i]);
      var = (m.tau * s) * m.row_quad;
    } else {
      pd.mean_std = m.h_pred.transpose() * (m.ytr.transpose() * alpha.col(i));
      var = (m.tau * (1.0 - covered[i] * m.loc_quad.array())).matrix();
    }
    var.array() += m.sigma2;
    pd.sd_std = finalize_variance(std::move(var)).cwiseSqrt();
    plugin_transport(m.standardization, pd.mean_std, pd.sd_std, pd.mean, pd.sd);
  }
  return out;
}

inline std::vector<PredictiveDistribution> predict_sampled(const EmulatorModel& m,
                                                           const Matrix& x_unit,
                                                           int n_samples, bool keep_samples) {
  const Eigen::Index t = x_unit.rows(), r = m.r(), n = m.n();
  const int p = m.layout.p;
  const Eigen::Index np = n * p;
  const Eigen::Index kept = m.samples.draws.rows();
  require(kept > 0, "predict: model holds no posterior draws");
  const Eigen::Index use = std::min<Eigen::Index>(n_samples, kept);

  ReducedGpPosterior target(m.design, m.coeffs, m.gram, m.summary, m.priors, m.layout,
                            m.nugget, false, 100);
  Vector beta_vec = Eigen::Map<const Vector>(m.coeffs.data(), m.coeffs.size());

  std::vector<Vector> sum_std(static_cast<std::size_t>(t), Vector::Zero(r));
  std::vector<Vector> ss_std = sum_std, sum_org = sum_std, ss_org = sum_std;
  std::vector<Matrix> stored;
  if (keep_samples) stored.assign(static_cast<std::size_t>(t), Matrix(use, r));

  Matrix cstar = Matrix::Zero(np, p);
  for (Eigen::Index si = 0; si < use; ++si) {
    Vector params = m.samples.draws.row(si * kept / use).transpose();
    Eigen::LLT<Matrix> llt = checked_llt(target.dense_cov(params),
                                         "posterior draw covariance");
    Vector g = llt.solve(beta_vec);

    for (Eigen::Index i = 0; i < t; ++i) {
      for (int k = 0; k < p; ++k) {
        Vector theta_k = params.segment(m.layout.theta_index(k), m.layout.d);
        cstar.col(k).segment(static_cast<Eigen::Index>(k) * n, n) =
            params[m.layout.tau_index(k)] * cross_correlation(m.design, x_unit.row(i), theta_k);
      }
      Vector mu = cstar.transpose() * g;
      Matrix cov = -cstar.transpose() * llt.solve(cstar);
      for (int k = 0; k < p; ++k) cov(k, k) += params[m.layout.tau_index(k)];
      cov = 0.5 * (cov + cov.transpose()).eval();

      Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
      require(es.info() == Eigen::Success, "predict: coefficient covariance eigensolve failed");
      Matrix factor =
          es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

      std::mt19937_64 gen(mix_seed(m.prediction_seed,
                                   static_cast<std::uint64_t>(si) *
                                           static_cast<std::uint64_t>(t) +
                                       static_cast<std::uint64_t>(i)));
      std::normal_distribution<double> normal;
      Vector zdraw(p);
      for (int k = 0; k < p; ++k) zdraw[k] = normal(gen);

      Vector y_std = m.basis.vectors * (mu + factor * zdraw);
      Vector y_org =
          invert_standardization(m.standardization, y_std.transpose()).row(0).transpose();

      std::size_t ui = static_cast<std::size_t>(i);
      sum_std[ui] += y_std;
      ss_std[ui] += y_std.cwiseAbs2();
      sum_org[ui] += y_org;
      ss_org[ui] += y_org.cwiseAbs2();
      if (keep_samples) stored[ui].row(si) = y_org.transpose();

      // reset the touched block for the next point
      for (int k = 0; k < p; ++k)
        cstar.col(k).segment(static_cast<Eigen::Index>(k) * n, n).setZero();
    }
  }

  auto moments = [&](const Vector& sum, const Vector& ss, Vector& mean, Vector& sd) {
    const double mdraws = static_cast<double>(use);
    mean = sum / mdraws;
    if (use > 1)
      sd = ((ss - mdraws * mean.cwiseAbs2()) / (mdraws - 1.0)).cwiseMax(0.0).cwiseSqrt();
    else
      sd = Vector::Zero(sum.size());
  };

  std::vector<PredictiveDistribution> out(static_cast<std::size_t>(t));
  for (Eigen::Index i = 0; i < t; ++i) {
    std::size_t ui = static_cast<std::size_t>(i);
    PredictiveDistribution& pd = out[ui];
    moments(sum_std[ui], ss_std[ui], pd.mean_std, pd.sd_std);
    moments(sum_org[ui], ss_org[ui], pd.mean, pd.sd);
    if (keep_samples) pd.samples = std::move(stored[ui]);
  }
  return out;
}

}  // namespace detail

// Predict at inputs already mapped to the unit box (one row per point).
inline std::vector<PredictiveDistribution> predict_batch(const EmulatorModel& m,
                                                         const Matrix& x_unit,
                                                         int n_samples = 500,
                                                         bool keep_samples = false) {
  require(m.fitted, "predict: model not fitted");
  require(x_unit.rows() >= 1, "predict: no prediction points given");
  require(x_unit.cols() == m.d(), "predict: input dimension mismatch");
  require(n_samples > 0, "predict: n_samples must be positive");
  detail::warn_extrapolation(x_unit);
  if (m.kind == EmulatorKind::STPRS || m.kind == EmulatorKind::SGP)
    return detail::predict_plugin(m, x_unit);
  return detail::predict_sampled(m, x_unit, n_samples, keep_samples);
}

inline PredictiveDistribution predict(const EmulatorModel& m, const Vector& x_star,
                                      int n_samples = 500, bool keep_samples = false) {
  return predict_batch(m, x_star.transpose(), n_samples, keep_samples)[0];
}

// Predict at inputs on the original (physical) scale.
inline std::vector<PredictiveDistribution> predict_physical(const EmulatorModel& m,
                                                            const Matrix& x_physical,
                                                            int n_samples = 500,
                                                            bool keep_samples = false) {
  return predict_batch(m, to_unit_box(x_physical, m.input_ranges()), n_samples, keep_samples);
}

// Coefficient-level conditional for the separable thin-plate emulator:
// mean = B' W^-1 w*, covariance = tau (1 - w*' W^-1 w*) V.
struct CoefficientPrediction {
  Vector mean;
  Matrix cov;
};

inline CoefficientPrediction stprs_coefficient_prediction(const EmulatorModel& m,
                                                          const Vector& x_unit) {
  require(m.fitted && m.kind == EmulatorKind::STPRS,
          "coefficient prediction requires a fitted separable thin-plate model");
  Matrix wc = cross_correlation(m.design, x_unit.transpose(), m.theta);  // n x 1
  Vector alpha = m.w_llt.solve(wc).col(0);
  CoefficientPrediction cp;
  cp.mean = m.coeffs.transpose() * alpha;
  double s = 1.0 - wc.col(0).dot(alpha);
  cp.cov = (m.tau * s) * m.v_scale;
  return cp;
}

// Independent error variance: mean squared residual between posterior-mean
// predictions and standardized truth over a holdout set.  Stored on the
// model and added to predictive variances from then on.
inline double estimate_sigma2(EmulatorModel& m, const SimDataset& holdout,
                              int n_samples = 500) {
  require(m.fitted, "estimate_sigma2: model not fitted");
  require(holdout.n() >= 1, "estimate_sigma2: holdout set is empty");
  require(holdout.grid.r() == m.grid.r() &&
              holdout.grid.physical.cols() == m.grid.physical.cols() &&
              (holdout.grid.physical - m.grid.physical).cwiseAbs().maxCoeff() < 1e-12,
          "estimate_sigma2: holdout grid does not match the training grid");

  Matrix xu = to_unit_box(holdout.inputs, m.input_ranges());
  Matrix z_truth = apply_standardization(m.standardization, holdout.responses);
  auto preds = predict_batch(m, xu, n_samples, false);

  double ss = 0.0;
  for (Eigen::Index i = 0; i < holdout.n(); ++i)
    ss += (preds[static_cast<std::size_t>(i)].mean_std - z_truth.row(i).transpose())
              .squaredNorm();
  m.sigma2 = ss / static_cast<double>(holdout.n() * holdout.r());
  return m.sigma2;
}

}  // namespace tpemu
