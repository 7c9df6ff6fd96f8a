// Randomized property suites, one test case per module, fixed seeds.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "helpers.hpp"
#include "tpemu/dataset.hpp"
#include "tpemu/emulator.hpp"
#include "tpemu/experiment.hpp"
#include "tpemu/kronecker.hpp"
#include "tpemu/metrics.hpp"
#include "tpemu/reduced_posterior.hpp"
#include "tpemu/simulator.hpp"
#include "tpemu/woodbury.hpp"

using namespace tpemu;
namespace fs = std::filesystem;

namespace {

using Gen = std::mt19937_64;

double runif(Gen& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

int rint(Gen& g, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); }

Matrix runif_matrix(Gen& g, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = runif(g, lo, hi);
  return m;
}

Vector runif_vector(Gen& g, Eigen::Index n, double lo, double hi) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = runif(g, lo, hi);
  return v;
}

// independent restatement of the correlation formula used as a test oracle
double rho_oracle(const Vector& x, const Vector& y, const Vector& theta) {
  double log_rho = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    double d = x[j] - y[j];
    log_rho += 4.0 * d * d * std::log(theta[j]);
  }
  return std::exp(log_rho);
}

// training designs with guaranteed separation in the first coordinate so
// nugget-free correlation matrices stay well conditioned
Matrix separated_design(Gen& g, int n, int d) {
  Matrix x(n, d);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = (i + 0.5 + runif(g, -0.3, 0.3)) / n;
    for (int j = 1; j < d; ++j) x(i, j) = runif(g, 0.0, 1.0);
  }
  return x;
}

Vector vec1(double a) {
  Vector v(1);
  v << a;
  return v;
}

OutputGrid line_grid(int r) { return midpoint_lattice({r}, vec1(0.0), vec1(1.0)); }

InputRanges unit_ranges(int d) {
  InputRanges r;
  r.low = Vector::Zero(d);
  r.high = Vector::Ones(d);
  return r;
}

SimDataset smooth_dataset(Gen& g, int n, int d, int r) {
  SimDataset data;
  data.ranges = unit_ranges(d);
  data.grid = line_grid(r);
  data.inputs = separated_design(g, n, d);
  data.responses.resize(n, r);
  double a = runif(g, 0.5, 2.0), b = runif(g, 0.5, 2.0), c = runif(g, 0.0, 3.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) {
      double s = data.grid.unit(j, 0);
      double x = data.inputs(i, 0);
      data.responses(i, j) = 1.5 + a * std::sin(2.0 * x + 3.0 * s) +
                             b * std::exp(-x) * (s - 0.4) + 0.3 * std::cos(c + 5.0 * s * x);
    }
  return data;
}

bool exactly_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.array() == b.array()).all();
}

}  // namespace

// ---------------------------------------------------------------------------

TEST_CASE("properties: input correlation and low-rank linear algebra") {
  Gen g(101);

  // symmetry of the correlation function, exact
  for (int rep = 0; rep < 1500; ++rep) {
    int d = rint(g, 1, 5);
    Vector x = runif_vector(g, d, -2.0, 3.0);
    Vector y = runif_vector(g, d, -2.0, 3.0);
    Vector theta = runif_vector(g, d, 1e-3, 1.0 - 1e-3);
    double xy = sq_exp_correlation(x, y, theta);
    double yx = sq_exp_correlation(y, x, theta);
    REQUIRE(xy == yx);
    REQUIRE(std::abs(xy - rho_oracle(x, y, theta)) <= 1e-14);
  }

  // nugget-regularized correlation matrices admit a Cholesky factorization
  for (int rep = 0; rep < 1000; ++rep) {
    int n = rint(g, 2, 200), d = rint(g, 1, 4);
    CorrelationParams params{runif_vector(g, d, 0.05, 0.95),
                             std::pow(10.0, runif(g, -12.0, -4.0))};
    Matrix k = correlation_matrix(runif_matrix(g, n, d, 0.0, 1.0), params);
    Eigen::LLT<Matrix> llt(k);
    REQUIRE(llt.info() == Eigen::Success);
  }

  // composed Woodbury block updates track the dense inverse
  for (int rep = 0; rep < 1000; ++rep) {
    int p = rint(g, 2, 8), nb = rint(g, 2, 8);
    while (p * nb > 100) nb = rint(g, 2, 8);
    const int np = p * nb;
    Matrix base = runif_matrix(g, np, np, -0.5, 0.5);
    int k_updates = rint(g, 1, 100);
    Matrix d_true = 0.5 * (base + base.transpose()) +
                    (6.0 + 0.15 * k_updates) * Matrix::Identity(np, np);
    auto log_det_of = [](const Matrix& m) {
      return 2.0 * Matrix(m.llt().matrixL()).diagonal().array().log().sum();
    };
    double log_det_start = log_det_of(d_true);
    Matrix d_inv = d_true.llt().solve(Matrix::Identity(np, np));
    double log_det_acc = 0.0;
    for (int step = 0; step < k_updates; ++step) {
      int block = rint(g, 0, p - 1);
      Matrix delta;
      int kind = rint(g, 0, 3);
      if (kind == 0) {
        delta = Matrix::Zero(nb, nb);  // rank-0 no-op path
      } else if (kind == 1) {
        Matrix gg = runif_matrix(g, nb, rint(g, 1, 3), -1.0, 1.0);
        delta = gg * gg.transpose();
        delta *= 0.1 / std::max(1.0, delta.norm());
      } else {
        Matrix s = runif_matrix(g, nb, nb, -1.0, 1.0);
        delta = 0.5 * (s + s.transpose());
        delta *= 0.1 / std::max(1.0, delta.norm());
      }
      WoodburyUpdate upd = woodbury_block_update(d_inv, delta, block, nb);
      d_inv = std::move(upd.inverse);
      log_det_acc += upd.log_det_delta;
      d_true.block(block * nb, block * nb, nb, nb) += delta;
    }
    Matrix dense = d_true.llt().solve(Matrix::Identity(np, np));
    REQUIRE((d_inv - dense).cwiseAbs().maxCoeff() < 1e-8);
    // the per-update determinant corrections telescope to the true ratio
    REQUIRE(std::abs(log_det_acc - (log_det_of(d_true) - log_det_start)) < 1e-8);
  }

  // Kronecker transpose and mixed-product identities
  for (int rep = 0; rep < 1000; ++rep) {
    int ar = rint(g, 1, 4), ac = rint(g, 1, 4), br = rint(g, 1, 4), bc = rint(g, 1, 4);
    Matrix a = runif_matrix(g, ar, ac, -2.0, 2.0);
    Matrix b = runif_matrix(g, br, bc, -2.0, 2.0);
    Matrix kt = kronecker_product(a, b).transpose();
    Matrix tk = kronecker_product(a.transpose(), b.transpose());
    REQUIRE(exactly_equal(kt, tk));  // same products, reordered

    int cc = rint(g, 1, 4), dc = rint(g, 1, 4);
    Matrix c = runif_matrix(g, ac, cc, -2.0, 2.0);
    Matrix d = runif_matrix(g, bc, dc, -2.0, 2.0);
    Matrix lhs = kronecker_product(a, b) * kronecker_product(c, d);
    Matrix rhs = kronecker_product(Matrix(a * c), Matrix(b * d));
    double scale = std::max(1.0, lhs.cwiseAbs().maxCoeff());
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * scale);
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("properties: output bases") {
  Gen g(202);

  // thin-plate constraint, shared spectrum, projection idempotence
  for (int rep = 0; rep < 1000; ++rep) {
    int q = rint(g, 1, 3);
    OutputGrid grid;
    if (q == 1) {
      grid = line_grid(rint(g, 5, 40));
    } else if (q == 2) {
      grid = midpoint_lattice({rint(g, 3, 7), rint(g, 3, 7)}, Vector::Zero(2),
                              runif_vector(g, 2, 0.5, 3.0));
    } else {
      grid = midpoint_lattice({rint(g, 2, 3), rint(g, 2, 3), rint(g, 2, 3)},
                              Vector::Zero(3), Vector::Ones(3));
    }
    // keep the polynomial block strictly smaller than the grid: q = 3 with
    // l = 3 needs 10 polynomial columns, more than a 2x2x2 lattice offers
    int l = q == 1 ? rint(g, 1, 3) : (q == 2 ? rint(g, 2, 3) : 2);
    auto spectrum = tprs_spectrum(grid, l);
    int big_m = tprs_polynomial_count(q, l);
    int m_max = static_cast<int>(grid.r()) - big_m;
    REQUIRE(m_max >= 1);
    int m = rint(g, 1, std::min(m_max, 12));
    BasisSet basis = tprs_basis(grid, m, l, *spectrum);
    REQUIRE(basis.p() == m + big_m);
    Matrix constraint = basis.t.transpose() * (basis.u * basis.z);
    REQUIRE(constraint.cwiseAbs().maxCoeff() < 1e-10);

    if (m >= 2) {  // a smaller basis from the same spectrum obeys it too
      BasisSet small = tprs_basis(grid, m - 1, l, *spectrum);
      Matrix c2 = small.t.transpose() * (small.u * small.z);
      REQUIRE(c2.cwiseAbs().maxCoeff() < 1e-10);
    }

    int n = rint(g, 3, 10);
    Matrix z = runif_matrix(g, n, grid.r(), -2.0, 2.0);
    Matrix w1 = project_coefficients(basis, z);
    Matrix once = reconstruct(basis, w1);
    Matrix twice = reconstruct(basis, project_coefficients(basis, once));
    REQUIRE((once - twice).cwiseAbs().maxCoeff() <= 1e-8);
  }

  // principal-component columns explain non-increasing variance
  for (int rep = 0; rep < 1000; ++rep) {
    int n = rint(g, 3, 12), r = rint(g, 4, 20);
    Matrix z = runif_matrix(g, n, r, -3.0, 3.0);
    int p = rint(g, 1, std::min({n, r, 6}));
    BasisSet basis = pca_basis(z, p);
    for (int k = 0; k + 1 < p; ++k)
      REQUIRE(basis.vectors.col(k).norm() >= basis.vectors.col(k + 1).norm() - 1e-12);

    Matrix once = reconstruct(basis, project_coefficients(basis, z));
    Matrix twice = reconstruct(basis, project_coefficients(basis, once));
    REQUIRE((once - twice).cwiseAbs().maxCoeff() <= 1e-8);
  }

  // the radial basis function vanishes continuously at zero distance
  for (int rep = 0; rep < 1000; ++rep) {
    int l = rint(g, 1, 4);
    int q = rint(g, 1, 2 * l - 1);
    REQUIRE(tprs_eta(0.0, l, q) == 0.0);
    double near = tprs_eta(1e-8, l, q);
    REQUIRE(std::abs(near) < 1e-6);
    REQUIRE(std::abs(tprs_eta(1e-10, l, q)) <= std::abs(near) + 1e-30);
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("properties: designs and standardization") {
  Gen g(303);

  // Latin hypercube marginals occupy every stratum exactly once
  for (int rep = 0; rep < 1000; ++rep) {
    int n = rint(g, 2, 40), d = rint(g, 1, 6);
    InputRanges ranges;
    ranges.low = runif_vector(g, d, -5.0, 0.0);
    ranges.high = ranges.low + runif_vector(g, d, 0.5, 6.0);
    Matrix x = maximin_lhs(n, ranges, rint(g, 1, 3), g());
    Matrix u = to_unit_box(x, ranges);
    for (int j = 0; j < d; ++j) {
      std::vector<char> seen(static_cast<std::size_t>(n), 0);
      for (int i = 0; i < n; ++i) {
        int stratum = static_cast<int>(std::floor(u(i, j) * n));
        stratum = std::min(std::max(stratum, 0), n - 1);
        REQUIRE(!seen[static_cast<std::size_t>(stratum)]);
        seen[static_cast<std::size_t>(stratum)] = 1;
      }
    }
  }

  // standardized columns have zero mean and unit sample SD
  for (int rep = 0; rep < 1000; ++rep) {
    int n = rint(g, 2, 15), r = rint(g, 1, 12);
    bool log_scale = rint(g, 0, 1) == 1;
    Matrix y = runif_matrix(g, n, r, log_scale ? 0.0 : -4.0, 8.0);
    std::vector<int> constant_cols;
    for (int j = 0; j < r; ++j)
      if (rint(g, 0, 4) == 0) {
        y.col(j).setConstant(runif(g, 0.0, 5.0));
        constant_cols.push_back(j);
      }
    auto [z, params] = standardize(y, log_scale, unit_ranges(rint(g, 1, 3)));
    for (int j = 0; j < r; ++j) {
      if (params.degenerate[static_cast<std::size_t>(j)]) {
        REQUIRE(z.col(j).cwiseAbs().maxCoeff() == 0.0);
        continue;
      }
      REQUIRE(std::abs(z.col(j).mean()) < 1e-12);
      double sd = std::sqrt(z.col(j).squaredNorm() / (n - 1) -
                            n * z.col(j).mean() * z.col(j).mean() / (n - 1));
      REQUIRE(std::abs(sd - 1.0) < 1e-10);
    }
    for (int j : constant_cols) REQUIRE(params.degenerate[static_cast<std::size_t>(j)]);
  }
}

// ---------------------------------------------------------------------------

namespace {

struct PosteriorToy {
  Matrix design, beta_hat, gram;
  TrainingSummary summary;
  PriorConfig priors;
  ReducedLayout layout;
};

PosteriorToy make_posterior_toy(Gen& g, int p, int d) {
  PosteriorToy toy;
  int n = rint(g, 4, 8);
  toy.design = separated_design(g, n, d);
  toy.beta_hat = runif_matrix(g, n, p, -1.5, 1.5);
  Matrix gg = runif_matrix(g, p, p, -1.0, 1.0);
  toy.gram = gg * gg.transpose() + static_cast<double>(p) * Matrix::Identity(p, p);
  toy.summary = {n, static_cast<Eigen::Index>(p + rint(g, 1, 6)),
                 runif(g, 0.1, 4.0)};
  toy.priors = PriorConfig{};
  toy.priors.b_theta = 2.0;
  toy.layout.p = p;
  toy.layout.d = d;
  return toy;
}

Vector toy_init(const ReducedLayout& layout, Gen& g) {
  Vector params(layout.dim());
  params[layout.sigma_index()] = runif(g, 50.0, 200.0);
  for (int k = 0; k < layout.p; ++k) params[layout.tau_index(k)] = runif(g, 0.3, 2.0);
  for (int k = 0; k < layout.p; ++k)
    for (int j = 0; j < layout.d; ++j)
      params[layout.theta_index(k) + j] = runif(g, 0.2, 0.8);
  return params;
}

}  // namespace

TEST_CASE("properties: posterior sampling") {
  Gen g(404);

  // the chain is a deterministic function of seed, start and scales
  for (int rep = 0; rep < 500; ++rep) {
    int p = rint(g, 1, 2), d = rint(g, 1, 2);
    PosteriorToy toy = make_posterior_toy(g, p, d);
    Vector init = toy_init(toy.layout, g);
    ChainOptions opts;
    opts.n_iter = 40;
    opts.burn_in = 10;
    opts.seed = g();

    ReducedGpPosterior t1(toy.design, toy.beta_hat, toy.gram, toy.summary, toy.priors,
                          toy.layout);
    PosteriorSamples s1 = metropolis_chain(t1, init, t1.blocks(), opts);
    ReducedGpPosterior t2(toy.design, toy.beta_hat, toy.gram, toy.summary, toy.priors,
                          toy.layout);
    PosteriorSamples s2 = metropolis_chain(t2, init, t2.blocks(), opts);
    REQUIRE(exactly_equal(s1.draws, s2.draws));
    REQUIRE(s1.acceptance == s2.acceptance);
    REQUIRE(s1.scales == s2.scales);
  }

  // cached inverse drift at forced re-inversions stays below 1e-8
  for (int rep = 0; rep < 500; ++rep) {
    int p = rint(g, 1, 3), d = rint(g, 1, 2);
    PosteriorToy toy = make_posterior_toy(g, p, d);
    Vector init = toy_init(toy.layout, g);
    ChainOptions opts;
    opts.n_iter = 80;
    opts.burn_in = 10;
    opts.seed = g();
    ReducedGpPosterior target(toy.design, toy.beta_hat, toy.gram, toy.summary, toy.priors,
                              toy.layout, 1e-6, true, 10);
    metropolis_chain(target, init, target.blocks(), opts);
    REQUIRE(target.refresh_count() > 1);  // the drift check actually ran
    REQUIRE(target.max_observed_drift() < 1e-8);
  }

  // with an orthogonal (diagonal-gram) basis the posterior factorizes over
  // components: per-component chains reproduce the joint chain's means
  {
    Gen gj(405);
    PosteriorToy joint = make_posterior_toy(gj, 2, 1);
    joint.gram = Matrix::Zero(2, 2);
    joint.gram(0, 0) = 2.1;
    joint.gram(1, 1) = 0.7;
    joint.priors.a_sigma = 1e6;  // pin the shared noise precision
    joint.priors.b_sigma = 1e-6;
    joint.summary.residual_ss = 2.0;

    ChainOptions opts;
    opts.n_iter = 7000;
    opts.burn_in = 1000;
    opts.seed = 99;

    Vector init = toy_init(joint.layout, gj);
    init[joint.layout.sigma_index()] = 1e6 * (1e-6 + 1.0);
    ReducedGpPosterior jt(joint.design, joint.beta_hat, joint.gram, joint.summary,
                          joint.priors, joint.layout);
    PosteriorSamples js = metropolis_chain(jt, init, jt.blocks(), opts);

    auto batch_se = [](const Vector& x) {
      const int nb = 20;
      Eigen::Index len = x.size() / nb;
      Vector means(nb);
      for (int b = 0; b < nb; ++b) means[b] = x.segment(b * len, len).mean();
      double mu = means.mean();
      double var = (means.array() - mu).square().sum() / (nb - 1);
      return std::sqrt(var / nb);
    };

    for (int k = 0; k < 2; ++k) {
      PosteriorToy marg = joint;
      marg.layout.p = 1;
      marg.beta_hat = joint.beta_hat.col(k);
      marg.gram = Matrix::Constant(1, 1, joint.gram(k, k));
      marg.summary.r = joint.summary.r - 1;  // keep n(r - p) identical
      Vector minit(marg.layout.dim());
      minit[0] = init[joint.layout.sigma_index()];
      minit[marg.layout.tau_index(0)] = init[joint.layout.tau_index(k)];
      minit[marg.layout.theta_index(0)] = init[joint.layout.theta_index(k)];
      ReducedGpPosterior mt(marg.design, marg.beta_hat, marg.gram, marg.summary,
                            marg.priors, marg.layout);
      ChainOptions mopts = opts;
      mopts.seed = 1000 + static_cast<std::uint64_t>(k);
      PosteriorSamples ms = metropolis_chain(mt, minit, mt.blocks(), mopts);

      for (auto [jcol, mcol] :
           {std::pair<int, int>{joint.layout.tau_index(k), marg.layout.tau_index(0)},
            std::pair<int, int>{joint.layout.theta_index(k), marg.layout.theta_index(0)}}) {
        Vector jdraws = js.draws.col(jcol);
        Vector mdraws = ms.draws.col(mcol);
        double se = std::sqrt(std::pow(batch_se(jdraws), 2) + std::pow(batch_se(mdraws), 2));
        REQUIRE(std::abs(jdraws.mean() - mdraws.mean()) <= 3.0 * se);
      }
    }
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("properties: emulator behavior") {
  Gen g(505);

  // plug-in emulators: bit reproducibility, non-negative variance,
  // degenerate coefficient uncertainty at training inputs, separability
  for (int rep = 0; rep < 600; ++rep) {
    int n = rint(g, 4, 9), d = rint(g, 1, 2), r = rint(g, 5, 10);
    SimDataset data = smooth_dataset(g, n, d, r);
    auto spectrum = tprs_spectrum(data.grid, 2);
    int m = rint(g, 1, std::min(4, r - 3));
    BasisSet basis = tprs_basis(data.grid, m, 2, *spectrum);
    Vector theta = runif_vector(g, d, 0.3, 0.7);
    Vector nu = runif_vector(g, 1, 0.05, 0.3);
    Matrix x_new = runif_matrix(g, 3, d, 0.0, 1.0);

    EmulatorModel stprs = fit_stprs(data, basis, {theta, 1e-6}, nu);
    EmulatorModel stprs2 = fit_stprs(data, basis, {theta, 1e-6}, nu);
    auto pred = predict_batch(stprs, x_new);
    auto pred2 = predict_batch(stprs2, x_new);
    for (int i = 0; i < 3; ++i) {
      REQUIRE((pred[i].mean_std.array() == pred2[i].mean_std.array()).all());
      REQUIRE((pred[i].sd_std.array() == pred2[i].sd_std.array()).all());
      REQUIRE(pred[i].mean_std.allFinite());
      REQUIRE((pred[i].sd_std.array() >= 0.0).all());
      REQUIRE((pred[i].sd.array() >= 0.0).all());
    }

    EmulatorModel sgp = fit_sgp(data, {theta, 1e-6}, {vec1(nu[0]), 1e-6});
    EmulatorModel sgp2 = fit_sgp(data, {theta, 1e-6}, {vec1(nu[0]), 1e-6});
    auto spred = predict_batch(sgp, x_new);
    auto spred2 = predict_batch(sgp2, x_new);
    for (int i = 0; i < 3; ++i) {
      REQUIRE((spred[i].mean_std.array() == spred2[i].mean_std.array()).all());
      REQUIRE((spred[i].sd_std.array() == spred2[i].sd_std.array()).all());
      REQUIRE((spred[i].sd_std.array() >= 0.0).all());
    }

    // nugget-free refit: coefficient uncertainty collapses at a training input
    EmulatorModel exact = fit_stprs(data, basis, {theta, 0.0}, nu);
    Vector x_train = data.inputs.row(rint(g, 0, n - 1)).transpose();
    CoefficientPrediction cp = stprs_coefficient_prediction(exact, x_train);
    for (int k = 0; k < exact.basis.p(); ++k)
      REQUIRE(cp.cov(k, k) < 1e-8 * exact.tau * (1.0 + exact.v_scale(k, k)));

    // separability: the joint posterior mean at one location equals the mean
    // from a fit that trains on that location alone (nugget-free factors);
    // keep the output-grid correlation mild so its solve stays well within
    // the pinned tolerance
    if (rep % 10 == 0) {
      double nu_sep = runif(g, 0.02, 0.1);
      EmulatorModel joint = fit_sgp(data, {theta, 0.0}, {vec1(nu_sep), 0.0});
      Vector x_star = runif_vector(g, d, 0.0, 1.0);
      PredictiveDistribution full = predict(joint, x_star);
      for (Eigen::Index j = 0; j < data.r(); ++j) {
        std::vector<Eigen::Index> only{j};
        PriorConfig pri = default_priors(EmulatorKind::SGP);
        pri.a_tau = 3.0;  // keep the scale posterior proper for one location
        EmulatorModel solo = fit_sgp(data, {theta, 0.0}, {vec1(nu_sep), 0.0}, pri, &only);
        PredictiveDistribution sp = predict(solo, x_star);
        REQUIRE(std::abs(full.mean_std[j] - sp.mean_std[j]) <= 1e-10);
      }
    }
  }

  // sampled emulators are bit-reproducible end to end
  for (int rep = 0; rep < 50; ++rep) {
    int n = rint(g, 4, 7), d = 1, r = rint(g, 5, 8);
    SimDataset data = smooth_dataset(g, n, d, r);
    McmcSettings settings;
    settings.n_iter = 60;
    settings.burn_in = 20;
    settings.seed = g();
    Matrix x_new = runif_matrix(g, 2, d, 0.0, 1.0);

    EmulatorModel a = fit_pcgp(data, 2, settings);
    EmulatorModel b = fit_pcgp(data, 2, settings);
    REQUIRE(exactly_equal(a.samples.draws, b.samples.draws));
    auto pa = predict_batch(a, x_new, 20);
    auto pb = predict_batch(b, x_new, 20);
    for (int i = 0; i < 2; ++i) {
      REQUIRE((pa[i].mean_std.array() == pb[i].mean_std.array()).all());
      REQUIRE((pa[i].sd_std.array() == pb[i].sd_std.array()).all());
    }

    auto spectrum = tprs_spectrum(data.grid, 2);
    BasisSet basis = tprs_basis(data.grid, 2, 2, *spectrum);
    EmulatorModel ta = fit_itprs(data, basis, settings);
    EmulatorModel tb = fit_itprs(data, basis, settings);
    REQUIRE(exactly_equal(ta.samples.draws, tb.samples.draws));
  }

  // a one-column basis with identity scale is a single-output GP: the
  // posterior densities agree with a directly coded univariate oracle
  for (int rep = 0; rep < 350; ++rep) {
    int n = rint(g, 4, 8), d = rint(g, 1, 2), r = rint(g, 4, 8);
    Matrix design = separated_design(g, n, d);
    Matrix z = runif_matrix(g, n, r, -2.0, 2.0);
    Vector a = runif_vector(g, r, 0.2, 1.5);
    double gram = a.squaredNorm();
    Vector w = z * a / gram;
    double residual_ss = (z - w * a.transpose()).squaredNorm();

    ReducedLayout layout;
    layout.p = 1;
    layout.d = d;
    PriorConfig priors;
    priors.b_theta = 3.0;
    TrainingSummary summary{n, r, residual_ss};
    double nugget = std::pow(10.0, runif(g, -8.0, -4.0));

    Vector params(layout.dim());
    double s2inv = runif(g, 0.5, 400.0);
    double tau = runif(g, 0.05, 3.0);
    params[layout.sigma_index()] = s2inv;
    params[layout.tau_index(0)] = tau;
    Vector theta = runif_vector(g, d, 0.1, 0.9);
    for (int j = 0; j < d; ++j) params[layout.theta_index(0) + j] = theta[j];

    double lp = itprs_log_posterior(params, design, w, Matrix::Constant(1, 1, gram),
                                    summary, priors, layout, nugget);

    // oracle: w ~ N(0, tau (R + nugget I) + sigma^2 / (a'a) I)
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        m(i, j) = tau * (rho_oracle(design.row(i).transpose(),
                                    design.row(j).transpose(), theta) +
                         (i == j ? nugget : 0.0)) +
                  (i == j ? 1.0 / (s2inv * gram) : 0.0);
    Eigen::LLT<Matrix> llt(m);
    REQUIRE(llt.info() == Eigen::Success);
    double log_det = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    double oracle = -0.5 * log_det - 0.5 * w.dot(llt.solve(w));
    oracle += gamma_log_density(s2inv, priors.a_sigma + 0.5 * n * (r - 1),
                                priors.b_sigma + 0.5 * residual_ss);
    oracle += gamma_log_density(tau, priors.a_tau, priors.b_tau);
    for (int j = 0; j < d; ++j)
      oracle += beta_log_density(theta[j], priors.a_theta, priors.b_theta);

    REQUIRE(std::abs(lp - oracle) <= 1e-8 * std::max(1.0, std::abs(oracle)));
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("properties: built-in simulator") {
  Gen g(606);
  SpillConfig cfg;

  for (int rep = 0; rep < 1200; ++rep) {
    Vector x(4);
    x << runif(g, 0.0, 20.0), runif(g, 0.01, 2.0), runif(g, 0.0, 20.0),
        runif(g, 0.01, 2.0);
    double s1 = runif(g, 0.0, cfg.location_extent);
    double s2 = runif(g, 1e-3, cfg.time_extent);

    // nonnegative everywhere
    double c = pollutant_concentration(x, s1, s2);
    REQUIRE(c >= 0.0);
    REQUIRE(std::isfinite(c));

    // linear in the first mass while the second spill is inactive
    double s2_early = runif(g, 1e-3, cfg.second_time);
    Vector x2 = x;
    x2[0] *= 2.0;
    REQUIRE(pollutant_concentration(x2, s1, s2_early) ==
            2.0 * pollutant_concentration(x, s1, s2_early));

    // linear in the second mass once active, with the first mass off
    Vector xb = x, xb2 = x;
    xb[0] = 0.0;
    xb2[0] = 0.0;
    xb2[2] = 2.0 * x[2];
    double s2_late = runif(g, std::nextafter(cfg.second_time, 100.0), cfg.time_extent);
    REQUIRE(pollutant_concentration(xb2, s1, s2_late) ==
            2.0 * pollutant_concentration(xb, s1, s2_late));

    // away from the second spill site the onset is continuous: just after
    // the spill time the newly added term is exponentially negligible
    double s1_off = cfg.second_location + (rep % 2 == 0 ? 0.5 : -0.5);
    Vector x_off = x;
    x_off[2] = 0.0;
    double onset = pollutant_concentration(x, s1_off, cfg.second_time + 1e-6) -
                   pollutant_concentration(x_off, s1_off, cfg.second_time + 1e-6);
    REQUIRE(onset >= 0.0);
    REQUIRE(onset < 1e-10);
  }
}

// ---------------------------------------------------------------------------

TEST_CASE("properties: harness metrics recompute from emitted artifacts") {
  Gen g(707);
  fs::path dir = fs::temp_directory_path() / "tpemu_props_metrics";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::string path = (dir / "pred.csv").string();

  for (int rep = 0; rep < 1000; ++rep) {
    int n = rint(g, 1, 8), r = rint(g, 1, 10);
    Matrix truth = runif_matrix(g, n, r, -50.0, 50.0);
    Matrix mean = truth + runif_matrix(g, n, r, -5.0, 5.0);
    Matrix sd = runif_matrix(g, n, r, 0.0, 2.0);
    write_predictions_csv(path, truth, mean, sd);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "run_id,loc_id,truth,mean,sd");
    std::vector<double> ss(static_cast<std::size_t>(n), 0.0);
    std::vector<long> counts(static_cast<std::size_t>(n), 0);
    while (std::getline(in, line)) {
      auto f = csv::split_line(line);
      REQUIRE(f.size() == 5);
      auto run = static_cast<std::size_t>(csv::parse_id(f[0], path));
      double t = csv::parse_double(f[2], path);
      double m = csv::parse_double(f[3], path);
      ss[run] += (t - m) * (t - m);
      counts[run] += 1;
    }
    Vector reference = rmse_per_run(mean, truth);
    for (int i = 0; i < n; ++i) {
      REQUIRE(counts[static_cast<std::size_t>(i)] == r);
      double streamed = std::sqrt(ss[static_cast<std::size_t>(i)] / r);
      REQUIRE(std::abs(streamed - reference[i]) <= 1e-10);
    }
  }
}
