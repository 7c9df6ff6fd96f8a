#pragma once

#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tpemu/dataset.hpp"
#include "tpemu/emulator.hpp"
#include "tpemu/metrics.hpp"
#include "tpemu/model_io.hpp"
#include "tpemu/simulator.hpp"

namespace tpemu {

// ---------------------------------------------------------------------------
// experiment configuration (flat JSON document)

struct ExperimentConfig {
  std::string scenario = "art2";  // art1..art4 built-in, or "external"
  int train_runs = 80;
  int validation_runs = 10;
  int test_runs = 10;
  int grid_per_dim = 50;
  double grid_time_origin = 0.0;  // built-in scenarios: observe times > this
  int sgp_subgrid_per_dim = 10;
  int design_iterations = 200;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::vector<std::string> emulators = {"stprs", "sgp"};

  // external datasets (scenario == "external")
  std::string external_train_dir, external_validation_dir, external_test_dir;
  std::vector<double> input_low, input_high;
  bool log_transform = false;

  // hyper-parameter grids (isotropic across dimensions)
  std::vector<int> stprs_p_grid = {5, 10, 15};
  std::vector<double> stprs_theta_grid = {0.05, 0.2};
  std::vector<double> stprs_nu_grid = {0.05, 0.2};
  std::vector<double> sgp_theta_grid = {0.5, 0.65};
  std::vector<double> sgp_nu_grid = {0.4, 0.8};
  std::vector<int> itprs_p_grid = {5};
  std::vector<int> pcgp_p_grid = {5};

  double nugget = 1e-6;
  int mcmc_iterations = 10000;
  int mcmc_burn_in = 1000;
  int prediction_draws = 500;
  double coverage_k = 3.0;
  bool original_scale = false;

  // prior overrides; negative means "use the per-emulator defaults"
  double a_tau = -1.0, b_tau = -1.0;
  double a_theta = -1.0, b_theta = -1.0;
  double a_sigma = -1.0, b_sigma = -1.0;

  int scenario_dims() const {
    if (scenario == "art1") return 1;
    if (scenario == "art2") return 2;
    if (scenario == "art3") return 3;
    if (scenario == "art4") return 4;
    if (scenario == "external") return 0;
    throw input_error("config: unknown scenario '" + scenario + "'");
  }

  PriorConfig priors_for(EmulatorKind kind) const {
    PriorConfig p = default_priors(kind);
    if (a_tau > 0.0) p.a_tau = a_tau;
    if (b_tau > 0.0) p.b_tau = b_tau;
    if (a_theta > 0.0) p.a_theta = a_theta;
    if (b_theta > 0.0) p.b_theta = b_theta;
    if (a_sigma > 0.0) p.a_sigma = a_sigma;
    if (b_sigma > 0.0) p.b_sigma = b_sigma;
    return p;
  }
};

namespace cfg_detail {

using nlohmann::json;

inline input_error bad_key(const std::string& key, const char* want) {
  return input_error("config: key '" + key + "' must be " + want);
}

inline int as_int(const json& v, const std::string& key) {
  if (!v.is_number_integer()) throw bad_key(key, "an integer");
  return v.get<int>();
}

inline double as_double(const json& v, const std::string& key) {
  if (!v.is_number()) throw bad_key(key, "a number");
  return v.get<double>();
}

inline bool as_bool(const json& v, const std::string& key) {
  if (!v.is_boolean()) throw bad_key(key, "a boolean");
  return v.get<bool>();
}

inline std::string as_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw bad_key(key, "a string");
  return v.get<std::string>();
}

inline std::vector<double> as_doubles(const json& v, const std::string& key) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw bad_key(key, "a number or array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw bad_key(key, "a number or array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::vector<int> as_ints(const json& v, const std::string& key) {
  if (v.is_number_integer()) return {v.get<int>()};
  if (!v.is_array()) throw bad_key(key, "an integer or array of integers");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw bad_key(key, "an integer or array of integers");
    out.push_back(e.get<int>());
  }
  return out;
}

inline std::vector<std::string> as_names(const json& v, const std::string& key) {
  std::vector<std::string> out;
  if (v.is_string()) {  // comma-separated shorthand
    std::stringstream ss(v.get<std::string>());
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(tok);
    return out;
  }
  if (!v.is_array()) throw bad_key(key, "a string or array of strings");
  for (const auto& e : v) {
    if (!e.is_string()) throw bad_key(key, "a string or array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

}  // namespace cfg_detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using namespace cfg_detail;
  require(j.is_object(), "config: top level must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "scenario") c.scenario = as_string(value, key);
    else if (key == "train_runs") c.train_runs = as_int(value, key);
    else if (key == "validation_runs") c.validation_runs = as_int(value, key);
    else if (key == "test_runs") c.test_runs = as_int(value, key);
    else if (key == "grid_per_dim") c.grid_per_dim = as_int(value, key);
    else if (key == "grid_time_origin") c.grid_time_origin = as_double(value, key);
    else if (key == "sgp_subgrid_per_dim") c.sgp_subgrid_per_dim = as_int(value, key);
    else if (key == "design_iterations") c.design_iterations = as_int(value, key);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(as_int(value, key));
    else if (key == "output_dir") c.output_dir = as_string(value, key);
    else if (key == "emulators") c.emulators = as_names(value, key);
    else if (key == "external_train_dir") c.external_train_dir = as_string(value, key);
    else if (key == "external_validation_dir") c.external_validation_dir = as_string(value, key);
    else if (key == "external_test_dir") c.external_test_dir = as_string(value, key);
    else if (key == "input_low") c.input_low = as_doubles(value, key);
    else if (key == "input_high") c.input_high = as_doubles(value, key);
    else if (key == "log_transform") c.log_transform = as_bool(value, key);
    else if (key == "stprs_p_grid") c.stprs_p_grid = as_ints(value, key);
    else if (key == "stprs_theta_grid") c.stprs_theta_grid = as_doubles(value, key);
    else if (key == "stprs_nu_grid") c.stprs_nu_grid = as_doubles(value, key);
    else if (key == "sgp_theta_grid") c.sgp_theta_grid = as_doubles(value, key);
    else if (key == "sgp_nu_grid") c.sgp_nu_grid = as_doubles(value, key);
    else if (key == "itprs_p_grid") c.itprs_p_grid = as_ints(value, key);
    else if (key == "pcgp_p_grid") c.pcgp_p_grid = as_ints(value, key);
    else if (key == "nugget") c.nugget = as_double(value, key);
    else if (key == "mcmc_iterations") c.mcmc_iterations = as_int(value, key);
    else if (key == "mcmc_burn_in") c.mcmc_burn_in = as_int(value, key);
    else if (key == "prediction_draws") c.prediction_draws = as_int(value, key);
    else if (key == "coverage_k") c.coverage_k = as_double(value, key);
    else if (key == "original_scale") c.original_scale = as_bool(value, key);
    else if (key == "a_tau") c.a_tau = as_double(value, key);
    else if (key == "b_tau") c.b_tau = as_double(value, key);
    else if (key == "a_theta") c.a_theta = as_double(value, key);
    else if (key == "b_theta") c.b_theta = as_double(value, key);
    else if (key == "a_sigma") c.a_sigma = as_double(value, key);
    else if (key == "b_sigma") c.b_sigma = as_double(value, key);
    else throw input_error("config: unknown key '" + key + "'");
  }
  c.scenario_dims();  // validates the scenario name
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw input_error("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// hyper-parameter candidates and validation search

struct CandidateSetting {
  EmulatorKind kind = EmulatorKind::STPRS;
  int p = 0;          // basis size (unused for SGP)
  double theta = 0.0; // isotropic input correlation (STPRS/SGP)
  double nu = 0.0;    // isotropic location correlation (STPRS/SGP)
};

inline std::string candidate_label(const CandidateSetting& c) {
  std::string s = kind_name(c.kind);
  if (c.kind != EmulatorKind::SGP) s += " p=" + std::to_string(c.p);
  if (c.kind == EmulatorKind::STPRS || c.kind == EmulatorKind::SGP) {
    std::ostringstream os;
    os << " theta=" << c.theta << " nu=" << c.nu;
    s += os.str();
  }
  return s;
}

inline std::vector<CandidateSetting> make_candidates(const ExperimentConfig& cfg,
                                                     EmulatorKind kind) {
  std::vector<CandidateSetting> out;
  switch (kind) {
    case EmulatorKind::STPRS:
      for (int p : cfg.stprs_p_grid)
        for (double th : cfg.stprs_theta_grid)
          for (double nu : cfg.stprs_nu_grid) out.push_back({kind, p, th, nu});
      break;
    case EmulatorKind::SGP:
      for (double th : cfg.sgp_theta_grid)
        for (double nu : cfg.sgp_nu_grid) out.push_back({kind, 0, th, nu});
      break;
    case EmulatorKind::ITPRS:
      for (int p : cfg.itprs_p_grid) out.push_back({kind, p, 0.0, 0.0});
      break;
    case EmulatorKind::PCGP:
      for (int p : cfg.pcgp_p_grid) out.push_back({kind, p, 0.0, 0.0});
      break;
  }
  require(!out.empty(), "no hyper-parameter candidates configured for " + kind_name(kind));
  return out;
}

struct FitContext {
  const SimDataset* train = nullptr;
  std::shared_ptr<const TprsSpectrum> spectrum;      // required for TPRS bases
  std::vector<Eigen::Index> sgp_subgrid;             // empty = full grid
  double nugget = 1e-6;
  McmcSettings mcmc;
  PriorConfig priors_stprs, priors_sgp, priors_itprs, priors_pcgp;
  int prediction_draws = 500;
};

// Sub-grid of response locations for the tensor-product emulator: the nested
// coarser lattice when the configured density is below the grid's own,
// otherwise empty (train on the full grid).
inline std::vector<Eigen::Index> sgp_training_subgrid(const OutputGrid& grid, int per_dim) {
  std::vector<Eigen::Index> out;
  if (!grid.lattice || per_dim <= 0) return out;
  auto axes = detail::dim_values(grid.physical);
  std::vector<int> counts;
  bool coarser = false;
  for (const auto& axis : axes) {
    int c = std::min<int>(per_dim, static_cast<int>(axis.size()));
    if (c < static_cast<int>(axis.size())) coarser = true;
    counts.push_back(c);
  }
  if (!coarser) return out;
  for (int idx : nested_subgrid_indices(grid, counts)) out.push_back(idx);
  return out;
}

inline FitContext make_fit_context(const ExperimentConfig& cfg, const SimDataset& train) {
  FitContext ctx;
  ctx.train = &train;
  ctx.nugget = cfg.nugget;
  ctx.mcmc.n_iter = cfg.mcmc_iterations;
  ctx.mcmc.burn_in = cfg.mcmc_burn_in;
  ctx.mcmc.seed = cfg.seed;
  ctx.mcmc.nugget = cfg.nugget;
  ctx.priors_stprs = cfg.priors_for(EmulatorKind::STPRS);
  ctx.priors_sgp = cfg.priors_for(EmulatorKind::SGP);
  ctx.priors_itprs = cfg.priors_for(EmulatorKind::ITPRS);
  ctx.priors_pcgp = cfg.priors_for(EmulatorKind::PCGP);
  ctx.prediction_draws = cfg.prediction_draws;
  return ctx;
}

inline Vector constant_vector(Eigen::Index n, double v) {
  return Vector::Constant(n, v);
}

inline EmulatorModel fit_candidate(const CandidateSetting& c, const FitContext& ctx) {
  require(ctx.train != nullptr, "fit_candidate: no training data");
  const SimDataset& train = *ctx.train;
  const Eigen::Index d = train.d(), q = train.grid.q();
  switch (c.kind) {
    case EmulatorKind::STPRS: {
      require(ctx.spectrum != nullptr, "fit_candidate: thin-plate spectrum not prepared");
      int m = c.p - tprs_polynomial_count(static_cast<int>(q), ctx.spectrum->l);
      require(m >= 1, "basis size p=" + std::to_string(c.p) +
                          " is too small for the polynomial block");
      BasisSet basis = tprs_basis(train.grid, m, ctx.spectrum->l, *ctx.spectrum);
      return fit_stprs(train, basis, {constant_vector(d, c.theta), ctx.nugget},
                       constant_vector(q, c.nu), ctx.priors_stprs);
    }
    case EmulatorKind::SGP: {
      const std::vector<Eigen::Index>* sub =
          ctx.sgp_subgrid.empty() ? nullptr : &ctx.sgp_subgrid;
      return fit_sgp(train, {constant_vector(d, c.theta), ctx.nugget},
                     {constant_vector(q, c.nu), ctx.nugget}, ctx.priors_sgp, sub);
    }
    case EmulatorKind::ITPRS: {
      require(ctx.spectrum != nullptr, "fit_candidate: thin-plate spectrum not prepared");
      int m = c.p - tprs_polynomial_count(static_cast<int>(q), ctx.spectrum->l);
      require(m >= 1, "basis size p=" + std::to_string(c.p) +
                          " is too small for the polynomial block");
      BasisSet basis = tprs_basis(train.grid, m, ctx.spectrum->l, *ctx.spectrum);
      return fit_itprs(train, basis, ctx.priors_itprs, ctx.mcmc);
    }
    case EmulatorKind::PCGP:
      return fit_pcgp(train, c.p, ctx.priors_pcgp, ctx.mcmc);
  }
  throw input_error("fit_candidate: unknown emulator kind");
}

// Mean per-run RMSE of posterior-mean predictions on the standardized scale.
inline double validation_rmse(const EmulatorModel& m, const SimDataset& holdout,
                              int prediction_draws) {
  Matrix xu = to_unit_box(holdout.inputs, m.input_ranges());
  Matrix truth = apply_standardization(m.standardization, holdout.responses);
  auto preds = predict_batch(m, xu, prediction_draws, false);
  Matrix means(holdout.n(), holdout.r());
  for (Eigen::Index i = 0; i < holdout.n(); ++i)
    means.row(i) = preds[static_cast<std::size_t>(i)].mean_std.transpose();
  return rmse_per_run(means, truth).mean();
}

struct CandidateResult {
  CandidateSetting setting;
  bool ok = false;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct GridSearchResult {
  CandidateSetting best;
  EmulatorModel best_model;
  double best_rmse = std::numeric_limits<double>::quiet_NaN();
  std::vector<CandidateResult> table;
};

// Tie rule for the validation search: strictly smaller RMSE wins; on an
// exact tie the smaller basis size wins; otherwise the incumbent (earlier
// candidate) is kept.
inline bool candidate_improves(double rmse, int p, double best_rmse, int best_p) {
  if (rmse < best_rmse) return true;
  return rmse == best_rmse && p < best_p;
}

// Fit every candidate on the training set and score it on the validation
// runs; the winner is the smallest validation RMSE with ties broken by
// smaller basis size and then candidate order.
inline GridSearchResult grid_search(const std::vector<CandidateSetting>& candidates,
                                    const SimDataset& validation, const FitContext& ctx) {
  require(!candidates.empty(), "grid_search: candidate list is empty");
  GridSearchResult result;
  bool have_best = false;
  for (const CandidateSetting& c : candidates) {
    CandidateResult row;
    row.setting = c;
    try {
      EmulatorModel model = fit_candidate(c, ctx);
      row.rmse = validation_rmse(model, validation, ctx.prediction_draws);
      row.ok = true;
      if (!have_best || candidate_improves(row.rmse, c.p, result.best_rmse, result.best.p)) {
        result.best = c;
        result.best_rmse = row.rmse;
        result.best_model = std::move(model);
        have_best = true;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    result.table.push_back(std::move(row));
  }
  if (!have_best) {
    std::string causes;
    for (const CandidateResult& r : result.table)
      causes += "\n  " + candidate_label(r.setting) + ": " + r.error;
    throw numeric_error("grid_search: all candidates failed to fit:" + causes);
  }
  return result;
}

// ---------------------------------------------------------------------------
// scenario assembly

struct ScenarioData {
  SimDataset train, validation, test;
};

// Physical input ranges implied by the config: built-in scenario bounds, or
// the input_low/input_high arrays for external data.
inline InputRanges config_input_ranges(const ExperimentConfig& cfg) {
  int d = cfg.scenario_dims();
  if (d > 0) return scenario_ranges(d);
  require(!cfg.input_low.empty() && cfg.input_low.size() == cfg.input_high.size(),
          "config: external scenario needs matching input_low/input_high arrays");
  InputRanges ranges;
  ranges.low = Eigen::Map<const Vector>(cfg.input_low.data(),
                                        static_cast<Eigen::Index>(cfg.input_low.size()));
  ranges.high = Eigen::Map<const Vector>(cfg.input_high.data(),
                                         static_cast<Eigen::Index>(cfg.input_high.size()));
  ranges.check();
  return ranges;
}

inline SimDataset load_external_dataset(const ExperimentConfig& cfg, const std::string& dir) {
  require(!dir.empty(), "config: external dataset directory not set");
  return read_dataset(dir, config_input_ranges(cfg), cfg.log_transform);
}

inline ScenarioData build_scenario(const ExperimentConfig& cfg) {
  ScenarioData out;
  int d = cfg.scenario_dims();
  if (d > 0) {
    require(cfg.train_runs >= 2, "config: train_runs must be at least 2");
    require(cfg.validation_runs >= 1 && cfg.test_runs >= 1,
            "config: validation_runs and test_runs must be positive");
    InputRanges ranges = scenario_ranges(d);
    SpillConfig spill;
    spill.time_origin = cfg.grid_time_origin;
    OutputGrid grid = default_output_grid(cfg.grid_per_dim, spill);
    Matrix train_design =
        maximin_lhs(cfg.train_runs, ranges, cfg.design_iterations, mix_seed(cfg.seed, 101));
    Matrix val_design = monte_carlo_sample(cfg.validation_runs, ranges, mix_seed(cfg.seed, 102));
    Matrix test_design = monte_carlo_sample(cfg.test_runs, ranges, mix_seed(cfg.seed, 103));
    out.train = generate_dataset(train_design, d, grid);
    out.validation = generate_dataset(val_design, d, grid);
    out.test = generate_dataset(test_design, d, grid);
    return out;
  }
  require(!cfg.external_train_dir.empty() && !cfg.external_validation_dir.empty() &&
              !cfg.external_test_dir.empty(),
          "config: external scenario needs external_train_dir, external_validation_dir "
          "and external_test_dir");
  out.train = load_external_dataset(cfg, cfg.external_train_dir);
  out.validation = load_external_dataset(cfg, cfg.external_validation_dir);
  out.test = load_external_dataset(cfg, cfg.external_test_dir);
  require((out.validation.grid.physical - out.train.grid.physical).cwiseAbs().maxCoeff() <
                  1e-12 &&
              (out.test.grid.physical - out.train.grid.physical).cwiseAbs().maxCoeff() < 1e-12,
          "external datasets disagree on the output grid");
  return out;
}

// ---------------------------------------------------------------------------
// compare pipeline

struct EmulatorOutcome {
  CandidateSetting setting;
  double validation_rmse = 0.0;
  double sigma2 = 0.0;
  Vector test_rmse;
  RmseSummary rmse_summary;
  double coverage = 0.0;
};

struct CompareResult {
  std::vector<EmulatorOutcome> outcomes;
  std::vector<std::string> artifacts;
};

namespace cmp_detail {

inline void write_candidate_table(const std::string& path,
                                  const std::vector<CandidateResult>& table) {
  auto out = csv::open_out(path);
  out << "kind,p,theta,nu,status,validation_rmse,error\n";
  for (const CandidateResult& r : table) {
    out << kind_name(r.setting.kind) << ',' << r.setting.p << ','
        << csv::format_double(r.setting.theta) << ',' << csv::format_double(r.setting.nu)
        << ',' << (r.ok ? "ok" : "failed") << ','
        << (r.ok ? csv::format_double(r.rmse) : std::string()) << ',';
    std::string msg = r.error;
    for (char& ch : msg)
      if (ch == ',' || ch == '\n') ch = ';';
    out << msg << '\n';
  }
}

}  // namespace cmp_detail

// Fit the configured emulators, pick hyper-parameters on the validation runs,
// score the winners on the test runs, and write plot-ready artifacts.
inline CompareResult run_compare(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  ScenarioData data = build_scenario(cfg);
  fs::create_directories(cfg.output_dir);

  std::vector<EmulatorKind> kinds;
  for (const std::string& name : cfg.emulators) kinds.push_back(kind_from_name(name));
  require(!kinds.empty(), "config: no emulators requested");

  FitContext ctx = make_fit_context(cfg, data.train);
  bool needs_spectrum = false;
  for (EmulatorKind k : kinds)
    if (k == EmulatorKind::STPRS || k == EmulatorKind::ITPRS) needs_spectrum = true;
  if (needs_spectrum) ctx.spectrum = tprs_spectrum(data.train.grid, 2);

  ctx.sgp_subgrid = sgp_training_subgrid(data.train.grid, cfg.sgp_subgrid_per_dim);

  CompareResult result;
  std::string rmse_path = cfg.output_dir + "/rmse.csv";
  std::string coverage_path = cfg.output_dir + "/coverage.csv";
  auto rmse_out = csv::open_out(rmse_path);
  rmse_out << "kind,run_id,rmse\n";
  auto cov_out = csv::open_out(coverage_path);
  cov_out << "kind,k,coverage\n";

  nlohmann::json summary;
  summary["scenario"] = cfg.scenario;
  summary["seed"] = cfg.seed;
  summary["scale"] = cfg.original_scale ? "original" : "standardized";

  for (EmulatorKind kind : kinds) {
    GridSearchResult search =
        grid_search(make_candidates(cfg, kind), data.validation, ctx);
    EmulatorModel& model = search.best_model;
    if (kind == EmulatorKind::STPRS || kind == EmulatorKind::SGP)
      estimate_sigma2(model, data.validation, cfg.prediction_draws);

    std::string table_path = cfg.output_dir + "/validation_" + kind_name(kind) + ".csv";
    cmp_detail::write_candidate_table(table_path, search.table);
    result.artifacts.push_back(table_path);

    // test-set predictions on the reporting scale
    Matrix xu = to_unit_box(data.test.inputs, model.input_ranges());
    auto preds = predict_batch(model, xu, cfg.prediction_draws, false);
    const Eigen::Index nt = data.test.n(), r = data.test.r();
    Matrix means(nt, r), sds(nt, r), truth(nt, r);
    if (cfg.original_scale) {
      truth = data.test.responses;
      for (Eigen::Index i = 0; i < nt; ++i) {
        means.row(i) = preds[static_cast<std::size_t>(i)].mean.transpose();
        sds.row(i) = preds[static_cast<std::size_t>(i)].sd.transpose();
      }
    } else {
      truth = apply_standardization(model.standardization, data.test.responses);
      for (Eigen::Index i = 0; i < nt; ++i) {
        means.row(i) = preds[static_cast<std::size_t>(i)].mean_std.transpose();
        sds.row(i) = preds[static_cast<std::size_t>(i)].sd_std.transpose();
      }
    }

    std::string pred_path = cfg.output_dir + "/predictions_" + kind_name(kind) + ".csv";
    write_predictions_csv(pred_path, truth, means, sds);
    result.artifacts.push_back(pred_path);

    EmulatorOutcome outcome;
    outcome.setting = search.best;
    outcome.validation_rmse = search.best_rmse;
    outcome.sigma2 = model.sigma2;
    outcome.test_rmse = rmse_per_run(means, truth);
    outcome.rmse_summary = summarize_rmse(outcome.test_rmse);
    outcome.coverage = coverage(means, sds, truth, cfg.coverage_k);

    for (Eigen::Index i = 0; i < nt; ++i)
      rmse_out << kind_name(kind) << ',' << i << ','
               << csv::format_double(outcome.test_rmse[i]) << '\n';
    cov_out << kind_name(kind) << ',' << csv::format_double(cfg.coverage_k) << ','
            << csv::format_double(outcome.coverage) << '\n';

    nlohmann::json js;
    js["p"] = outcome.setting.p;
    js["theta"] = outcome.setting.theta;
    js["nu"] = outcome.setting.nu;
    js["validation_rmse"] = outcome.validation_rmse;
    js["sigma2"] = outcome.sigma2;
    js["mean_test_rmse"] = outcome.test_rmse.mean();
    js["rmse_min"] = outcome.rmse_summary.min;
    js["rmse_lower_quartile"] = outcome.rmse_summary.lower_quartile;
    js["rmse_median"] = outcome.rmse_summary.median;
    js["rmse_upper_quartile"] = outcome.rmse_summary.upper_quartile;
    js["rmse_max"] = outcome.rmse_summary.max;
    js["coverage"] = outcome.coverage;
    summary[kind_name(kind)] = std::move(js);

    result.outcomes.push_back(std::move(outcome));
  }

  rmse_out.flush();
  cov_out.flush();
  require(rmse_out.good() && cov_out.good(), "compare: failed writing metric tables");
  result.artifacts.push_back(rmse_path);
  result.artifacts.push_back(coverage_path);

  std::string summary_path = cfg.output_dir + "/summary.json";
  auto sum_out = csv::open_out(summary_path);
  sum_out << summary.dump(1) << "\n";
  result.artifacts.push_back(summary_path);
  return result;
}

// ---------------------------------------------------------------------------
// chain trace export: one row per retained iteration and parameter, with an
// acceptance indicator derived from value changes between iterations.

inline void write_trace_csv(const PosteriorSamples& samples, const std::string& path) {
  auto out = csv::open_out(path);
  out << "iter,block,value,accepted\n";
  const Eigen::Index n = samples.draws.rows();
  const Eigen::Index k = samples.draws.cols();
  require(static_cast<Eigen::Index>(samples.names.size()) == k,
          "trace export: names/draws mismatch");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      int accepted = i == 0 ? 1 : (samples.draws(i, j) != samples.draws(i - 1, j) ? 1 : 0);
      out << i << ',' << samples.names[static_cast<std::size_t>(j)] << ','
          << csv::format_double(samples.draws(i, j)) << ',' << accepted << '\n';
    }
  out.flush();
  require(out.good(), "trace export: write failed for '" + path + "'");
}

}  // namespace tpemu
