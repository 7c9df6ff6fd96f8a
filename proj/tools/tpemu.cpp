// Command-line front end: design generation, the built-in simulator,
// emulator fitting/prediction, hyper-parameter validation, and the full
// comparison pipeline.  Exit codes: 0 ok, 1 runtime/numeric failure,
// 2 usage or input validation error.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "tpemu/experiment.hpp"

namespace fs = std::filesystem;
using namespace tpemu;

namespace {

std::string one_line(std::string msg) {
  for (char& c : msg)
    if (c == '\n') c = ';';
  return msg;
}

struct Common {
  std::string config;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (flat JSON)");
  cmd->add_option("--seed", c.seed, "random seed (overrides the config)");
}

ExperimentConfig resolve_config(const CLI::App* cmd, const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (cmd->count("--seed")) cfg.seed = c.seed;
  return cfg;
}

void apply_scenario_flag(ExperimentConfig& cfg, const CLI::App* cmd,
                         const std::string& scenario, int d) {
  if (cmd->count("--scenario")) cfg.scenario = scenario;
  if (cmd->count("--d")) {
    require(d >= 1 && d <= 4, "--d must be between 1 and 4");
    cfg.scenario = "art" + std::to_string(d);
  }
  cfg.scenario_dims();  // validate
}

int cmd_design(const CLI::App* cmd, const Common& common, int n, int d,
               const std::string& scenario, const std::string& method, int iterations,
               const std::string& out) {
  ExperimentConfig cfg = resolve_config(cmd, common);
  apply_scenario_flag(cfg, cmd, scenario, d);
  if (!cmd->count("--n")) n = cfg.train_runs;
  if (!cmd->count("--iterations")) iterations = cfg.design_iterations;
  InputRanges ranges = config_input_ranges(cfg);
  Matrix design;
  if (method == "maximin")
    design = maximin_lhs(n, ranges, iterations, cfg.seed);
  else if (method == "mc")
    design = monte_carlo_sample(n, ranges, cfg.seed);
  else
    throw input_error("--method must be 'maximin' or 'mc'");
  write_design_csv(out, design);
  std::cout << "wrote " << out << " (" << n << " runs, " << ranges.dims()
            << " inputs, method " << method << ")\n";
  return 0;
}

int cmd_simulate(const CLI::App* cmd, const Common& common, const std::string& design_path,
                 const std::string& out, const std::string& check_dir, int d,
                 const std::string& scenario, int grid_per_dim) {
  ExperimentConfig cfg = resolve_config(cmd, common);
  apply_scenario_flag(cfg, cmd, scenario, d);
  if (cmd->count("--grid-per-dim")) cfg.grid_per_dim = grid_per_dim;
  if (!check_dir.empty()) {  // ingestion check: read back and echo the shape
    SimDataset data = load_external_dataset(cfg, check_dir);
    std::cout << "ok runs=" << data.n() << " inputs=" << data.d()
              << " locations=" << data.r()
              << " grid=" << (data.grid.lattice ? "lattice" : "scattered") << "\n";
    return 0;
  }
  require(!design_path.empty(), "simulate needs --design (or --check)");
  require(!out.empty(), "simulate needs --out");
  int dims = cfg.scenario_dims();
  require(dims > 0, "simulate runs the built-in scenarios only; choose art1..art4");
  Matrix design = read_design_csv(design_path);
  SimDataset data = generate_dataset(design, dims, default_output_grid(cfg.grid_per_dim));
  fs::create_directories(out);
  write_dataset(out, data);
  std::cout << "wrote " << out << " (" << data.n() << " runs, " << data.r()
            << " grid locations)\n";
  return 0;
}

int cmd_fit(const CLI::App* cmd, const Common& common, const std::string& train_dir,
            const std::string& kind_name_arg, int p, double theta, double nu,
            const std::string& out, const std::string& trace_out,
            const std::string& scenario, int d) {
  ExperimentConfig cfg = resolve_config(cmd, common);
  apply_scenario_flag(cfg, cmd, scenario, d);
  EmulatorKind kind = kind_from_name(kind_name_arg);
  SimDataset train = load_external_dataset(cfg, train_dir);
  FitContext ctx = make_fit_context(cfg, train);
  if (kind == EmulatorKind::STPRS || kind == EmulatorKind::ITPRS)
    ctx.spectrum = tprs_spectrum(train.grid, 2);
  if (kind == EmulatorKind::SGP)
    ctx.sgp_subgrid = sgp_training_subgrid(train.grid, cfg.sgp_subgrid_per_dim);
  CandidateSetting setting;
  setting.kind = kind;
  setting.p = cmd->count("--p") ? p
              : kind == EmulatorKind::STPRS ? cfg.stprs_p_grid.front()
              : kind == EmulatorKind::ITPRS ? cfg.itprs_p_grid.front()
                                            : cfg.pcgp_p_grid.front();
  setting.theta = cmd->count("--theta") ? theta
                  : kind == EmulatorKind::SGP ? cfg.sgp_theta_grid.front()
                                              : cfg.stprs_theta_grid.front();
  setting.nu = cmd->count("--nu") ? nu
               : kind == EmulatorKind::SGP ? cfg.sgp_nu_grid.front()
                                           : cfg.stprs_nu_grid.front();
  EmulatorModel model = fit_candidate(setting, ctx);
  save_model(model, out);
  if (!trace_out.empty()) {
    require(kind == EmulatorKind::PCGP || kind == EmulatorKind::ITPRS,
            "--trace-out needs a sampled emulator (pcgp or itprs)");
    write_trace_csv(model.samples, trace_out);
    std::cout << "wrote " << trace_out << "\n";
  }
  std::cout << "wrote " << out << " (" << candidate_label(setting) << ")\n";
  return 0;
}

int cmd_predict(const CLI::App* cmd, const Common& common, const std::string& model_path,
                const std::string& inputs_path, const std::string& out,
                const std::string& grid_path, int draws, bool original_scale) {
  ExperimentConfig cfg = resolve_config(cmd, common);
  if (!cmd->count("--draws")) draws = cfg.prediction_draws;
  EmulatorModel model = load_model(model_path);
  if (!grid_path.empty()) {
    OutputGrid requested = read_grid_csv(grid_path);
    require(requested.physical.rows() == model.grid.physical.rows() &&
                requested.physical.cols() == model.grid.physical.cols() &&
                (requested.physical - model.grid.physical).cwiseAbs().maxCoeff() <= 1e-12,
            "requested output grid does not match the grid the model was trained on");
  }
  Matrix x = read_design_csv(inputs_path);
  Matrix xu = to_unit_box(x, model.input_ranges());
  auto preds = predict_batch(model, xu, draws, false);
  auto f = csv::open_out(out);
  f << "run_id,loc_id,mean,sd\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Vector& mean = original_scale ? preds[i].mean : preds[i].mean_std;
    const Vector& sd = original_scale ? preds[i].sd : preds[i].sd_std;
    for (Eigen::Index j = 0; j < mean.size(); ++j)
      f << i << ',' << j << ',' << csv::format_double(mean[j]) << ','
        << csv::format_double(sd[j]) << '\n';
  }
  f.flush();
  require(f.good(), "failed writing " + out);
  std::cout << "wrote " << out << " (" << preds.size() << " runs, "
            << (original_scale ? "original" : "standardized") << " scale)\n";
  return 0;
}

int cmd_validate(const CLI::App* cmd, const Common& common, const std::string& emulators,
                 const std::string& scenario, const std::string& output_dir,
                 bool save_models) {
  ExperimentConfig cfg = resolve_config(cmd, common);
  if (cmd->count("--scenario")) cfg.scenario = scenario;
  if (cmd->count("--emulators")) cfg.emulators = cfg_detail::as_names(emulators, "emulators");
  if (cmd->count("--output-dir")) cfg.output_dir = output_dir;
  cfg.scenario_dims();

  SimDataset train, validation;
  if (cfg.scenario_dims() > 0) {
    ScenarioData data = build_scenario(cfg);
    train = std::move(data.train);
    validation = std::move(data.validation);
  } else {
    train = load_external_dataset(cfg, cfg.external_train_dir);
    validation = load_external_dataset(cfg, cfg.external_validation_dir);
    require((validation.grid.physical - train.grid.physical).cwiseAbs().maxCoeff() < 1e-12,
            "external datasets disagree on the output grid");
  }
  fs::create_directories(cfg.output_dir);
  FitContext ctx = make_fit_context(cfg, train);
  std::vector<EmulatorKind> kinds;
  for (const std::string& name : cfg.emulators) kinds.push_back(kind_from_name(name));
  require(!kinds.empty(), "config: no emulators requested");
  for (EmulatorKind k : kinds)
    if ((k == EmulatorKind::STPRS || k == EmulatorKind::ITPRS) && !ctx.spectrum)
      ctx.spectrum = tprs_spectrum(train.grid, 2);
  ctx.sgp_subgrid = sgp_training_subgrid(train.grid, cfg.sgp_subgrid_per_dim);
  for (EmulatorKind kind : kinds) {
    GridSearchResult search = grid_search(make_candidates(cfg, kind), validation, ctx);
    std::string table_path = cfg.output_dir + "/validation_" + kind_name(kind) + ".csv";
    cmp_detail::write_candidate_table(table_path, search.table);
    if (save_models)
      save_model(search.best_model, cfg.output_dir + "/model_" + kind_name(kind) + ".json");
    std::cout << kind_name(kind) << " best: " << candidate_label(search.best)
              << " validation_rmse=" << csv::format_double(search.best_rmse) << "\n";
  }
  return 0;
}

int cmd_compare(const CLI::App* cmd, const Common& common, const std::string& scenario,
                const std::string& emulators, const std::string& output_dir,
                bool original_scale) {
  ExperimentConfig cfg = resolve_config(cmd, common);
  if (cmd->count("--scenario")) cfg.scenario = scenario;
  if (cmd->count("--emulators")) cfg.emulators = cfg_detail::as_names(emulators, "emulators");
  if (cmd->count("--output-dir")) cfg.output_dir = output_dir;
  if (original_scale) cfg.original_scale = true;
  cfg.scenario_dims();
  CompareResult result = run_compare(cfg);
  for (const EmulatorOutcome& o : result.outcomes)
    std::cout << kind_name(o.setting.kind) << ": " << candidate_label(o.setting)
              << " mean_rmse=" << csv::format_double(o.test_rmse.mean())
              << " median_rmse=" << csv::format_double(o.rmse_summary.median)
              << " coverage=" << csv::format_double(o.coverage) << "\n";
  std::cout << "artifacts in " << cfg.output_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("TPRS_EMU_THREADS")) {
    int n = std::atoi(threads);
    if (n > 0) Eigen::setNbThreads(n);
  }

  CLI::App app{"Gaussian-process emulation of multivariate simulators"};
  app.require_subcommand(1);

  // design
  auto* design = app.add_subcommand("design", "generate a space-filling input design");
  Common design_common;
  add_common(design, design_common);
  int design_n = 0, design_d = 0, design_iters = 0;
  std::string design_scenario, design_method = "maximin", design_out = "design.csv";
  design->add_option("--n", design_n, "number of runs");
  design->add_option("--d", design_d, "input dimension (built-in scenario shortcut)");
  design->add_option("--scenario", design_scenario, "scenario name (art1..art4|external)");
  design->add_option("--method", design_method, "maximin|mc");
  design->add_option("--iterations", design_iters, "maximin candidate count");
  design->add_option("--out", design_out, "output CSV path");

  // simulate
  auto* simulate = app.add_subcommand("simulate",
                                      "run the built-in simulator or check a dataset");
  Common sim_common;
  add_common(simulate, sim_common);
  std::string sim_design, sim_out, sim_check, sim_scenario;
  int sim_d = 0, sim_grid = 0;
  simulate->add_option("--design", sim_design, "input design CSV");
  simulate->add_option("--out", sim_out, "output dataset directory");
  simulate->add_option("--check", sim_check, "dataset directory to ingest and echo");
  simulate->add_option("--d", sim_d, "input dimension (built-in scenario shortcut)");
  simulate->add_option("--scenario", sim_scenario, "scenario name");
  simulate->add_option("--grid-per-dim", sim_grid, "output lattice points per dimension");

  // fit
  auto* fit = app.add_subcommand("fit", "fit one emulator and serialize it");
  Common fit_common;
  add_common(fit, fit_common);
  std::string fit_train, fit_kind, fit_out = "model.json", fit_trace, fit_scenario;
  int fit_p = 0, fit_d = 0;
  double fit_theta = 0.0, fit_nu = 0.0;
  fit->add_option("--train", fit_train, "training dataset directory")->required();
  fit->add_option("--kind", fit_kind, "pcgp|itprs|stprs|sgp")->required();
  fit->add_option("--scenario", fit_scenario, "scenario name (sets input ranges)");
  fit->add_option("--d", fit_d, "input dimension (built-in scenario shortcut)");
  fit->add_option("--p", fit_p, "basis size");
  fit->add_option("--theta", fit_theta, "isotropic input correlation parameter");
  fit->add_option("--nu", fit_nu, "isotropic location correlation parameter");
  fit->add_option("--out", fit_out, "model JSON path");
  fit->add_option("--trace-out", fit_trace, "chain trace CSV (sampled emulators)");

  // predict
  auto* predict = app.add_subcommand("predict", "predict from a serialized model");
  Common pred_common;
  add_common(predict, pred_common);
  std::string pred_model, pred_inputs, pred_out = "predictions.csv", pred_grid;
  int pred_draws = 0;
  bool pred_original = false;
  predict->add_option("--model", pred_model, "model JSON path")->required();
  predict->add_option("--inputs", pred_inputs, "prediction inputs CSV (physical)")->required();
  predict->add_option("--out", pred_out, "predictions CSV path");
  predict->add_option("--grid", pred_grid, "expected output grid CSV (validated)");
  predict->add_option("--draws", pred_draws, "posterior draws used per prediction");
  predict->add_flag("--original-scale", pred_original, "report on the original response scale");

  // validate
  auto* validate = app.add_subcommand("validate", "hyper-parameter grid search");
  Common val_common;
  add_common(validate, val_common);
  std::string val_emulators, val_scenario, val_outdir;
  bool val_save = false;
  validate->add_option("--emulators", val_emulators, "comma-separated emulator kinds");
  validate->add_option("--scenario", val_scenario, "scenario name");
  validate->add_option("--output-dir", val_outdir, "artifact directory");
  validate->add_flag("--save-models", val_save, "also serialize each winning model");

  // compare
  auto* compare = app.add_subcommand("compare", "fit, tune and score emulators end to end");
  Common cmp_common;
  add_common(compare, cmp_common);
  std::string cmp_scenario, cmp_emulators, cmp_outdir;
  bool cmp_original = false;
  compare->add_option("--scenario", cmp_scenario, "scenario name");
  compare->add_option("--emulators", cmp_emulators, "comma-separated emulator kinds");
  compare->add_option("--output-dir", cmp_outdir, "artifact directory");
  compare->add_flag("--original-scale", cmp_original, "metrics on the original response scale");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*design)
      return cmd_design(design, design_common, design_n, design_d, design_scenario,
                        design_method, design_iters, design_out);
    if (*simulate)
      return cmd_simulate(simulate, sim_common, sim_design, sim_out, sim_check, sim_d,
                          sim_scenario, sim_grid);
    if (*fit)
      return cmd_fit(fit, fit_common, fit_train, fit_kind, fit_p, fit_theta, fit_nu, fit_out,
                     fit_trace, fit_scenario, fit_d);
    if (*predict)
      return cmd_predict(predict, pred_common, pred_model, pred_inputs, pred_out, pred_grid,
                         pred_draws, pred_original);
    if (*validate)
      return cmd_validate(validate, val_common, val_emulators, val_scenario, val_outdir,
                          val_save);
    if (*compare)
      return cmd_compare(compare, cmp_common, cmp_scenario, cmp_emulators, cmp_outdir,
                         cmp_original);
    std::cerr << "error: no command given\n";
    return 2;
  } catch (const input_error& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
}
