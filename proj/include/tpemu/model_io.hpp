#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tpemu/emulator.hpp"

namespace tpemu {

namespace io_detail {

using nlohmann::json;

inline json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(rows)}};
}

inline Matrix matrix_from(const json& j, const std::string& name) {
  require(j.is_object() && j.contains("rows") && j.contains("cols") && j.contains("data"),
          "model file: malformed matrix '" + name + "'");
  Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  require(rows >= 0 && cols >= 0, "model file: bad shape for '" + name + "'");
  const json& data = j.at("data");
  require(data.is_array() && static_cast<Eigen::Index>(data.size()) == rows,
          "model file: row count mismatch in '" + name + "'");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = data.at(static_cast<std::size_t>(i));
    require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols,
            "model file: column count mismatch in '" + name + "'");
    for (Eigen::Index jc = 0; jc < cols; ++jc)
      m(i, jc) = row.at(static_cast<std::size_t>(jc)).get<double>();
  }
  return m;
}

inline json to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Vector vector_from(const json& j, const std::string& name) {
  require(j.is_array(), "model file: malformed vector '" + name + "'");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

inline json basis_to_json(const BasisSet& b) {
  return json{{"kind", b.kind == BasisKind::TPRS ? "tprs" : "pca"},
              {"m", b.m},
              {"l", b.l},
              {"vectors", to_json(b.vectors)}};
}

inline BasisSet basis_from_json(const json& j) {
  BasisSet b;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "tprs")
    b.kind = BasisKind::TPRS;
  else if (kind == "pca")
    b.kind = BasisKind::PCA;
  else
    throw input_error("model file: unknown basis kind '" + kind + "'");
  b.m = j.at("m").get<int>();
  b.l = j.at("l").get<int>();
  b.vectors = matrix_from(j.at("vectors"), "basis.vectors");
  return b;
}

}  // namespace io_detail

inline nlohmann::json model_to_json(const EmulatorModel& m) {
  using io_detail::to_json;
  require(m.fitted, "model_to_json: model not fitted");
  nlohmann::json j;
  j["format_version"] = 1;
  j["kind"] = kind_name(m.kind);

  j["standardization"] = {
      {"mean", to_json(m.standardization.mean)},
      {"sd", to_json(m.standardization.sd)},
      {"degenerate", m.standardization.degenerate},
      {"log1p", m.standardization.log1p},
      {"input_low", to_json(m.standardization.input_low)},
      {"input_high", to_json(m.standardization.input_high)},
  };
  j["grid"] = to_json(m.grid.physical);
  j["design"] = to_json(m.design);
  j["priors"] = {{"a_tau", m.priors.a_tau},     {"b_tau", m.priors.b_tau},
                 {"a_theta", m.priors.a_theta}, {"b_theta", m.priors.b_theta},
                 {"a_sigma", m.priors.a_sigma}, {"b_sigma", m.priors.b_sigma}};
  j["nugget"] = m.nugget;
  j["sigma2"] = m.sigma2;

  if (m.kind != EmulatorKind::SGP) {
    j["basis"] = io_detail::basis_to_json(m.basis);
    j["coeffs"] = to_json(m.coeffs);
  }

  switch (m.kind) {
    case EmulatorKind::STPRS:
      j["theta"] = to_json(m.theta);
      j["nu"] = to_json(m.nu);
      j["tau"] = m.tau;
      j["tau_shape"] = m.tau_shape;
      j["tau_rate"] = m.tau_rate;
      j["v_scale"] = to_json(m.v_scale);
      break;
    case EmulatorKind::SGP:
      j["theta"] = to_json(m.theta);
      j["nu"] = to_json(m.nu);
      j["nu_nugget"] = m.nu_nugget;
      j["tau"] = m.tau;
      j["tau_shape"] = m.tau_shape;
      j["tau_rate"] = m.tau_rate;
      j["train_locations"] = m.train_locations;
      j["ytr"] = to_json(m.ytr);
      break;
    case EmulatorKind::PCGP:
    case EmulatorKind::ITPRS:
      j["gram"] = to_json(m.gram);
      j["layout"] = {{"p", m.layout.p},
                     {"d", m.layout.d},
                     {"sample_nugget", m.layout.sample_nugget}};
      j["summary"] = {{"n", m.summary.n},
                      {"r", m.summary.r},
                      {"residual_ss", m.summary.residual_ss}};
      j["draws"] = to_json(m.samples.draws);
      j["draw_names"] = m.samples.names;
      j["acceptance"] = m.samples.acceptance;
      j["proposal_scales"] = m.samples.scales;
      j["log_posterior_trace"] = to_json(m.samples.log_posterior_trace);
      j["prediction_seed"] = m.prediction_seed;
      break;
  }
  return j;
}

// Rebuild the runtime factor caches that are derived from serialized fields.
inline void rebuild_caches(EmulatorModel& m) {
  if (m.kind == EmulatorKind::STPRS) {
    m.w_llt = checked_llt(correlation_matrix(m.design, {m.theta, m.nugget}),
                          "input correlation matrix W");
    m.row_quad =
        (m.basis.vectors * m.v_scale).cwiseProduct(m.basis.vectors).rowwise().sum();
  } else if (m.kind == EmulatorKind::SGP) {
    m.w_llt = checked_llt(correlation_matrix(m.design, {m.theta, m.nugget}),
                          "input correlation matrix W_x");
    const Eigen::Index rt = static_cast<Eigen::Index>(m.train_locations.size());
    Matrix s_tr(rt, m.grid.q());
    for (Eigen::Index jr = 0; jr < rt; ++jr) {
      Eigen::Index idx = m.train_locations[static_cast<std::size_t>(jr)];
      require(idx >= 0 && idx < m.grid.r(), "model file: training location out of range");
      s_tr.row(jr) = m.grid.unit.row(idx);
    }
    m.ws_llt = checked_llt(correlation_matrix(s_tr, {m.nu, m.nu_nugget}),
                           "location correlation matrix W_s");
    Matrix k_pred = cross_correlation(s_tr, m.grid.unit, m.nu);
    m.h_pred = m.ws_llt.solve(k_pred);
    m.loc_quad = k_pred.cwiseProduct(m.h_pred).colwise().sum().transpose();
  }
}

inline EmulatorModel model_from_json(const nlohmann::json& j) {
  using io_detail::matrix_from;
  using io_detail::vector_from;
  require(j.is_object() && j.contains("format_version"),
          "model file: missing format_version");
  int version = j.at("format_version").get<int>();
  require(version == 1, "model file: unsupported format version " + std::to_string(version));

  EmulatorModel m;
  m.kind = kind_from_name(j.at("kind").get<std::string>());

  const nlohmann::json& sp = j.at("standardization");
  m.standardization.mean = vector_from(sp.at("mean"), "standardization.mean");
  m.standardization.sd = vector_from(sp.at("sd"), "standardization.sd");
  m.standardization.degenerate = sp.at("degenerate").get<std::vector<char>>();
  m.standardization.log1p = sp.at("log1p").get<bool>();
  m.standardization.input_low = vector_from(sp.at("input_low"), "standardization.input_low");
  m.standardization.input_high =
      vector_from(sp.at("input_high"), "standardization.input_high");

  m.grid = make_output_grid(matrix_from(j.at("grid"), "grid"));
  m.design = matrix_from(j.at("design"), "design");
  const nlohmann::json& pr = j.at("priors");
  m.priors.a_tau = pr.at("a_tau").get<double>();
  m.priors.b_tau = pr.at("b_tau").get<double>();
  m.priors.a_theta = pr.at("a_theta").get<double>();
  m.priors.b_theta = pr.at("b_theta").get<double>();
  m.priors.a_sigma = pr.at("a_sigma").get<double>();
  m.priors.b_sigma = pr.at("b_sigma").get<double>();
  m.nugget = j.at("nugget").get<double>();
  m.sigma2 = j.at("sigma2").get<double>();

  if (m.kind != EmulatorKind::SGP) {
    m.basis = io_detail::basis_from_json(j.at("basis"));
    m.coeffs = matrix_from(j.at("coeffs"), "coeffs");
  }

  switch (m.kind) {
    case EmulatorKind::STPRS:
      m.theta = vector_from(j.at("theta"), "theta");
      m.nu = vector_from(j.at("nu"), "nu");
      m.tau = j.at("tau").get<double>();
      m.tau_shape = j.at("tau_shape").get<double>();
      m.tau_rate = j.at("tau_rate").get<double>();
      m.v_scale = matrix_from(j.at("v_scale"), "v_scale");
      break;
    case EmulatorKind::SGP:
      m.theta = vector_from(j.at("theta"), "theta");
      m.nu = vector_from(j.at("nu"), "nu");
      m.nu_nugget = j.at("nu_nugget").get<double>();
      m.tau = j.at("tau").get<double>();
      m.tau_shape = j.at("tau_shape").get<double>();
      m.tau_rate = j.at("tau_rate").get<double>();
      m.train_locations = j.at("train_locations").get<std::vector<Eigen::Index>>();
      m.ytr = matrix_from(j.at("ytr"), "ytr");
      break;
    case EmulatorKind::PCGP:
    case EmulatorKind::ITPRS: {
      m.gram = matrix_from(j.at("gram"), "gram");
      const nlohmann::json& lay = j.at("layout");
      m.layout.p = lay.at("p").get<int>();
      m.layout.d = lay.at("d").get<int>();
      m.layout.sample_nugget = lay.at("sample_nugget").get<bool>();
      const nlohmann::json& summ = j.at("summary");
      m.summary.n = summ.at("n").get<Eigen::Index>();
      m.summary.r = summ.at("r").get<Eigen::Index>();
      m.summary.residual_ss = summ.at("residual_ss").get<double>();
      m.samples.draws = matrix_from(j.at("draws"), "draws");
      m.samples.names = j.at("draw_names").get<std::vector<std::string>>();
      m.samples.acceptance = j.at("acceptance").get<std::vector<double>>();
      m.samples.scales = j.at("proposal_scales").get<std::vector<double>>();
      m.samples.log_posterior_trace =
          vector_from(j.at("log_posterior_trace"), "log_posterior_trace");
      m.prediction_seed = j.at("prediction_seed").get<std::uint64_t>();
      break;
    }
  }

  m.fitted = true;
  rebuild_caches(m);
  return m;
}

inline void save_model(const EmulatorModel& m, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open '" + path + "' for writing");
  out << model_to_json(m).dump(1) << "\n";
  require(out.good(), "write failed for '" + path + "'");
}

inline EmulatorModel load_model(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw input_error("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace tpemu
