#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tpemu/basis.hpp"
#include "tpemu/design.hpp"

namespace tpemu {

// One simulator campaign: n runs evaluated on a shared output grid.
struct SimDataset {
  Matrix inputs;     // n x d, physical coordinates
  InputRanges ranges;
  OutputGrid grid;
  Matrix responses;  // n x r, raw simulator output
  bool log_transform = false;  // model log1p(y) instead of y

  Eigen::Index n() const { return inputs.rows(); }
  Eigen::Index d() const { return inputs.cols(); }
  Eigen::Index r() const { return responses.cols(); }
};

namespace csv {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw input_error("cannot parse number '" + s + "' in " + where);
  }
}

inline long parse_id(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size() || v < 0) throw std::invalid_argument("bad id");
    return v;
  } catch (const std::exception&) {
    throw input_error("cannot parse id '" + s + "' in " + where);
  }
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw input_error("cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw input_error("cannot open: " + path);
  return f;
}

// Generic id + numeric columns table: header `id_name,c1,...,ck`, rows sorted
// by the leading id on read.
inline void write_table(const std::string& path, const std::string& id_name,
                        const std::vector<std::string>& columns, const Matrix& values) {
  auto f = open_out(path);
  f << id_name;
  for (const auto& c : columns) f << ',' << c;
  f << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    f << i;
    for (Eigen::Index j = 0; j < values.cols(); ++j) f << ',' << format_double(values(i, j));
    f << '\n';
  }
}

inline Matrix read_table(const std::string& path, const std::string& id_name,
                         Eigen::Index expect_cols = -1) {
  auto f = open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw input_error("empty file: " + path);
  auto header = split_line(line);
  require(!header.empty() && header[0] == id_name,
          path + ": expected header starting with '" + id_name + "'");
  const Eigen::Index cols = static_cast<Eigen::Index>(header.size()) - 1;
  require(cols >= 1, path + ": no data columns");
  require(expect_cols < 0 || cols == expect_cols,
          path + ": expected " + std::to_string(expect_cols) + " data columns, found " +
              std::to_string(cols));
  std::vector<std::pair<long, std::vector<double>>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto fields = split_line(line);
    require(static_cast<Eigen::Index>(fields.size()) == cols + 1,
            path + ": ragged row '" + line + "'");
    std::vector<double> vals(cols);
    for (Eigen::Index j = 0; j < cols; ++j) vals[j] = parse_double(fields[j + 1], path);
    rows.emplace_back(parse_id(fields[0], path), std::move(vals));
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Matrix out(static_cast<Eigen::Index>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].first == static_cast<long>(i),
            path + ": ids must be 0..n-1 without gaps (saw " + std::to_string(rows[i].first) +
                ")");
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = rows[i].second[j];
  }
  return out;
}

}  // namespace csv

inline void write_design_csv(const std::string& path, const Matrix& design) {
  std::vector<std::string> cols(design.cols());
  for (Eigen::Index j = 0; j < design.cols(); ++j) cols[j] = "x" + std::to_string(j + 1);
  csv::write_table(path, "run_id", cols, design);
}

inline Matrix read_design_csv(const std::string& path) { return csv::read_table(path, "run_id"); }

inline void write_grid_csv(const std::string& path, const OutputGrid& grid) {
  std::vector<std::string> cols(grid.q());
  for (Eigen::Index j = 0; j < grid.q(); ++j) cols[j] = "s" + std::to_string(j + 1);
  csv::write_table(path, "loc_id", cols, grid.physical);
}

inline OutputGrid read_grid_csv(const std::string& path) {
  return make_output_grid(csv::read_table(path, "loc_id"));
}

inline void write_outputs_csv(const std::string& path, const Matrix& responses) {
  auto f = csv::open_out(path);
  f << "run_id,loc_id,y\n";
  for (Eigen::Index i = 0; i < responses.rows(); ++i)
    for (Eigen::Index j = 0; j < responses.cols(); ++j)
      f << i << ',' << j << ',' << csv::format_double(responses(i, j)) << '\n';
}

// Reads the (run_id, loc_id, y) table; every one of the n x r cells must be
// present exactly once.
inline Matrix read_outputs_csv(const std::string& path, Eigen::Index n, Eigen::Index r) {
  auto f = csv::open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw input_error("empty file: " + path);
  auto header = csv::split_line(line);
  require(header.size() == 3 && header[0] == "run_id" && header[1] == "loc_id",
          path + ": expected header run_id,loc_id,y");
  Matrix out(n, r);
  std::vector<char> seen(static_cast<std::size_t>(n * r), 0);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    auto fields = csv::split_line(line);
    require(fields.size() == 3, path + ": ragged row '" + line + "'");
    long i = csv::parse_id(fields[0], path), j = csv::parse_id(fields[1], path);
    require(i < n && j < r, path + ": id out of range in row '" + line + "'");
    auto& flag = seen[static_cast<std::size_t>(i * r + j)];
    require(!flag, path + ": duplicate cell (" + std::to_string(i) + "," + std::to_string(j) +
                       ")");
    flag = 1;
    out(i, j) = csv::parse_double(fields[2], path);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      require(seen[static_cast<std::size_t>(i * r + j)],
              path + ": missing output for run " + std::to_string(i) + ", location " +
                  std::to_string(j));
  return out;
}

inline void write_dataset(const std::string& dir, const SimDataset& data) {
  write_design_csv(dir + "/inputs.csv", data.inputs);
  write_grid_csv(dir + "/grid.csv", data.grid);
  write_outputs_csv(dir + "/outputs.csv", data.responses);
}

inline SimDataset read_dataset(const std::string& dir, const InputRanges& ranges,
                               bool log_transform = false) {
  SimDataset data;
  data.inputs = read_design_csv(dir + "/inputs.csv");
  data.grid = read_grid_csv(dir + "/grid.csv");
  data.responses =
      read_outputs_csv(dir + "/outputs.csv", data.inputs.rows(), data.grid.r());
  require(ranges.dims() == data.inputs.cols(), "input ranges do not match the design columns");
  data.ranges = ranges;
  data.log_transform = log_transform;
  return data;
}

// Long-format prediction artifact: one row per (run, location) cell.
inline void write_predictions_csv(const std::string& path, const Matrix& truth,
                                  const Matrix& mean, const Matrix& sd) {
  require(truth.rows() == mean.rows() && truth.cols() == mean.cols() &&
              mean.rows() == sd.rows() && mean.cols() == sd.cols(),
          "prediction tables must share a shape");
  auto f = csv::open_out(path);
  f << "run_id,loc_id,truth,mean,sd\n";
  for (Eigen::Index i = 0; i < truth.rows(); ++i)
    for (Eigen::Index j = 0; j < truth.cols(); ++j)
      f << i << ',' << j << ',' << csv::format_double(truth(i, j)) << ','
        << csv::format_double(mean(i, j)) << ',' << csv::format_double(sd(i, j)) << '\n';
}

}  // namespace tpemu
