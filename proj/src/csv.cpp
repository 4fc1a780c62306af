#include "emtest/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace emtest {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // Trim whitespace and a possible trailing carriage return.
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row,
                  const std::string& column) {
  if (cell.empty() || cell == "NA" || cell == "na" || cell == "NaN")
    throw CsvError("row " + std::to_string(row) + " column '" + column +
                   "': missing value (NA cells are rejected)");
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(cell, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != cell.size())
    throw CsvError("row " + std::to_string(row) + " column '" + column +
                   "': non-numeric cell '" + cell + "'");
  return value;
}

std::size_t column_index(const std::vector<std::string>& headers,
                         const std::string& name) {
  const auto it = std::find(headers.begin(), headers.end(), name);
  if (it == headers.end())
    throw CsvError("missing column '" + name + "' in header");
  return static_cast<std::size_t>(it - headers.begin());
}

}  // namespace

Dataset read_dataset_csv(const std::string& path, const std::string& response,
                         const std::vector<std::string>& x_columns,
                         const std::vector<std::string>& z_columns,
                         const Family& family) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw CsvError("'" + path + "' is empty");
  const std::vector<std::string> headers = split_line(line);

  const std::size_t y_idx = column_index(headers, response);
  std::vector<std::size_t> x_idx, z_idx;
  for (const auto& c : x_columns) x_idx.push_back(column_index(headers, c));
  for (const auto& c : z_columns) z_idx.push_back(column_index(headers, c));

  std::vector<double> y;
  std::vector<std::vector<double>> xs, zs;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != headers.size())
      throw CsvError("row " + std::to_string(row) + ": expected " +
                     std::to_string(headers.size()) + " cells, got " +
                     std::to_string(cells.size()));
    y.push_back(parse_cell(cells[y_idx], row, response));
    std::vector<double> xr, zr;
    for (std::size_t k = 0; k < x_idx.size(); ++k)
      xr.push_back(parse_cell(cells[x_idx[k]], row, x_columns[k]));
    for (std::size_t k = 0; k < z_idx.size(); ++k)
      zr.push_back(parse_cell(cells[z_idx[k]], row, z_columns[k]));
    xs.push_back(std::move(xr));
    zs.push_back(std::move(zr));
  }
  if (y.empty()) throw CsvError("'" + path + "' has no data rows");

  Dataset data;
  data.family = family;
  data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
  data.X.resize(y.size(), x_idx.size());
  data.Z.resize(y.size(), z_idx.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t k = 0; k < x_idx.size(); ++k) data.X(i, k) = xs[i][k];
    for (std::size_t k = 0; k < z_idx.size(); ++k) data.Z(i, k) = zs[i][k];
  }
  try {
    data.validate();
  } catch (const InvalidInputError& e) {
    throw CsvError(std::string("'") + path + "': " + e.what());
  }
  return data;
}

void write_dataset_csv(const std::string& path, const Dataset& data,
                       const std::string& response,
                       const std::vector<std::string>& x_columns,
                       const std::vector<std::string>& z_columns) {
  if (static_cast<Eigen::Index>(x_columns.size()) != data.p() ||
      static_cast<Eigen::Index>(z_columns.size()) != data.q())
    throw InvalidInputError("write_dataset_csv: column name count mismatch");
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write '" + path + "'");
  out << response;
  for (const auto& c : x_columns) out << ',' << c;
  for (const auto& c : z_columns) out << ',' << c;
  out << '\n';
  char buf[40];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    emit(data.y[i]);
    for (Eigen::Index k = 0; k < data.p(); ++k) {
      out << ',';
      emit(data.X(i, k));
    }
    for (Eigen::Index k = 0; k < data.q(); ++k) {
      out << ',';
      emit(data.Z(i, k));
    }
    out << '\n';
  }
}

}  // namespace emtest
