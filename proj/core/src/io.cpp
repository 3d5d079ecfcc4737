#include "gca/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gca/error.hpp"

namespace gca {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void write_series_csv(const std::string& path, const Tensor& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  const std::size_t M = series.cols();
  out << "t";
  for (std::size_t m = 0; m < M; ++m) out << ",var_" << m;
  out << "\n";
  for (std::size_t r = 0; r < series.rows(); ++r) {
    out << r;
    for (std::size_t m = 0; m < M; ++m) out << "," << format_double(series.at(r, m));
    out << "\n";
  }
  if (!out) throw DataError("failed while writing " + path);
}

Tensor read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  if (line.rfind("t,", 0) != 0)
    throw DataError(path + ": expected header starting with 't,', got '" + line + "'");
  std::size_t M = 0;
  for (char c : line)
    if (c == ',') ++M;

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t col = 0;
    while (std::getline(ss, field, ',')) {
      if (col > 0) {
        const char* s = field.c_str();
        char* end = nullptr;
        const double v = std::strtod(s, &end);
        if (end == s || *end != '\0' || !std::isfinite(v))
          throw DataError(path + ":" + std::to_string(line_no) + ": bad value '" + field + "'");
        values.push_back(v);
      }
      ++col;
    }
    if (col != M + 1)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(M + 1) + " fields, got " + std::to_string(col));
    ++rows;
  }
  if (rows == 0) throw DataError(path + ": no data rows");
  return Tensor(Shape{rows, M}, std::move(values));
}

void write_structures_json(const std::string& path,
                           const std::vector<WeightedLagStructure>& structures) {
  if (structures.empty()) throw ConfigError("write_structures_json: nothing to write");
  const std::size_t M = structures[0].adjacency.shape[0];
  nlohmann::json j;
  j["M"] = M;
  j["k"] = structures.size();
  auto adjacency = nlohmann::json::array();
  auto weights = nlohmann::json::array();
  for (const WeightedLagStructure& s : structures) {
    auto a_lag = nlohmann::json::array();
    auto w_lag = nlohmann::json::array();
    for (std::size_t i = 0; i < M; ++i) {
      auto a_row = nlohmann::json::array();
      auto w_row = nlohmann::json::array();
      for (std::size_t m = 0; m < M; ++m) {
        a_row.push_back(static_cast<int>(s.adjacency.at(i, m)));
        w_row.push_back(s.weights.at(i, m));
      }
      a_lag.push_back(std::move(a_row));
      w_lag.push_back(std::move(w_row));
    }
    adjacency.push_back(std::move(a_lag));
    weights.push_back(std::move(w_lag));
  }
  j["adjacency"] = std::move(adjacency);
  j["weights"] = std::move(weights);

  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
  if (!out) throw DataError("failed while writing " + path);
}

std::vector<WeightedLagStructure> read_structures_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  try {
    const std::size_t M = j.at("M").get<std::size_t>();
    const std::size_t k = j.at("k").get<std::size_t>();
    const auto& adjacency = j.at("adjacency");
    const auto& weights = j.at("weights");
    if (adjacency.size() != k || weights.size() != k)
      throw DataError(path + ": adjacency/weights must have k entries");
    std::vector<WeightedLagStructure> out;
    out.reserve(k);
    for (std::size_t lag = 0; lag < k; ++lag) {
      WeightedLagStructure s;
      s.lag = static_cast<int>(lag) + 1;
      s.adjacency = Tensor(Shape{M, M});
      s.weights = Tensor(Shape{M, M});
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t m = 0; m < M; ++m) {
          s.adjacency.at(i, m) = adjacency.at(lag).at(i).at(m).get<double>();
          s.weights.at(i, m) = weights.at(lag).at(i).at(m).get<double>();
        }
      }
      out.push_back(std::move(s));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace gca
