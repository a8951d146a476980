#pragma once

// Panel CSV input, matrix CSV output, and JSON run configuration.
//
// Panels are headerless numeric CSV (rows = time, columns = assets). Configs
// are a single JSON object per run; unknown keys are rejected so typos fail
// loudly instead of silently falling back to defaults.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "forecast.hpp"
#include "linalg.hpp"
#include "model_select.hpp"
#include "recovery.hpp"
#include "simulate.hpp"

namespace hdbekk::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CSV

inline Matrix parse_csv(std::istream& in, const std::string& source = "input") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool blank_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      blank_seen = true;
      continue;
    }
    if (blank_seen) throw DataError(source + ": line " + std::to_string(line_no) + ": data after a blank line");
    std::vector<double> row;
    std::size_t pos = 0, col = 0;
    while (true) {
      ++col;
      const std::size_t end = std::min(line.find(',', pos), line.size());
      std::string cell = line.substr(pos, end - pos);
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      cell = first == std::string::npos ? std::string() : cell.substr(first, last - first + 1);
      double v = 0.0;
      const char* b = cell.data();
      const char* e = cell.data() + cell.size();
      if (!cell.empty() && *b == '+') ++b;
      const auto res = std::from_chars(b, e, v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != e || !std::isfinite(v))
        throw DataError(source + ": line " + std::to_string(line_no) + ", column " + std::to_string(col) +
                        ": non-numeric cell '" + cell + "'");
      row.push_back(v);
      if (end >= line.size()) break;
      pos = end + 1;
    }
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw DataError(source + ": line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                      " fields, found " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(source + ": no data rows");
  Matrix out(Index(rows.size()), Index(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) out(Index(i), Index(j)) = rows[i][j];
  return out;
}

inline Matrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return parse_csv(in, path);
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(std::ostream& os, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_number(m(i, j));
    }
    os << '\n';
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline std::string csv_string(const Matrix& m) {
  std::ostringstream os;
  write_csv(os, m);
  return os.str();
}

// ---------------------------------------------------------------------------
// JSON values

// inf is spelled "inf" (JSON has no infinity); NaN becomes null.
inline json number(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(number(m(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_json(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// Reads fields from one JSON object and remembers which keys were used.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    out = convert<T>(raw(key), key);
  }

  void get_real(const std::string& key, double& out) {
    if (!has(key)) return;
    out = real(raw(key), key);
  }

  void get_reals(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_array()) throw ConfigError(path(key) + ": expected an array");
    out.clear();
    for (const auto& x : v) out.push_back(real(x, key));
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  // Rejects keys never asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

  double real(const json& v, const std::string& key) const {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const std::string s = v.get<std::string>();
      if (s == "inf" || s == "Infinity") return kInf;
    }
    throw ConfigError(path(key) + ": expected a number or \"inf\"");
  }

 private:
  template <class T>
  T convert(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(path(key) + ": expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)
            throw ConfigError(path(key) + ": expected a non-negative integer");
        }
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path(key) + ": " + e.what());
    }
  }

  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// Config records

inline FistaConfig read_fista(const json& j, const std::string& where = "fista") {
  FistaConfig c;
  Fields f(j, where);
  f.get_real("lambda", c.lambda);
  f.get_real("tol", c.tol);
  f.get("block_size", c.block_size);
  f.get("max_iter", c.max_iter);
  f.finish();
  c.validate(1);
  return c;
}

inline json to_json(const FistaConfig& c) {
  return json{{"lambda", number(c.lambda)}, {"tol", c.tol}, {"block_size", c.block_size}, {"max_iter", c.max_iter}};
}

inline AdamConfig read_adam(const json& j, const std::string& where = "adam") {
  AdamConfig c;
  Fields f(j, where);
  f.get_real("lr", c.lr);
  f.get_real("beta1", c.beta1);
  f.get_real("beta2", c.beta2);
  f.get_real("eps", c.eps);
  f.get("iters", c.iters);
  f.get_real("lr_final_ratio", c.lr_final_ratio);
  if (f.has("sparsify_threshold")) {
    const json& v = f.raw("sparsify_threshold");
    if (!v.is_null()) c.sparsify_threshold = f.real(v, "sparsify_threshold");
  }
  if (f.has("init")) {
    const json& v = f.raw("init");
    const std::string s = v.is_string() ? v.get<std::string>() : "";
    if (s == "half_split") c.init = AdamConfig::Init::HalfSplit;
    else if (s == "zero") c.init = AdamConfig::Init::Zero;
    else throw ConfigError(f.path("init") + ": expected \"half_split\" or \"zero\"");
  }
  f.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

inline json to_json(const AdamConfig& c) {
  return json{{"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"iters", c.iters},
              {"lr_final_ratio", c.lr_final_ratio},
              {"sparsify_threshold", c.sparsify_threshold ? json(*c.sparsify_threshold) : json(nullptr)},
              {"init", c.init == AdamConfig::Init::HalfSplit ? "half_split" : "zero"}};
}

inline SelectConfig read_select(const json& j, const std::string& where = "select") {
  SelectConfig c;
  Fields f(j, where);
  f.get("p_max", c.p_max);
  f.get("K_max", c.K_max);
  f.get_real("epsilon", c.epsilon);
  f.get_real("iota_d", c.iota_d);
  f.get_real("alpha_c", c.alpha_c);
  f.get_reals("lambda_grid", c.lambda_grid);
  f.get_reals("tau_grid", c.tau_grid);
  f.get("train_len", c.train_len);
  f.get("valid_len", c.valid_len);
  f.get("refit_stride", c.refit_stride);
  f.get("retune_per_p", c.retune_per_p);
  if (f.has("fista")) c.fista = read_fista(f.raw("fista"), f.path("fista"));
  f.finish();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return c;
}

inline json to_json(const SelectConfig& c) {
  return json{{"p_max", c.p_max},
              {"K_max", c.K_max},
              {"epsilon", c.epsilon},
              {"iota_d", c.iota_d},
              {"alpha_c", c.alpha_c},
              {"lambda_grid", vector_json(c.lambda_grid)},
              {"tau_grid", vector_json(c.tau_grid)},
              {"train_len", c.train_len},
              {"valid_len", c.valid_len},
              {"refit_stride", c.refit_stride},
              {"retune_per_p", c.retune_per_p},
              {"fista", to_json(c.fista)}};
}

inline Innovation read_innovation(const json& j, const std::string& where = "innovation") {
  Innovation inn;
  Fields f(j, where);
  std::string kind = "gaussian";
  f.get("kind", kind);
  if (kind == "gaussian") inn = Innovation::gaussian();
  else if (kind == "laplace") inn = Innovation::laplace();
  else if (kind == "student_t") inn = Innovation::student_t(4.2);
  else throw ConfigError(f.path("kind") + ": expected gaussian, laplace or student_t");
  if (f.has("df")) {
    if (inn.kind != Innovation::Kind::StudentT) throw ConfigError(f.path("df") + ": only valid for student_t");
    f.get_real("df", inn.df);
  }
  f.finish();
  if (inn.kind == Innovation::Kind::StudentT && !(inn.df > 4.0))
    throw ConfigError(f.path("df") + ": student_t innovations need df > 4");
  return inn;
}

inline json to_json(const Innovation& inn) {
  json j{{"kind", to_string(inn)}};
  if (inn.kind == Innovation::Kind::StudentT) j["df"] = inn.df;
  return j;
}

inline DgpSpec read_dgp(const json& j, const std::string& where = "dgp") {
  DgpSpec d;
  Fields f(j, where);
  f.get("N", d.n);
  f.get("p", d.p);
  f.get("s", d.s);
  if (f.has("K")) f.get("K", d.K);
  else d.K.assign(std::size_t(std::max(d.p, 1)), 1);
  if (f.has("innovation")) d.innovation = read_innovation(f.raw("innovation"), f.path("innovation"));
  f.get("seed", d.seed);
  f.get("burn_in", d.burn_in);
  f.get_real("max_spectral_radius", d.max_spectral_radius);
  f.get("max_draws", d.max_draws);
  f.finish();
  try {
    d.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return d;
}

inline json to_json(const DgpSpec& d) {
  return json{{"N", d.n},
              {"p", d.p},
              {"s", d.s},
              {"K", d.K},
              {"innovation", to_json(d.innovation)},
              {"seed", d.seed},
              {"burn_in", d.burn_in},
              {"max_spectral_radius", d.max_spectral_radius},
              {"max_draws", d.max_draws}};
}

inline json to_json(const BekkParams& b) {
  json lags = json::array();
  for (const auto& lag : b.A) {
    json comps = json::array();
    for (const auto& a : lag) comps.push_back(matrix_json(a));
    lags.push_back(std::move(comps));
  }
  return json{{"p", b.p}, {"K", b.K}, {"omega", matrix_json(b.omega)}, {"A", std::move(lags)}};
}

inline json to_json(const McSummaryEntry& e) {
  return json{{"T", e.t}, {"metric", e.metric}, {"count", e.count}, {"mean", number(e.mean)}, {"sd", number(e.sd)}};
}

inline json to_json(const BacktestReport& r) {
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back(json{{"origin", f.origin}, {"message", f.message}});
  return json{{"estimator", r.estimator},
              {"train_len", r.train_len},
              {"origins", r.origins.size()},
              {"AV", number(r.av)},
              {"SD", number(r.sd)},
              {"IR", number(r.ir)},
              {"p", r.p},
              {"K", r.K},
              {"lambda", number(r.lambda)},
              {"tau", number(r.tau)},
              {"failures", std::move(failures)}};
}

}  // namespace hdbekk::io
