#ifndef PSALT_IO_HPP
#define PSALT_IO_HPP

// File formats.
//
//   plan JSON   {"groups": [{"n": 62, "nu": 0.201, "tau": [0.37, 0.67, 0.75]}, ...]}
//   data CSV    group,failure_time      one row per observed failure (groups 1-based)
//            or group,cell,count        one row per cell, survivors in cell J+1
//
// CSV output uses 9 significant digits. Every file is written to a sibling
// temporary and renamed into place, so a reader never sees a partial file.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "psalt/errors.hpp"
#include "psalt/estimation.hpp"
#include "psalt/model.hpp"
#include "psalt/simulation.hpp"

namespace psalt {

using json = nlohmann::json;

inline std::string fmt9(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes `text` to `path` via a temporary in the same directory and a rename.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  const auto tmp = dir / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Plan

inline TestPlan plan_from_json(const json& doc, const std::string& where = "plan") {
  if (!doc.is_object() || !doc.contains("groups") || !doc["groups"].is_array())
    throw ConfigError(where + ".groups", "expected an array of groups");
  for (const auto& [key, _] : doc.items())
    if (key != "groups") throw ConfigError(where + "." + key, "unknown key");
  TestPlan plan;
  std::size_t i = 0;
  for (const auto& g : doc["groups"]) {
    const std::string at = where + ".groups[" + std::to_string(i++) + "]";
    if (!g.is_object()) throw ConfigError(at, "expected an object");
    for (const auto& [key, _] : g.items())
      if (key != "n" && key != "nu" && key != "tau") throw ConfigError(at + "." + key, "unknown key");
    if (!g.contains("n") || !g["n"].is_number_integer())
      throw ConfigError(at + ".n", "expected an integer");
    if (!g.contains("nu") || !g["nu"].is_number()) throw ConfigError(at + ".nu", "expected a number");
    if (!g.contains("tau") || !g["tau"].is_array())
      throw ConfigError(at + ".tau", "expected an array of numbers");
    GroupPlan gp;
    gp.n_units = g["n"].get<int>();
    gp.stress_rate = g["nu"].get<double>();
    for (const auto& t : g["tau"]) {
      if (!t.is_number()) throw ConfigError(at + ".tau", "expected numbers");
      gp.inspection_times.push_back(t.get<double>());
    }
    plan.groups.push_back(std::move(gp));
  }
  try {
    plan.validate();
  } catch (const DomainError& e) {
    throw ConfigError(where, e.what());
  }
  return plan;
}

inline json plan_to_json(const TestPlan& plan) {
  json groups = json::array();
  for (const auto& g : plan.groups)
    groups.push_back({{"n", g.n_units}, {"nu", g.stress_rate}, {"tau", g.inspection_times}});
  return {{"groups", groups}};
}

inline TestPlan load_plan(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string(), std::string("malformed JSON: ") + e.what());
  }
  return plan_from_json(doc, path.string());
}

// ---------------------------------------------------------------------------
// Data

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where, "not a number: '" + s + "'");
  }
}

}  // namespace detail

/// Reads either CSV layout and tabulates it against `plan`. A lifetime past
/// the last inspection is a survivor; devices not listed are survivors too.
inline ObservedCounts parse_counts_csv(const std::string& text, const TestPlan& plan,
                                       const std::string& where = "data") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(where, "empty file");
  const auto header = detail::split_csv_line(line);
  const bool times = header == std::vector<std::string>{"group", "failure_time"};
  const bool cells = header == std::vector<std::string>{"group", "cell", "count"};
  if (!times && !cells)
    throw ConfigError(where, "header must be 'group,failure_time' or 'group,cell,count'");

  ObservedCounts counts;
  counts.cells.resize(plan.n_groups());
  for (std::size_t i = 0; i < plan.n_groups(); ++i)
    counts.cells[i].assign(plan.groups[i].n_cells(), 0);
  std::vector<bool> survivors_given(plan.n_groups(), false);
  std::vector<long> rows(plan.n_groups(), 0);
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = where + ":" + std::to_string(row);
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) throw ConfigError(at, "wrong number of fields");
    const double gd = detail::parse_number(f[0], at);
    if (gd != std::floor(gd) || gd < 1 || gd > static_cast<double>(plan.n_groups()))
      throw ConfigError(at, "group must be an integer in 1.." + std::to_string(plan.n_groups()));
    const auto g = static_cast<std::size_t>(gd) - 1;
    const auto& gp = plan.groups[g];
    if (times) {
      const double t = detail::parse_number(f[1], at);
      if (!(t > 0.0)) throw ConfigError(at, "failure time must be positive");
      ++rows[g];
      const std::size_t cell = tabulate(gp, t);
      if (cell < gp.inspection_times.size()) ++counts.cells[g][cell];
    } else {
      const double cd = detail::parse_number(f[1], at);
      const double nd = detail::parse_number(f[2], at);
      if (cd != std::floor(cd) || cd < 1 || cd > static_cast<double>(gp.n_cells()))
        throw ConfigError(at, "cell must be an integer in 1.." + std::to_string(gp.n_cells()));
      if (nd != std::floor(nd) || nd < 0) throw ConfigError(at, "count must be a nonnegative integer");
      const auto c = static_cast<std::size_t>(cd) - 1;
      counts.cells[g][c] += static_cast<long>(nd);
      if (c + 1 == gp.n_cells()) survivors_given[g] = true;
    }
  }
  for (std::size_t i = 0; i < plan.n_groups(); ++i) {
    auto& g = counts.cells[i];
    if (survivors_given[i]) continue;
    if (rows[i] > plan.groups[i].n_units)
      throw ConfigError(where, "group " + std::to_string(i + 1) + " lists more devices than the plan");
    const long survivors = plan.groups[i].n_units - counts.failures(i);
    if (survivors < 0)
      throw ConfigError(where, "group " + std::to_string(i + 1) + " has more failures than devices");
    g.back() = survivors;
  }
  try {
    counts.validate_against(plan);
  } catch (const DomainError& e) {
    throw ConfigError(where, e.what());
  }
  return counts;
}

inline ObservedCounts load_counts(const std::filesystem::path& path, const TestPlan& plan) {
  return parse_counts_csv(read_text(path), plan, path.string());
}

inline std::string counts_to_csv(const ObservedCounts& counts) {
  std::string s = "group,cell,count\n";
  for (std::size_t i = 0; i < counts.cells.size(); ++i)
    for (std::size_t j = 0; j < counts.cells[i].size(); ++j)
      s += std::to_string(i + 1) + "," + std::to_string(j + 1) + "," +
           std::to_string(counts.cells[i][j]) + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// Results

inline json theta_json(const ModelParams& th) { return json::array({th.a, th.b, th.mu}); }

inline json fit_to_json(const FitResult& fit) {
  return {{"theta", theta_json(fit.theta_hat)},
          {"objective", fit.objective_value},
          {"converged", fit.converged},
          {"iterations", fit.iterations},
          {"grad_norm", fit.gradient_norm}};
}

inline json mat_json(const Mat3& m) {
  json out = json::array();
  for (int r = 0; r < 3; ++r) out.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return out;
}

inline json vec_json(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

/// Cells and score vectors u_ij = d ln p_ij / d theta.
inline std::string cells_to_csv(const ModelParams& theta, const TestPlan& plan) {
  const auto scores = score_vectors(theta, plan);
  const auto p = cell_probabilities(theta, plan);
  std::string s = "group,cell,p,du_da,du_db,du_dmu\n";
  for (std::size_t i = 0; i < p.groups.size(); ++i)
    for (std::size_t j = 0; j < p.groups[i].size(); ++j) {
      const Vec3& u = scores.groups[i][j];
      s += std::to_string(i + 1) + "," + std::to_string(j + 1) + "," + fmt9(p.groups[i][j]) + "," +
           fmt9(u[0]) + "," + fmt9(u[1]) + "," + fmt9(u[2]) + "\n";
    }
  return s;
}

/// estimator,param,bias,rmse rows plus one rmse_plus row per estimator.
inline std::string mc_reports_to_csv(const std::vector<McReport>& reports) {
  static const char* names[] = {"a", "b", "mu"};
  std::string s = "estimator,param,bias,rmse\n";
  for (const auto& r : reports) {
    for (int l = 0; l < 3; ++l)
      s += r.estimator + "," + names[l] + "," + fmt9(r.bias[l]) + "," + fmt9(r.rmse[l]) + "\n";
    s += r.estimator + ",rmse_plus,," + fmt9(r.rmse_plus) + "\n";
  }
  return s;
}

inline json mc_reports_to_json(const std::vector<McReport>& reports) {
  json out = json::array();
  for (const auto& r : reports)
    out.push_back({{"estimator", r.estimator},
                   {"bias", vec_json(r.bias)},
                   {"abs_bias", vec_json(r.abs_bias)},
                   {"rmse", vec_json(r.rmse)},
                   {"rmse_plus", r.rmse_plus},
                   {"replications", r.replications},
                   {"failures", r.failures},
                   {"flagged", r.flagged}});
  return out;
}

}  // namespace psalt

#endif
