#ifndef PSALT_CONFIG_HPP
#define PSALT_CONFIG_HPP

// Run configuration for the command-line front end.
//
//   {
//     "command": "fit",                       optional; must match the subcommand
//     "plan": "plan.json", "data": "data.csv", paths relative to the config file
//     "theta": [1.6, 1.1, 2.7],
//     "tuning": {"alpha": -6, "beta": 0.1, "gamma": 0.16},
//     "grid": {"alphas": [...], "betas": [...], "gammas": [...]},
//     "method": "csm",                        tune: csm|iwj|wj|amax|mae|amed
//     "estimators": [{"name": "MLE"}, {"name": "E1", "tuning": {...}}],
//     "contamination": {"epsilon": 0.16, "contaminant": [1.4, 1.0, 2.6], "kind": "linked_weibull"},
//     "cost": {"ca": 850, "cu": 120, "c0": 55, "cs": 15, "cv": 50, "budget": 10000, "tau_max": 1},
//     "swarm": {"size": 20, "w": 0.3, "c1": 0.5, "c2": 0.5, "max_iter": 500, "tol": 1e-8,
//               "patience": 50, "seed": 1},
//     "groups": [{"nu": 3, "n_inspections": 3, "n_max": 75}, ...],
//     "outliers": [3, 0],                     influence: hot cell per group (0-based)
//     "level": 0.95, "seed": 20240601, "reps": 1000, "threads": 1,
//     "k_weighting": "literal", "format": "json", "output": "out.json"
//   }
//
// Unknown keys are rejected and every error names the JSON path it concerns.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "psalt/asymptotics.hpp"
#include "psalt/design.hpp"
#include "psalt/divergence.hpp"
#include "psalt/errors.hpp"
#include "psalt/model.hpp"
#include "psalt/simulation.hpp"
#include "psalt/tuning.hpp"

namespace psalt {

enum class Command { fit, simulate, tune, design, gof, cov, influence, cells };
enum class OutputFormat { json, csv };
enum class TuneMethod { csm, iwj, wj, amax, mae, amed };

struct RunConfig {
  Command command = Command::fit;
  std::string plan_path;
  std::string data_path;
  std::optional<ModelParams> theta;
  std::optional<TuningParams> tuning;
  TuningGrid grid = TuningGrid::default_grid();
  TuneMethod method = TuneMethod::csm;
  std::vector<EstimatorSpec> estimators;
  ContaminationSpec contamination;
  CostParams cost;
  SwarmOptions swarm;
  DesignProblem design = DesignProblem::reference_setting();
  std::vector<std::size_t> outliers;
  double level = 0.95;
  std::uint64_t seed = 20240601;
  int reps = 1000;
  unsigned threads = 1;
  KWeighting k_weighting = KWeighting::literal;
  OutputFormat format = OutputFormat::json;
  std::string output_path;
};

namespace detail {

template <class E>
struct EnumName {
  E value;
  const char* name;
};

inline constexpr EnumName<Command> kCommands[] = {
    {Command::fit, "fit"},   {Command::simulate, "simulate"}, {Command::tune, "tune"},
    {Command::design, "design"}, {Command::gof, "gof"},      {Command::cov, "cov"},
    {Command::influence, "influence"}, {Command::cells, "cells"}};
inline constexpr EnumName<TuneMethod> kMethods[] = {
    {TuneMethod::csm, "csm"}, {TuneMethod::iwj, "iwj"}, {TuneMethod::wj, "wj"},
    {TuneMethod::amax, "amax"}, {TuneMethod::mae, "mae"}, {TuneMethod::amed, "amed"}};
inline constexpr EnumName<KWeighting> kWeightings[] = {{KWeighting::literal, "literal"},
                                                       {KWeighting::proportional, "proportional"}};
inline constexpr EnumName<OutputFormat> kFormats[] = {{OutputFormat::json, "json"},
                                                      {OutputFormat::csv, "csv"}};
inline constexpr EnumName<ContaminantKind> kKinds[] = {
    {ContaminantKind::linked_weibull, "linked_weibull"},
    {ContaminantKind::plain_weibull, "plain_weibull"}};

template <class E, std::size_t N>
E parse_enum(const std::string& s, const EnumName<E> (&table)[N], const std::string& path) {
  for (const auto& e : table)
    if (s == e.name) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += (allowed.empty() ? "" : "|") + std::string(e.name);
  throw ConfigError(path, "expected one of " + allowed + ", got '" + s + "'");
}

template <class E, std::size_t N>
const char* enum_name(E v, const EnumName<E> (&table)[N]) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

class Reader {
 public:
  Reader(const nlohmann::json& obj, std::string path, std::set<std::string> allowed)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_.empty() ? "$" : path_, "expected an object");
    for (const auto& [key, _] : obj_.items())
      if (!allowed.count(key)) throw ConfigError(at(key), "unknown key");
  }

  bool has(const std::string& key) const { return obj_.contains(key); }
  const nlohmann::json& raw(const std::string& key) const { return obj_.at(key); }
  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key) const {
    const auto& v = obj_.at(key);
    if (!v.is_number()) throw ConfigError(at(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(at(key), "must be finite");
    return d;
  }

  double number_or(const std::string& key, double fallback) const {
    return has(key) ? number(key) : fallback;
  }

  long integer(const std::string& key, long lo) const {
    const auto& v = obj_.at(key);
    if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
    const long n = v.get<long>();
    if (n < lo) throw ConfigError(at(key), "must be at least " + std::to_string(lo));
    return n;
  }

  std::string string(const std::string& key) const {
    const auto& v = obj_.at(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const std::string& key) const {
    const auto& v = obj_.at(key);
    if (!v.is_array() || v.empty()) throw ConfigError(at(key), "expected a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ConfigError(at(key), "expected a nonempty array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

 private:
  const nlohmann::json& obj_;
  std::string path_;
};

inline TuningParams parse_tuning(const nlohmann::json& v, const std::string& path) {
  Reader r(v, path, {"alpha", "beta", "gamma"});
  TuningParams t;
  t.alpha = r.number_or("alpha", t.alpha);
  t.beta = r.number_or("beta", t.beta);
  t.gamma = r.number_or("gamma", t.gamma);
  if (t.beta < 0.0 || t.beta > 1.0) throw ConfigError(r.at("beta"), "must lie in [0, 1]");
  if (t.gamma < 0.0) throw ConfigError(r.at("gamma"), "must be nonnegative");
  if (t.beta > 0.0 && t.alpha == 0.0) throw ConfigError(r.at("alpha"), "must be nonzero when beta > 0");
  return t;
}

inline nlohmann::json tuning_json(const TuningParams& t) {
  return {{"alpha", t.alpha}, {"beta", t.beta}, {"gamma", t.gamma}};
}

inline ModelParams parse_theta(const nlohmann::json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) throw ConfigError(path, "expected [a, b, mu]");
  ModelParams th;
  for (std::size_t l = 0; l < 3; ++l) {
    if (!v[l].is_number()) throw ConfigError(path + "[" + std::to_string(l) + "]", "expected a number");
    const double x = v[l].get<double>();
    if (!(x > 0.0) || !std::isfinite(x))
      throw ConfigError(path + "[" + std::to_string(l) + "]", "must be finite and positive");
    (l == 0 ? th.a : l == 1 ? th.b : th.mu) = x;
  }
  return th;
}

inline std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? p : (base / path).lexically_normal().string();
}

}  // namespace detail

inline const char* command_name(Command c) { return detail::enum_name(c, detail::kCommands); }
inline Command parse_command(const std::string& s) {
  return detail::parse_enum(s, detail::kCommands, "command");
}
inline KWeighting parse_k_weighting(const std::string& s, const std::string& path = "k_weighting") {
  return detail::parse_enum(s, detail::kWeightings, path);
}
inline OutputFormat parse_format(const std::string& s, const std::string& path = "format") {
  return detail::parse_enum(s, detail::kFormats, path);
}
inline TuneMethod parse_method(const std::string& s, const std::string& path = "method") {
  return detail::parse_enum(s, detail::kMethods, path);
}
inline const char* method_name(TuneMethod m) { return detail::enum_name(m, detail::kMethods); }

/// Parses and validates a config document. `base_dir` anchors relative paths.
inline RunConfig parse_config(const nlohmann::json& doc, std::optional<Command> command = {},
                              const std::filesystem::path& base_dir = {}) {
  using detail::Reader;
  Reader r(doc, "",
           {"command", "plan", "data", "theta", "tuning", "grid", "method", "estimators",
            "contamination", "cost", "swarm", "groups", "outliers", "level", "seed", "reps",
            "threads", "k_weighting", "format", "output"});
  RunConfig cfg;
  if (r.has("command")) {
    cfg.command = parse_command(r.string("command"));
    if (command && *command != cfg.command)
      throw ConfigError("command", std::string("config is for '") + command_name(cfg.command) +
                                       "' but the subcommand is '" + command_name(*command) + "'");
  } else if (command) {
    cfg.command = *command;
  } else {
    throw ConfigError("command", "missing");
  }

  if (r.has("plan")) cfg.plan_path = detail::resolve(r.string("plan"), base_dir);
  if (r.has("data")) cfg.data_path = detail::resolve(r.string("data"), base_dir);
  if (r.has("output")) cfg.output_path = detail::resolve(r.string("output"), base_dir);
  if (r.has("theta")) cfg.theta = detail::parse_theta(r.raw("theta"), "theta");
  if (r.has("tuning")) cfg.tuning = detail::parse_tuning(r.raw("tuning"), "tuning");
  if (r.has("grid")) {
    Reader g(r.raw("grid"), "grid", {"alphas", "betas", "gammas"});
    const auto def = TuningGrid::default_grid();
    cfg.grid.alphas = g.has("alphas") ? g.numbers("alphas") : def.alphas;
    cfg.grid.betas = g.has("betas") ? g.numbers("betas") : def.betas;
    cfg.grid.gammas = g.has("gammas") ? g.numbers("gammas") : def.gammas;
    for (double b : cfg.grid.betas)
      if (b < 0.0 || b > 1.0) throw ConfigError("grid.betas", "entries must lie in [0, 1]");
    for (double c : cfg.grid.gammas)
      if (c < 0.0) throw ConfigError("grid.gammas", "entries must be nonnegative");
    for (double a : cfg.grid.alphas)
      if (a == 0.0) throw ConfigError("grid.alphas", "entries must be nonzero");
  }
  if (r.has("method")) cfg.method = parse_method(r.string("method"));
  if (r.has("estimators")) {
    const auto& arr = r.raw("estimators");
    if (!arr.is_array() || arr.empty()) throw ConfigError("estimators", "expected a nonempty array");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string at = "estimators[" + std::to_string(k) + "]";
      Reader e(arr[k], at, {"name", "tuning"});
      EstimatorSpec spec;
      spec.name = e.has("name") ? e.string("name") : (e.has("tuning") ? "MEPDE" : "MLE");
      if (e.has("tuning")) spec.tuning = detail::parse_tuning(e.raw("tuning"), at + ".tuning");
      cfg.estimators.push_back(std::move(spec));
    }
  }
  if (r.has("contamination")) {
    Reader c(r.raw("contamination"), "contamination", {"epsilon", "contaminant", "kind"});
    cfg.contamination.epsilon = c.number_or("epsilon", 0.0);
    if (cfg.contamination.epsilon < 0.0 || cfg.contamination.epsilon > 1.0)
      throw ConfigError("contamination.epsilon", "must lie in [0, 1]");
    if (c.has("contaminant"))
      cfg.contamination.contaminant = detail::parse_theta(c.raw("contaminant"), "contamination.contaminant");
    if (c.has("kind"))
      cfg.contamination.kind = detail::parse_enum(c.string("kind"), detail::kKinds, "contamination.kind");
  }
  if (r.has("cost")) {
    Reader c(r.raw("cost"), "cost", {"ca", "cu", "c0", "cs", "cv", "budget", "tau_max"});
    auto& k = cfg.cost;
    k.c_a = c.number_or("ca", k.c_a);
    k.c_u = c.number_or("cu", k.c_u);
    k.c_0 = c.number_or("c0", k.c_0);
    k.c_s = c.number_or("cs", k.c_s);
    k.c_v = c.number_or("cv", k.c_v);
    k.budget = c.number_or("budget", k.budget);
    k.tau_max = c.number_or("tau_max", k.tau_max);
    try {
      k.validate();
    } catch (const DomainError& e) {
      throw ConfigError("cost", e.what());
    }
  }
  if (r.has("swarm")) {
    Reader s(r.raw("swarm"), "swarm",
             {"size", "w", "c1", "c2", "max_iter", "tol", "patience", "seed"});
    auto& o = cfg.swarm;
    if (s.has("size")) o.size = static_cast<std::size_t>(s.integer("size", 1));
    o.w = s.number_or("w", o.w);
    o.c1 = s.number_or("c1", o.c1);
    o.c2 = s.number_or("c2", o.c2);
    if (s.has("max_iter")) o.max_iter = static_cast<int>(s.integer("max_iter", 0));
    o.tol = s.number_or("tol", o.tol);
    if (s.has("patience")) o.patience = static_cast<int>(s.integer("patience", 1));
    if (s.has("seed")) o.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
    try {
      o.validate();
    } catch (const DomainError& e) {
      throw ConfigError("swarm", e.what());
    }
  }
  if (r.has("groups")) {
    const auto& arr = r.raw("groups");
    if (!arr.is_array() || arr.empty()) throw ConfigError("groups", "expected a nonempty array");
    cfg.design = {};
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string at = "groups[" + std::to_string(k) + "]";
      Reader g(arr[k], at, {"nu", "n_inspections", "n_max"});
      if (!g.has("nu")) throw ConfigError(at + ".nu", "missing");
      const double nu = g.number("nu");
      if (!(nu > 0.0)) throw ConfigError(at + ".nu", "must be positive");
      cfg.design.stress_rates.push_back(nu);
      cfg.design.n_inspections.push_back(
          g.has("n_inspections") ? static_cast<std::size_t>(g.integer("n_inspections", 1)) : 3);
      const double n_max = g.number_or("n_max", 75.0);
      if (!(n_max >= 1.0)) throw ConfigError(at + ".n_max", "must be at least 1");
      cfg.design.n_max.push_back(n_max);
    }
  }
  if (r.has("outliers")) {
    const auto& arr = r.raw("outliers");
    if (!arr.is_array()) throw ConfigError("outliers", "expected an array of cell indices");
    for (const auto& v : arr) {
      if (!v.is_number_integer() || v.get<long>() < 0)
        throw ConfigError("outliers", "entries must be nonnegative integers");
      cfg.outliers.push_back(v.get<std::size_t>());
    }
  }
  if (r.has("level")) {
    cfg.level = r.number("level");
    if (!(cfg.level > 0.0 && cfg.level < 1.0)) throw ConfigError("level", "must lie in (0, 1)");
  }
  if (r.has("seed")) cfg.seed = static_cast<std::uint64_t>(r.integer("seed", 0));
  if (r.has("reps")) cfg.reps = static_cast<int>(r.integer("reps", 1));
  if (r.has("threads")) cfg.threads = static_cast<unsigned>(r.integer("threads", 1));
  if (r.has("k_weighting")) cfg.k_weighting = parse_k_weighting(r.string("k_weighting"));
  if (r.has("format")) cfg.format = parse_format(r.string("format"));
  return cfg;
}

/// Required inputs per command; run after command-line overrides are applied.
inline void validate_config(const RunConfig& cfg) {
  auto need = [](bool ok, const char* path, const char* what) {
    if (!ok) throw ConfigError(path, what);
  };
  switch (cfg.command) {
    case Command::fit:
    case Command::tune:
    case Command::gof:
      need(!cfg.plan_path.empty(), "plan", "required");
      need(!cfg.data_path.empty(), "data", "required");
      break;
    case Command::simulate:
      need(!cfg.plan_path.empty(), "plan", "required");
      need(cfg.theta.has_value(), "theta", "required");
      break;
    case Command::cov:
      need(!cfg.plan_path.empty(), "plan", "required");
      need(cfg.theta.has_value() || !cfg.data_path.empty(), "theta", "theta or data is required");
      break;
    case Command::influence:
      need(!cfg.plan_path.empty(), "plan", "required");
      need(cfg.theta.has_value(), "theta", "required");
      need(cfg.tuning.has_value(), "tuning", "required");
      break;
    case Command::cells:
      need(!cfg.plan_path.empty(), "plan", "required");
      need(cfg.theta.has_value(), "theta", "required");
      break;
    case Command::design:
      need(cfg.theta.has_value(), "theta", "required");
      need(cfg.tuning.has_value(), "tuning", "required");
      break;
  }
}

inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json doc;
  doc["command"] = command_name(cfg.command);
  if (!cfg.plan_path.empty()) doc["plan"] = cfg.plan_path;
  if (!cfg.data_path.empty()) doc["data"] = cfg.data_path;
  if (!cfg.output_path.empty()) doc["output"] = cfg.output_path;
  if (cfg.theta) doc["theta"] = {cfg.theta->a, cfg.theta->b, cfg.theta->mu};
  if (cfg.tuning) doc["tuning"] = detail::tuning_json(*cfg.tuning);
  doc["grid"] = {{"alphas", cfg.grid.alphas}, {"betas", cfg.grid.betas}, {"gammas", cfg.grid.gammas}};
  doc["method"] = method_name(cfg.method);
  if (!cfg.estimators.empty()) {
    auto& arr = doc["estimators"] = nlohmann::json::array();
    for (const auto& e : cfg.estimators) {
      nlohmann::json item{{"name", e.name}};
      if (e.tuning) item["tuning"] = detail::tuning_json(*e.tuning);
      arr.push_back(item);
    }
  }
  const auto& c = cfg.contamination;
  doc["contamination"] = {{"epsilon", c.epsilon},
                          {"contaminant", {c.contaminant.a, c.contaminant.b, c.contaminant.mu}},
                          {"kind", detail::enum_name(c.kind, detail::kKinds)}};
  const auto& k = cfg.cost;
  doc["cost"] = {{"ca", k.c_a}, {"cu", k.c_u}, {"c0", k.c_0}, {"cs", k.c_s},
                 {"cv", k.c_v}, {"budget", k.budget}, {"tau_max", k.tau_max}};
  const auto& s = cfg.swarm;
  doc["swarm"] = {{"size", s.size}, {"w", s.w}, {"c1", s.c1}, {"c2", s.c2}, {"max_iter", s.max_iter},
                  {"tol", s.tol}, {"patience", s.patience}, {"seed", s.seed}};
  auto& groups = doc["groups"] = nlohmann::json::array();
  for (std::size_t i = 0; i < cfg.design.n_groups(); ++i)
    groups.push_back({{"nu", cfg.design.stress_rates[i]},
                      {"n_inspections", cfg.design.n_inspections[i]},
                      {"n_max", cfg.design.n_max[i]}});
  if (!cfg.outliers.empty()) doc["outliers"] = cfg.outliers;
  doc["level"] = cfg.level;
  doc["seed"] = cfg.seed;
  doc["reps"] = cfg.reps;
  doc["threads"] = cfg.threads;
  doc["k_weighting"] = detail::enum_name(cfg.k_weighting, detail::kWeightings);
  doc["format"] = detail::enum_name(cfg.format, detail::kFormats);
  return doc;
}

}  // namespace psalt

#endif
