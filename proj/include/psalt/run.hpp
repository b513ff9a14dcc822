#ifndef PSALT_RUN_HPP
#define PSALT_RUN_HPP

// Command dispatch for the psalt executable. run() computes every artifact in
// memory first and only then writes them, each atomically, so a failed run
// leaves no output behind.

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "psalt/asymptotics.hpp"
#include "psalt/config.hpp"
#include "psalt/design.hpp"
#include "psalt/estimation.hpp"
#include "psalt/io.hpp"
#include "psalt/simulation.hpp"
#include "psalt/tuning.hpp"

namespace psalt {

enum ExitCode { kExitOk = 0, kExitComputation = 1, kExitConfig = 2 };

/// Output file name -> contents. The empty name means the primary output.
using Artifacts = std::map<std::string, std::string>;

namespace detail {

inline std::string dump(const json& doc) { return doc.dump(2) + "\n"; }

inline json interval_json(const std::array<Interval, 3>& ci) {
  json out = json::array();
  for (const auto& c : ci) out.push_back({c.lower, c.upper});
  return out;
}

inline Artifacts run_fit(const RunConfig& cfg) {
  const TestPlan plan = load_plan(cfg.plan_path);
  const ObservedCounts counts = load_counts(cfg.data_path, plan);
  const EstimatorSpec spec = cfg.tuning ? EstimatorSpec::mepde(*cfg.tuning) : EstimatorSpec::mle();
  const FitResult fit = fit_estimator(spec, counts, plan);
  if (!fit.converged) throw std::runtime_error("fit did not converge");
  const Mat3 cov = cfg.tuning ? asym_covariance(fit.theta_hat, plan, *cfg.tuning, cfg.k_weighting).cov
                              : mle_covariance(fit.theta_hat, plan);
  const auto ci = confidence_intervals(fit, cov, cfg.level);
  const auto bt = bootstrap_from(fit.theta_hat, plan, spec, cfg.reps, cfg.seed, cfg.threads);

  if (cfg.format == OutputFormat::csv) {
    static const char* names[] = {"a", "b", "mu"};
    std::string s = "param,estimate,bt_bias,lower,upper\n";
    const Vec3 est = fit.theta_hat.vec();
    for (int l = 0; l < 3; ++l)
      s += std::string(names[l]) + "," + fmt9(est[l]) + "," + fmt9(bt.bias[l]) + "," +
           fmt9(ci[l].lower) + "," + fmt9(ci[l].upper) + "\n";
    return {{"", s}};
  }
  json doc = fit_to_json(fit);
  doc["estimator"] = spec.name;
  if (cfg.tuning) doc["tuning"] = tuning_json(*cfg.tuning);
  doc["level"] = cfg.level;
  doc["intervals"] = interval_json(ci);
  doc["bootstrap"] = {{"bias", vec_json(bt.bias)},
                      {"rmse", vec_json(bt.rmse)},
                      {"rmse_plus", bt.rmse_plus},
                      {"replications", bt.replications},
                      {"failures", bt.failures}};
  return {{"", dump(doc)}};
}

inline Artifacts run_simulate(const RunConfig& cfg) {
  const TestPlan plan = load_plan(cfg.plan_path);
  std::vector<EstimatorSpec> est = cfg.estimators;
  if (est.empty()) {
    est.push_back(EstimatorSpec::mle());
    if (cfg.tuning) est.push_back(EstimatorSpec::mepde(*cfg.tuning));
  }
  cfg.contamination.validate();
  const auto reports =
      run_simulation(*cfg.theta, plan, cfg.contamination, est, cfg.reps, cfg.seed, cfg.threads);
  if (cfg.format == OutputFormat::csv) return {{"", mc_reports_to_csv(reports)}};
  json doc{{"theta0", theta_json(*cfg.theta)},
           {"epsilon", cfg.contamination.epsilon},
           {"reps", cfg.reps},
           {"seed", cfg.seed},
           {"reports", mc_reports_to_json(reports)}};
  return {{"", dump(doc)}};
}

inline Artifacts run_tune(const RunConfig& cfg) {
  const TestPlan plan = load_plan(cfg.plan_path);
  const ObservedCounts counts = load_counts(cfg.data_path, plan);
  const TuningOptions opt{cfg.k_weighting, cfg.threads};
  TuningSelection sel;
  switch (cfg.method) {
    case TuneMethod::csm: sel = csm_select(counts, plan, cfg.grid, opt); break;
    case TuneMethod::iwj: sel = iwj_select(counts, plan, cfg.grid, opt); break;
    case TuneMethod::wj: sel = wj_select(counts, plan, cfg.grid, std::nullopt, opt); break;
    case TuneMethod::amax:
      sel = min_error_select(counts, plan, cfg.grid, ErrorCriterion::amax, opt);
      break;
    case TuneMethod::mae: sel = min_error_select(counts, plan, cfg.grid, ErrorCriterion::mae, opt); break;
    case TuneMethod::amed:
      sel = min_error_select(counts, plan, cfg.grid, ErrorCriterion::amed, opt);
      break;
  }
  std::string table = "alpha,beta,gamma,score,a,b,mu\n";
  for (const auto& row : sel.table) {
    table += fmt9(row.tuning.alpha) + "," + fmt9(row.tuning.beta) + "," + fmt9(row.tuning.gamma) +
             "," + fmt9(row.score);
    if (row.fit)
      table += "," + fmt9(row.fit->theta_hat.a) + "," + fmt9(row.fit->theta_hat.b) + "," +
               fmt9(row.fit->theta_hat.mu) + "\n";
    else
      table += ",,,\n";
  }
  json doc{{"method", method_name(cfg.method)},
           {"selected", tuning_json(sel.tuning)},
           {"score", sel.score},
           {"iterations", sel.iterations},
           {"cycling", sel.cycling}};
  if (cfg.format == OutputFormat::csv) return {{"", table}, {".selected.json", dump(doc)}};
  return {{"", dump(doc)}, {".scores.csv", table}};
}

inline Artifacts run_design(const RunConfig& cfg) {
  SwarmOptions opt = cfg.swarm;
  opt.weighting = cfg.k_weighting;
  opt.threads = cfg.threads;
  const auto res = cpso(*cfg.theta, *cfg.tuning, cfg.cost, cfg.design, opt);
  std::string trace = "iter,gbest_phi,gbest_psi\n";
  for (const auto& row : res.trace)
    trace += std::to_string(row.iter) + "," + fmt9(row.gbest_phi) + "," + fmt9(row.gbest_psi) + "\n";
  json groups = json::array();
  for (std::size_t i = 0; i < res.best.allocation.size(); ++i)
    groups.push_back({{"nu", cfg.design.stress_rates[i]},
                      {"n", res.best.allocation[i]},
                      {"tau", res.best.inspection_times[i]}});
  json doc{{"tuning", tuning_json(*cfg.tuning)},
           {"groups", groups},
           {"cost", res.best.cost},
           {"violation", res.best.violation},
           {"objective", res.best.objective},
           {"feasible", res.feasible},
           {"iterations", res.iterations},
           {"k_weighting", cfg.k_weighting == KWeighting::literal ? "literal" : "proportional"}};
  if (cfg.format == OutputFormat::csv) return {{"", trace}, {".solution.json", dump(doc)}};
  return {{"", dump(doc)}, {".trace.csv", trace}};
}

inline Artifacts run_gof(const RunConfig& cfg) {
  const TestPlan plan = load_plan(cfg.plan_path);
  const ObservedCounts counts = load_counts(cfg.data_path, plan);
  const auto res = gof_test(counts, plan, cfg.reps, cfg.seed, cfg.threads);
  if (cfg.format == OutputFormat::csv)
    return {{"", "ts,p_value,replications,failures\n" + fmt9(res.ts) + "," + fmt9(res.p_value) + "," +
                     std::to_string(res.resampled.size()) + "," + std::to_string(res.failures) + "\n"}};
  json doc{{"ts", res.ts},
           {"p_value", res.p_value},
           {"estimate", theta_json(res.estimate)},
           {"replications", res.resampled.size()},
           {"failures", res.failures}};
  return {{"", dump(doc)}};
}

inline Artifacts run_cov(const RunConfig& cfg) {
  const TestPlan plan = load_plan(cfg.plan_path);
  const TuningParams tuning = cfg.tuning.value_or(TuningParams{1.0, 0.0, 0.0});
  FitResult fit;
  if (cfg.theta) {
    fit.theta_hat = *cfg.theta;
  } else {
    const ObservedCounts counts = load_counts(cfg.data_path, plan);
    fit = fit_estimator(EstimatorSpec::mepde(tuning), counts, plan);
    if (!fit.converged) throw std::runtime_error("fit did not converge");
  }
  const auto m = asym_covariance(fit.theta_hat, plan, tuning, cfg.k_weighting);
  const auto ci = confidence_intervals(fit, m.cov, cfg.level);
  if (cfg.format == OutputFormat::csv) {
    std::string s = "matrix,row,col,value\n";
    const std::pair<const char*, const Mat3*> mats[] = {{"J", &m.j_mat}, {"K", &m.k_mat}, {"cov", &m.cov}};
    for (const auto& [name, mat] : mats)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          s += std::string(name) + "," + std::to_string(r) + "," + std::to_string(c) + "," +
               fmt9((*mat)(r, c)) + "\n";
    return {{"", s}};
  }
  json doc{{"theta", theta_json(fit.theta_hat)},
           {"tuning", tuning_json(tuning)},
           {"k_weighting", cfg.k_weighting == KWeighting::literal ? "literal" : "proportional"},
           {"J", mat_json(m.j_mat)},
           {"K", mat_json(m.k_mat)},
           {"cov", mat_json(m.cov)},
           {"level", cfg.level},
           {"intervals", interval_json(ci)}};
  return {{"", dump(doc)}};
}

inline Artifacts run_influence(const RunConfig& cfg) {
  const TestPlan plan = load_plan(cfg.plan_path);
  const std::size_t k = plan.n_groups();
  std::vector<std::vector<std::size_t>> points;
  if (!cfg.outliers.empty()) {
    if (cfg.outliers.size() != k) throw ConfigError("outliers", "need one cell index per group");
    for (std::size_t i = 0; i < k; ++i)
      if (cfg.outliers[i] >= plan.groups[i].n_cells())
        throw ConfigError("outliers[" + std::to_string(i) + "]", "cell index out of range");
    points.push_back(cfg.outliers);
  } else {
    std::size_t total = 1;
    for (const auto& g : plan.groups) total *= g.n_cells();
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<std::size_t> idx(k);
      std::size_t rest = code;
      for (std::size_t i = k; i-- > 0;) {
        idx[i] = rest % plan.groups[i].n_cells();
        rest /= plan.groups[i].n_cells();
      }
      points.push_back(std::move(idx));
    }
  }
  std::string s;
  for (std::size_t i = 0; i < k; ++i) s += "cell_g" + std::to_string(i + 1) + ",";
  s += "if_a,if_b,if_mu,norm\n";
  for (const auto& pt : points) {
    std::vector<OutlierPoint> outliers;
    for (std::size_t i = 0; i < k; ++i)
      outliers.push_back(OutlierPoint::at(plan.groups[i].n_cells(), pt[i]));
    const Vec3 v = influence_function(outliers, *cfg.theta, plan, *cfg.tuning);
    for (std::size_t i = 0; i < k; ++i) s += std::to_string(pt[i] + 1) + ",";
    s += fmt9(v[0]) + "," + fmt9(v[1]) + "," + fmt9(v[2]) + "," + fmt9(v.norm()) + "\n";
  }
  return {{"", s}};
}

inline Artifacts run_cells(const RunConfig& cfg) {
  const TestPlan plan = load_plan(cfg.plan_path);
  return {{"", cells_to_csv(*cfg.theta, plan)}};
}

}  // namespace detail

/// Computes the artifacts of one command without touching the filesystem
/// beyond reading inputs.
inline Artifacts compute(const RunConfig& cfg) {
  validate_config(cfg);
  switch (cfg.command) {
    case Command::fit: return detail::run_fit(cfg);
    case Command::simulate: return detail::run_simulate(cfg);
    case Command::tune: return detail::run_tune(cfg);
    case Command::design: return detail::run_design(cfg);
    case Command::gof: return detail::run_gof(cfg);
    case Command::cov: return detail::run_cov(cfg);
    case Command::influence: return detail::run_influence(cfg);
    case Command::cells: return detail::run_cells(cfg);
  }
  return {};
}

/// Side files are named by inserting their suffix before the primary
/// output's extension: out.json + ".trace.csv" -> out.trace.csv.
inline std::filesystem::path side_path(const std::filesystem::path& primary, const std::string& suffix) {
  auto stem = primary.parent_path() / primary.stem();
  return stem.string() + suffix;
}

/// Runs a command and writes its artifacts. Primary output goes to stdout
/// when no output path is set; side files are then skipped.
inline int run(const RunConfig& cfg, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Artifacts art;
  try {
    art = compute(cfg);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "computation failed: " << e.what() << "\n";
    return kExitComputation;
  }
  try {
    if (cfg.output_path.empty()) {
      out << art.at("");
    } else {
      const std::filesystem::path primary(cfg.output_path);
      for (const auto& [suffix, text] : art)
        write_atomic(suffix.empty() ? primary : side_path(primary, suffix), text);
    }
  } catch (const std::exception& e) {
    err << "write failed: " << e.what() << "\n";
    return kExitComputation;
  }
  return kExitOk;
}

}  // namespace psalt

#endif
