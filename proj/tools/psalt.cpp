// psalt: fit, simulate, tune, design, gof, cov, influence and cells from a
// JSON run configuration. Command-line flags override the configuration.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "psalt/config.hpp"
#include "psalt/io.hpp"
#include "psalt/run.hpp"

namespace {

struct Flags {
  std::string config, plan, data, out, format, k_weighting, method;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;
  std::optional<unsigned> threads;
};

int dispatch(psalt::Command command, const Flags& f) {
  using namespace psalt;
  RunConfig cfg;
  try {
    json doc = json::object();
    std::filesystem::path base;
    if (!f.config.empty()) {
      try {
        doc = json::parse(read_text(f.config));
      } catch (const json::parse_error& e) {
        throw ConfigError(f.config, std::string("malformed JSON: ") + e.what());
      }
      base = std::filesystem::path(f.config).parent_path();
    }
    cfg = parse_config(doc, command, base);
    if (!f.plan.empty()) cfg.plan_path = f.plan;
    if (!f.data.empty()) cfg.data_path = f.data;
    if (!f.out.empty()) cfg.output_path = f.out;
    if (!f.format.empty()) cfg.format = parse_format(f.format, "--format");
    if (!f.k_weighting.empty()) cfg.k_weighting = parse_k_weighting(f.k_weighting, "--k-weighting");
    if (!f.method.empty()) cfg.method = parse_method(f.method, "--method");
    if (f.seed) cfg.seed = cfg.swarm.seed = *f.seed;
    if (f.reps) {
      if (*f.reps < 1) throw ConfigError("--reps", "must be at least 1");
      cfg.reps = *f.reps;
    }
    if (f.threads) {
      if (*f.threads < 1) throw ConfigError("--threads", "must be at least 1");
      cfg.threads = *f.threads;
    }
    validate_config(cfg);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return run(cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interval-censored ramp-stress life tests: estimation, tuning and design"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "JSON run configuration");
  app.add_option("--plan", f.plan, "test plan JSON (overrides the config)");
  app.add_option("--data", f.data, "data CSV (overrides the config)");
  app.add_option("--seed", f.seed, "root random seed");
  app.add_option("--out", f.out, "primary output path; stdout when absent");
  app.add_option("--format", f.format, "json or csv");
  app.add_option("--threads", f.threads, "worker threads");
  app.add_option("--reps", f.reps, "Monte-Carlo or bootstrap replicates");
  app.add_option("--k-weighting", f.k_weighting, "literal or proportional");

  const std::pair<const char*, const char*> commands[] = {
      {"fit", "MLE or MEPDE with Wald intervals and bootstrap bias"},
      {"simulate", "Monte-Carlo bias and RMSE under contamination"},
      {"tune", "select (alpha, beta, gamma) over a grid"},
      {"design", "A-optimal plan by constrained particle swarm"},
      {"gof", "goodness-of-fit statistic with bootstrap p-value"},
      {"cov", "J, K, sandwich covariance and Wald intervals"},
      {"influence", "influence function over the outlier lattice"},
      {"cells", "cell probabilities and score vectors"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (std::string(name) == "tune") sub->add_option("--method", f.method, "csm|iwj|wj|amax|mae|amed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return psalt::kExitConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  return dispatch(psalt::parse_command(name), f);
}
