#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "psalt/config.hpp"
#include "psalt/io.hpp"
#include "psalt/run.hpp"

using namespace psalt;
namespace fs = std::filesystem;

namespace {

const fs::path kData = PSALT_DATA_DIR;

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() /
            (std::string("psalt_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

json lightbulb_doc(const std::string& command) {
  return {{"command", command},
          {"plan", (kData / "lightbulbs_plan.json").string()},
          {"data", (kData / "lightbulbs.csv").string()},
          {"reps", 20},
          {"seed", 5}};
}

json small_grid() { return {{"alphas", {-6, 2}}, {"betas", {0, 0.1, 1}}, {"gammas", {0.16, 0.5}}}; }

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_doc(const json& doc) {
  std::ostringstream out, err;
  int code;
  try {
    code = run(parse_config(doc), out, err);
  } catch (const ConfigError& e) {
    err << e.what();
    code = kExitConfig;
  }
  return {code, out.str(), err.str()};
}

std::vector<std::string> listing(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, MinimalFitUsesDefaults) {
  const auto cfg = parse_config({{"command", "fit"}, {"plan", "p.json"}, {"data", "d.csv"}});
  EXPECT_EQ(cfg.command, Command::fit);
  EXPECT_EQ(cfg.plan_path, "p.json");
  EXPECT_FALSE(cfg.tuning.has_value());
  EXPECT_EQ(cfg.grid.points().size(), TuningGrid::default_grid().points().size());
  EXPECT_EQ(cfg.swarm.size, 20u);
  EXPECT_EQ(cfg.swarm.w, 0.3);
  EXPECT_EQ(cfg.swarm.c1, 0.5);
  EXPECT_EQ(cfg.swarm.max_iter, 500);
  EXPECT_EQ(cfg.cost.c_a, 850.0);
  EXPECT_EQ(cfg.k_weighting, KWeighting::literal);
  EXPECT_EQ(cfg.format, OutputFormat::json);
  EXPECT_NO_THROW(validate_config(cfg));
}

TEST(Config, BetaOutOfRangeNamesPath) {
  try {
    parse_config({{"command", "fit"}, {"tuning", {{"alpha", 1}, {"beta", 1.5}, {"gamma", 0.5}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "tuning.beta");
  }
  try {
    parse_config({{"command", "simulate"},
                  {"estimators", {{{"tuning", {{"beta", -0.1}}}}}}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.path(), "estimators[0].tuning.beta");
  }
}

TEST(Config, RejectsUnknownKeysAndBadTypes) {
  const std::vector<std::pair<json, std::string>> cases{
      {{{"command", "fit"}, {"colour", 1}}, "colour"},
      {{{"command", "fit"}, {"cost", {{"cx", 1}}}}, "cost.cx"},
      {{{"command", "fit"}, {"seed", "x"}}, "seed"},
      {{{"command", "fit"}, {"theta", {1, 2}}}, "theta"},
      {{{"command", "fit"}, {"theta", {1, -2, 3}}}, "theta[1]"},
      {{{"command", "dance"}}, "command"},
      {{{"command", "tune"}, {"method", "xyz"}}, "method"},
      {{{"command", "fit"}, {"k_weighting", "both"}}, "k_weighting"},
      {{{"command", "fit"}, {"groups", {{{"nu", -1}}}}}, "groups[0].nu"},
      {{{"command", "fit"}, {"swarm", {{"size", 0}}}}, "swarm.size"},
      {{{"command", "fit"}, {"cost", {{"cv", 500}}}}, "cost"},
      {{{"plan", "x"}}, "command"},
  };
  for (const auto& [doc, path] : cases) {
    try {
      parse_config(doc);
      ADD_FAILURE() << "accepted " << doc.dump();
    } catch (const ConfigError& e) {
      EXPECT_EQ(e.path(), path) << e.what();
    }
  }
}

TEST(Config, SubcommandMustAgree) {
  EXPECT_THROW(parse_config({{"command", "fit"}}, Command::gof), ConfigError);
  EXPECT_EQ(parse_config(json::object(), Command::gof).command, Command::gof);
}

TEST(Config, RequiredFieldsPerCommand) {
  EXPECT_THROW(validate_config(parse_config({{"command", "fit"}, {"plan", "p"}})), ConfigError);
  EXPECT_THROW(validate_config(parse_config({{"command", "design"}, {"theta", {1, 1, 1}}})), ConfigError);
  EXPECT_THROW(validate_config(parse_config({{"command", "influence"}, {"plan", "p"}})), ConfigError);
}

TEST(Config, RelativePathsResolveAgainstBase) {
  const auto cfg = parse_config({{"command", "fit"}, {"plan", "a/p.json"}, {"data", "/abs/d.csv"}},
                                std::nullopt, "/root/cfg");
  EXPECT_EQ(cfg.plan_path, "/root/cfg/a/p.json");
  EXPECT_EQ(cfg.data_path, "/abs/d.csv");
}

TEST(Config, RoundTrip) {
  json doc{{"command", "design"},
           {"theta", {1.6, 1.1, 2.7}},
           {"tuning", {{"alpha", -6}, {"beta", 0.1}, {"gamma", 0.16}}},
           {"cost", {{"budget", 12000}}},
           {"swarm", {{"size", 10}, {"seed", 9}}},
           {"groups", {{{"nu", 3}}, {{"nu", 8}, {"n_inspections", 2}, {"n_max", 40}}}},
           {"contamination", {{"epsilon", 0.1}, {"kind", "plain_weibull"}}},
           {"estimators", {{{"name", "A"}}, {{"name", "B"}, {"tuning", {{"gamma", 0.3}}}}}},
           {"k_weighting", "proportional"},
           {"format", "csv"}};
  const json once = config_to_json(parse_config(doc));
  const json twice = config_to_json(parse_config(once));
  EXPECT_EQ(once, twice);
  EXPECT_EQ(once["cost"]["budget"], 12000.0);
  EXPECT_EQ(once["groups"][1]["n_max"], 40.0);
  EXPECT_EQ(once["estimators"][1]["tuning"]["gamma"], 0.3);
}

TEST(Io, PlanAndCountsParsing) {
  const auto plan = load_plan(kData / "lightbulbs_plan.json");
  ASSERT_EQ(plan.n_groups(), 2u);
  EXPECT_EQ(plan.groups[1].n_units, 61);
  const auto counts = load_counts(kData / "lightbulbs.csv", plan);
  EXPECT_EQ(counts.cells, (std::vector<std::vector<long>>{{18, 27, 8, 9}, {27, 7, 19, 8}}));
  const auto again = parse_counts_csv(counts_to_csv(counts), plan);
  EXPECT_EQ(again.cells, counts.cells);
  EXPECT_THROW(parse_counts_csv("group,time\n1,0.1\n", plan), ConfigError);
  EXPECT_THROW(parse_counts_csv("group,failure_time\n3,0.1\n", plan), ConfigError);
  EXPECT_THROW(parse_counts_csv("group,failure_time\n1,abc\n", plan), ConfigError);
  EXPECT_THROW(parse_counts_csv("group,cell,count\n1,1,70\n", plan), ConfigError);
  EXPECT_THROW(plan_from_json(json{{"groups", {{{"n", 5}, {"nu", 1}, {"tau", {0.5, 0.2}}}}}}), ConfigError);
  EXPECT_THROW(plan_from_json(json{{"groups", {{{"n", 5}, {"nu", 1}, {"tau", {0.5}}, {"x", 1}}}}}),
               ConfigError);
}

TEST(Io, NineSignificantDigits) {
  EXPECT_EQ(fmt9(3.848737123456), "3.84873712");
  EXPECT_EQ(fmt9(0.000071), "7.1e-05");
  EXPECT_EQ(fmt9(std::numeric_limits<double>::infinity()), "inf");
}

TEST(Io, AtomicWriteReplacesWithoutTemporaries) {
  TempDir dir;
  const auto f = dir / "x.txt";
  write_atomic(f, "one");
  write_atomic(f, "two");
  EXPECT_EQ(read_text(f), "two");
  EXPECT_EQ(listing(dir.path()), std::vector<std::string>{"x.txt"});
}

TEST(Run, FitEmitsTableShapedJson) {
  TempDir dir;
  json doc = lightbulb_doc("fit");
  doc["output"] = (dir / "fit.json").string();
  ASSERT_EQ(run_doc(doc).code, kExitOk);
  const json out = json::parse(read_text(dir / "fit.json"));
  EXPECT_EQ(out["estimator"], "MLE");
  EXPECT_EQ(out["theta"].size(), 3u);
  EXPECT_EQ(out["intervals"].size(), 3u);
  EXPECT_EQ(out["bootstrap"]["bias"].size(), 3u);
  EXPECT_TRUE(out["converged"].get<bool>());
  EXPECT_NEAR(out["theta"][0].get<double>(), 2.3271, 1e-3);

  doc["tuning"] = {{"alpha", -6}, {"beta", 0.1}, {"gamma", 0.16}};
  doc["format"] = "csv";
  doc["output"] = (dir / "fit.csv").string();
  ASSERT_EQ(run_doc(doc).code, kExitOk);
  const auto csv = read_text(dir / "fit.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "param,estimate,bt_bias,lower,upper");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Run, ByteIdenticalReruns) {
  TempDir dir;
  for (const char* cmd : {"fit", "gof", "simulate", "tune", "design"}) {
    json doc = lightbulb_doc(cmd);
    if (std::string(cmd) == "simulate") {
      doc["plan"] = (kData / "simulation_plan.json").string();
      doc.erase("data");
      doc["theta"] = {1.6, 1.1, 2.7};
      doc["contamination"] = {{"epsilon", 0.16}};
      doc["estimators"] = {{{"name", "MLE"}}, {{"name", "EP"}, {"tuning", {{"alpha", 2.5}, {"beta", 0.5}, {"gamma", 0.14}}}}};
    }
    if (std::string(cmd) == "tune") doc["grid"] = small_grid();
    if (std::string(cmd) == "design") {
      doc = {{"command", "design"}, {"theta", {1.6, 1.1, 2.7}},
             {"tuning", {{"alpha", 1}, {"beta", 0}, {"gamma", 0.3}}},
             {"swarm", {{"max_iter", 40}, {"seed", 4}}}};
    }
    doc["output"] = (dir / (std::string(cmd) + "_1.json")).string();
    ASSERT_EQ(run_doc(doc).code, kExitOk) << cmd;
    doc["output"] = (dir / (std::string(cmd) + "_2.json")).string();
    ASSERT_EQ(run_doc(doc).code, kExitOk) << cmd;
    EXPECT_EQ(read_text(dir / (std::string(cmd) + "_1.json")),
              read_text(dir / (std::string(cmd) + "_2.json")))
        << cmd;
  }
  const auto files = listing(dir.path());
  EXPECT_NE(std::find(files.begin(), files.end(), "tune_1.scores.csv"), files.end());
  EXPECT_NE(std::find(files.begin(), files.end(), "design_1.trace.csv"), files.end());
}

TEST(Run, GofPrintsStatisticAndPValue) {
  const auto r = run_doc(lightbulb_doc("gof"));
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json out = json::parse(r.out);
  EXPECT_GT(out["ts"].get<double>(), 0.0);
  const double p = out["p_value"].get<double>();
  EXPECT_GE(p, 0.0);
  EXPECT_LE(p, 1.0);
}

TEST(Run, TuneEveryMethod) {
  for (const char* m : {"csm", "iwj", "wj", "amax", "mae", "amed"}) {
    json doc = lightbulb_doc("tune");
    doc["grid"] = small_grid();
    doc["method"] = m;
    const auto r = run_doc(doc);
    ASSERT_EQ(r.code, kExitOk) << m << r.err;
    const json out = json::parse(r.out);
    EXPECT_EQ(out["method"], m);
    EXPECT_TRUE(std::isfinite(out["score"].get<double>()));
  }
}

TEST(Run, TuneCsvTable) {
  TempDir dir;
  json doc = lightbulb_doc("tune");
  doc["grid"] = small_grid();
  doc["format"] = "csv";
  doc["output"] = (dir / "t.csv").string();
  ASSERT_EQ(run_doc(doc).code, kExitOk);
  const auto csv = read_text(dir / "t.csv");
  const auto rows = std::count(csv.begin(), csv.end(), '\n');
  const TuningGrid grid{{-6, 2}, {0, 0.1, 1}, {0.16, 0.5}};
  EXPECT_EQ(static_cast<std::size_t>(rows), 1 + grid.points().size());
  EXPECT_TRUE(fs::exists(dir / "t.selected.json"));
}

TEST(Run, CovInfluenceCells) {
  json cov{{"command", "cov"}, {"plan", (kData / "simulation_plan.json").string()}, {"theta", {1.6, 1.1, 2.7}},
           {"tuning", {{"alpha", -1}, {"beta", 0.2}, {"gamma", 1.0}}}};
  auto r = run_doc(cov);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json c = json::parse(r.out);
  EXPECT_EQ(c["cov"].size(), 3u);
  EXPECT_EQ(c["J"][0][1], c["J"][1][0]);

  json cov_fit = lightbulb_doc("cov");
  r = run_doc(cov_fit);
  ASSERT_EQ(r.code, kExitOk) << r.err;

  json inf{{"command", "influence"}, {"plan", (kData / "simulation_plan.json").string()},
           {"theta", {1.6, 1.1, 2.7}}, {"tuning", {{"alpha", -1}, {"beta", 0.2}, {"gamma", 1.0}}}};
  r = run_doc(inf);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 64);
  inf["outliers"] = {3, 0, 2};
  r = run_doc(inf);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 2);
  EXPECT_EQ(r.out.substr(r.out.find('\n') + 1, 6), "4,1,3,");
  inf["outliers"] = {3, 0, 7};
  EXPECT_EQ(run_doc(inf).code, kExitConfig);

  json cells{{"command", "cells"}, {"plan", (kData / "simulation_plan.json").string()}, {"theta", {1.6, 1.1, 2.7}}};
  r = run_doc(cells);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 12);
}

TEST(Run, SimulateCsv) {
  json doc{{"command", "simulate"}, {"plan", (kData / "simulation_plan.json").string()},
           {"theta", {1.6, 1.1, 2.7}}, {"reps", 10}, {"format", "csv"},
           {"tuning", {{"alpha", 2.5}, {"beta", 0.5}, {"gamma", 0.14}}}};
  const auto r = run_doc(doc);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "estimator,param,bias,rmse");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1 + 2 * 4);
}

TEST(Run, ExitCodesAndNoPartialOutput) {
  TempDir dir;
  json missing = lightbulb_doc("fit");
  missing["data"] = (dir / "nope.csv").string();
  missing["output"] = (dir / "out.json").string();
  auto r = run_doc(missing);
  EXPECT_EQ(r.code, kExitConfig);
  EXPECT_NE(r.err.find("nope.csv"), std::string::npos);

  json bad = lightbulb_doc("fit");
  bad["tuning"] = {{"beta", 1.5}};
  EXPECT_EQ(run_doc(bad).code, kExitConfig);

  // One group with one inspection cannot identify three parameters.
  write_atomic(dir / "thin.json", R"({"groups": [{"n": 30, "nu": 3, "tau": [0.5]}]})");
  json singular{{"command", "cov"}, {"plan", (dir / "thin.json").string()}, {"theta", {1.6, 1.1, 2.7}},
                {"output", (dir / "cov.json").string()}};
  r = run_doc(singular);
  EXPECT_EQ(r.code, kExitComputation);
  EXPECT_NE(r.err.find("singular"), std::string::npos);

  EXPECT_EQ(listing(dir.path()), std::vector<std::string>{"thin.json"});
}

TEST(Binary, EndToEnd) {
  TempDir dir;
  const std::string exe = PSALT_CLI_PATH;
  const std::string plan = (kData / "lightbulbs_plan.json").string();
  const std::string data = (kData / "lightbulbs.csv").string();
  const std::string quiet = " > " + (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string();
  EXPECT_EQ(shell(exe + " fit --plan " + plan + " --data " + data + " --reps 10 --out " +
                  (dir / "f.json").string() + quiet),
            0);
  EXPECT_TRUE(fs::exists(dir / "f.json"));
  EXPECT_EQ(shell(exe + " gof --plan " + plan + " --data " + data + " --reps 10 --seed 3" + quiet), 0);
  EXPECT_NE(read_text(dir / "stdout.txt").find("p_value"), std::string::npos);
  write_atomic(dir / "cfg.json", R"({"command": "tune", "plan": ")" + plan + R"(", "data": ")" + data +
                                     R"(", "grid": {"alphas": [-6], "betas": [0.1], "gammas": [0.16]}})");
  EXPECT_EQ(shell(exe + " tune --config " + (dir / "cfg.json").string() + " --method mae" + quiet), 0);
  EXPECT_NE(read_text(dir / "stdout.txt").find("\"mae\""), std::string::npos);
  EXPECT_EQ(shell(exe + " fit --plan " + plan + quiet), 2);
  EXPECT_EQ(shell(exe + " fit --bogus" + quiet), 2);
  EXPECT_EQ(shell(exe + " cov --plan " + plan + " --data " + data + " --k-weighting proportional" + quiet), 0);
}
