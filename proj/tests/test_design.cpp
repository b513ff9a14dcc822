#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "psalt/design.hpp"
#include "support.hpp"

using namespace psalt;

namespace {

const std::vector<double> kRates{3.0, 8.0, 10.0};

DesignSolution reference_design() {
  DesignSolution d;
  d.allocation = {6, 35, 25};
  d.inspection_times = {{0.2, 0.5, 0.81}, {0.1, 0.2, 0.35}, {0.12, 0.25, 0.369}};
  return d;
}

DesignSolution random_design(std::mt19937_64& rng, std::size_t k = 3) {
  std::uniform_int_distribution<long> n(1, 75);
  std::uniform_real_distribution<double> t(0.01, 1.4);
  DesignSolution d;
  for (std::size_t i = 0; i < k; ++i) {
    d.allocation.push_back(n(rng));
    std::vector<double> tau{t(rng), t(rng), t(rng)};
    std::sort(tau.begin(), tau.end());
    d.inspection_times.push_back(tau);
  }
  return d;
}

double survival_ref(const ModelParams& th, double nu, double t) {
  const double a = std::pow(th.a * std::pow(nu, th.b), th.mu) * std::pow(t, th.mu * (th.b + 1));
  return std::pow(1 + a, -1 / (th.b + 1));
}

/// C written term by term.
double cost_ref(const DesignSolution& d, const ModelParams& th, const CostParams& c) {
  double total = c.c_a;
  double n = 0, fails = 0;
  for (std::size_t i = 0; i < d.allocation.size(); ++i) {
    const auto& tau = d.inspection_times[i];
    total += c.c_u * d.allocation[i] + c.c_0 * tau.back() + c.c_s * tau.size();
    n += d.allocation[i];
    fails += d.allocation[i] * (1 - survival_ref(th, kRates[i], tau.back()));
  }
  return total - (n - fails) * c.c_v;
}

/// psi as the displayed double sum.
double violation_ref(double cost, const std::vector<std::vector<double>>& tau, const CostParams& c) {
  double latest = 0;
  for (const auto& t : tau) latest = std::max(latest, t.back());
  double s = std::max(0.0, cost - c.budget);
  for (const auto& t : tau)
    for (std::size_t j = 0; j < t.size(); ++j) s += std::max(0.0, latest - c.tau_max);
  return s;
}

bool shape_ok(const DesignSolution& d, const CostParams& c, double n_max) {
  for (std::size_t i = 0; i < d.allocation.size(); ++i) {
    if (d.allocation[i] < 1 || d.allocation[i] > n_max) return false;
    const auto& t = d.inspection_times[i];
    if (!(t.front() > 0) || t.back() > c.tau_max) return false;
    if (!std::is_sorted(t.begin(), t.end())) return false;
  }
  return true;
}

}  // namespace

TEST(Cost, MatchesTermByTermFormula) {
  std::mt19937_64 rng(31);
  const CostParams c;
  for (int k = 0; k < 100; ++k) {
    const auto d = random_design(rng);
    const auto th = oracle::random_theta(rng);
    const double want = cost_ref(d, th, c);
    EXPECT_NEAR(expected_cost(d, kRates, th, c), want, 1e-10 * std::abs(want));
  }
}

TEST(Cost, NoFailuresLimit) {
  const CostParams c;
  DesignSolution d;
  d.allocation = {10, 20, 30};
  d.inspection_times = {{1e-12, 2e-12}, {1e-12}, {1e-12, 2e-12, 3e-12}};
  const double want = c.c_a + (c.c_u - c.c_v) * 60 + c.c_s * 6;
  EXPECT_NEAR(expected_cost(d, kRates, oracle::kTheta0, c), want, 1e-6);
}

TEST(Cost, LinearInAllocation) {
  const CostParams c;
  const auto d = reference_design();
  auto doubled = d;
  for (auto& n : doubled.allocation) n *= 2;
  const double fixed = c.c_a + c.c_0 * (0.81 + 0.35 + 0.369) + c.c_s * 9;
  const double one = expected_cost(d, kRates, oracle::kTheta0, c) - fixed;
  const double two = expected_cost(doubled, kRates, oracle::kTheta0, c) - fixed;
  EXPECT_NEAR(two, 2 * one, 1e-9);
}

TEST(Cost, Validation) {
  CostParams c;
  EXPECT_NO_THROW(c.validate());
  c.c_v = 130;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.budget = 800;
  EXPECT_THROW(c.validate(), DomainError);
  c = {};
  c.c_0 = -1;
  EXPECT_THROW(c.validate(), DomainError);
}

TEST(Violation, Examples) {
  const CostParams c;
  const std::vector<std::vector<double>> ok{{0.2, 0.9}, {0.5, 1.0}};
  EXPECT_EQ(constraint_violation(9000, ok, c), 0.0);
  EXPECT_EQ(constraint_violation(c.budget + 10, ok, c), 10.0);
  const std::vector<std::vector<double>> late{{0.2, 1.5}, {0.5, 0.9, 1.1}};
  EXPECT_NEAR(constraint_violation(9000, late, c), 5 * 0.5, 1e-15);
  EXPECT_NEAR(constraint_violation(9000, late, c, true), 0.5, 1e-15);
}

TEST(Violation, MatchesDisplayedDoubleSum) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> cost(8000, 12000);
  const CostParams c;
  for (int k = 0; k < 200; ++k) {
    const auto d = random_design(rng);
    const double cv = cost(rng);
    EXPECT_EQ(constraint_violation(cv, d.inspection_times, c), violation_ref(cv, d.inspection_times, c));
  }
}

TEST(Objective, InvariantUnderGroupReordering) {
  const auto d = reference_design();
  DesignSolution r;
  const std::vector<double> rates{10.0, 3.0, 8.0};
  r.allocation = {d.allocation[2], d.allocation[0], d.allocation[1]};
  r.inspection_times = {d.inspection_times[2], d.inspection_times[0], d.inspection_times[1]};
  const TuningParams t{1, 0, 0.3};
  for (auto w : {KWeighting::literal, KWeighting::proportional}) {
    const double a = design_objective(d, kRates, oracle::kTheta0, t, w);
    const double b = design_objective(r, rates, oracle::kTheta0, t, w);
    EXPECT_NEAR(a, b, 1e-12 * a);
  }
}

TEST(Objective, ScalesInverselyWithAllocation) {
  const auto d = reference_design();
  auto big = d;
  for (auto& n : big.allocation) n *= 4;
  for (const TuningParams& t : {TuningParams{1, 0, 0.3}, TuningParams{-6, 0.1, 0.16}}) {
    const double a = design_objective(d, kRates, oracle::kTheta0, t);
    const double b = design_objective(big, kRates, oracle::kTheta0, t);
    EXPECT_LT(b, a);
    EXPECT_NEAR(b, a / 4, 1e-12 * a);
  }
}

TEST(Objective, SingularIsInfinite) {
  DesignSolution d;
  d.allocation = {20};
  d.inspection_times = {{0.5}};
  EXPECT_TRUE(std::isinf(design_objective(d, {3.0}, oracle::kTheta0, {1, 0, 0.3})));
}

TEST(Objective, EvaluateFillsAllFields) {
  auto d = reference_design();
  evaluate_design(d, kRates, oracle::kTheta0, {1, 0, 0.3}, CostParams{});
  EXPECT_EQ(d.cost, expected_cost(d, kRates, oracle::kTheta0, CostParams{}));
  EXPECT_TRUE(d.feasible());
  EXPECT_EQ(d.objective, design_objective(d, kRates, oracle::kTheta0, {1, 0, 0.3}));
  EXPECT_GT(d.objective, 0.0);
}

TEST(Deb, Rule) {
  DesignSolution feas_good, feas_bad, inf_small, inf_big;
  feas_good.objective = 0.1;
  feas_bad.objective = 0.5;
  inf_small.violation = 1;
  inf_big.violation = 5;
  inf_small.objective = inf_big.objective = 0.01;
  EXPECT_TRUE(detail::deb_prefers(feas_good, feas_bad));
  EXPECT_FALSE(detail::deb_prefers(feas_bad, feas_good));
  EXPECT_TRUE(detail::deb_prefers(feas_bad, inf_small));
  EXPECT_FALSE(detail::deb_prefers(inf_small, feas_bad));
  EXPECT_TRUE(detail::deb_prefers(inf_small, inf_big));
  EXPECT_FALSE(detail::deb_prefers(inf_big, inf_small));
}

TEST(Repair, ValidParticleUnchanged) {
  const auto prob = DesignProblem::reference_setting();
  const CostParams c;
  const auto bounds = detail::coordinate_bounds(prob, c);
  SwarmOptions opt;
  Particle p;
  p.position = {10, 20, 30, 0.1, 0.2, 0.3, 0.1, 0.4, 0.5, 0.2, 0.6, 0.9};
  p.velocity.assign(12, 0.01);
  p.pbest_position = p.position;
  Rng rng(1);
  const auto x = repair_hard_constraints(p, p.position, p.position, prob, bounds, opt, rng);
  EXPECT_EQ(x, p.position);
}

TEST(Repair, AlwaysShapeValidAndDeterministic) {
  const auto prob = DesignProblem::reference_setting();
  const CostParams c;
  const auto bounds = detail::coordinate_bounds(prob, c);
  SwarmOptions opt;
  std::mt19937_64 gen(33);
  std::uniform_real_distribution<double> n(-5, 80), t(-0.2, 1.2), v(-0.5, 0.5);
  for (int k = 0; k < 200; ++k) {
    Particle p;
    p.position.resize(12);
    p.velocity.resize(12);
    p.pbest_position.resize(12);
    std::vector<double> gbest(12), x(12);
    for (int c2 = 0; c2 < 12; ++c2) {
      auto& d = c2 < 3 ? n : t;
      p.position[c2] = d(gen);
      p.pbest_position[c2] = d(gen);
      gbest[c2] = d(gen);
      x[c2] = d(gen);
      p.velocity[c2] = v(gen);
    }
    Particle copy = p;
    Rng r1(k), r2(k);
    const auto a = repair_hard_constraints(p, x, gbest, prob, bounds, opt, r1);
    const auto b = repair_hard_constraints(copy, x, gbest, prob, bounds, opt, r2);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(detail::shape_valid(a, prob));
  }
}

TEST(Swarm, DeterministicFeasibleAndMonotone) {
  const auto prob = DesignProblem::reference_setting();
  const CostParams c;
  SwarmOptions opt;
  opt.seed = 3;
  const TuningParams t{1, 0, 0.3};
  const auto a = cpso(oracle::kTheta0, t, c, prob, opt);
  const auto b = cpso(oracle::kTheta0, t, c, prob, opt);
  EXPECT_EQ(a.best.allocation, b.best.allocation);
  EXPECT_EQ(a.best.inspection_times, b.best.inspection_times);
  EXPECT_EQ(a.best.objective, b.best.objective);
  EXPECT_EQ(a.iterations, b.iterations);

  ASSERT_TRUE(a.feasible);
  EXPECT_EQ(a.best.violation, 0.0);
  EXPECT_LE(a.best.cost, c.budget);
  EXPECT_TRUE(shape_ok(a.best, c, 75));
  EXPECT_TRUE(std::isfinite(a.best.objective));
  EXPECT_LE(a.iterations, opt.max_iter);

  bool seen_feasible = false;
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& row : a.trace) {
    EXPECT_EQ(row.dominance_breaks, 0u);
    if (row.gbest_psi == 0.0) {
      if (seen_feasible) {
        EXPECT_LE(row.gbest_phi, prev);
      }
      seen_feasible = true;
      prev = row.gbest_phi;
    } else {
      EXPECT_FALSE(seen_feasible);
    }
  }
  // The returned objective is the recomputed trace at the returned design.
  EXPECT_NEAR(a.best.objective, design_objective(a.best, prob.stress_rates, oracle::kTheta0, t),
              1e-15 * a.best.objective);
}

TEST(Swarm, ThreadCountInvariant) {
  const auto prob = DesignProblem::reference_setting();
  SwarmOptions opt;
  opt.max_iter = 80;
  opt.threads = 1;
  const auto a = cpso(oracle::kTheta0, {-6, 0.1, 0.16}, CostParams{}, prob, opt);
  opt.threads = 3;
  const auto b = cpso(oracle::kTheta0, {-6, 0.1, 0.16}, CostParams{}, prob, opt);
  EXPECT_EQ(a.best.allocation, b.best.allocation);
  EXPECT_EQ(a.best.objective, b.best.objective);
}

TEST(Swarm, InfeasibleProblemReturnsLeastViolation) {
  const auto prob = DesignProblem::reference_setting();
  CostParams c;
  c.budget = 900;  // below the cost of any three-group design
  SwarmOptions opt;
  opt.max_iter = 30;
  const auto r = cpso(oracle::kTheta0, {1, 0, 0.3}, c, prob, opt);
  EXPECT_FALSE(r.feasible);
  EXPECT_GT(r.best.violation, 0.0);
  for (const auto& row : r.trace) EXPECT_GE(row.gbest_psi, r.best.violation);
}

TEST(Swarm, OptionValidation) {
  SwarmOptions opt;
  opt.size = 0;
  EXPECT_THROW(cpso(oracle::kTheta0, {1, 0, 0.3}, {}, DesignProblem::reference_setting(), opt), DomainError);
  DesignProblem bad = DesignProblem::reference_setting();
  bad.n_inspections[1] = 0;
  EXPECT_THROW(cpso(oracle::kTheta0, {1, 0, 0.3}, {}, bad, {}), DomainError);
}
