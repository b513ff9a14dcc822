#ifndef PSALT_DESIGN_HPP
#define PSALT_DESIGN_HPP

// A-optimal test plans: minimise tr cov(theta_hat) over the allocation N_i and
// inspection times tau_ij, subject to a budget and a maximum termination time,
// with a constrained particle swarm.
//
//   C   = c_a + c_u sum N_i + c_0 sum tau_iJi + c_s sum J_i - (N - D) c_v
//   D   = sum N_i (1 - p_is)                      (expected failures)
//   psi = max{0, C - C_r} + sum_i sum_j max{0, max_i tau_iJi - tau_max}
//
// Particles move in R^{k + sum J_i}; N is floored before every evaluation.
// A particle leaving the shape-valid region (N_i >= 1, tau ascending, tau > 0)
// redraws r1, r2 and retries its velocity update up to 50 times, after which
// it is clamped and sorted. pbest follows Deb's rule: feasible beats
// infeasible, two feasibles compare by tr V, two infeasibles by psi.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "psalt/asymptotics.hpp"
#include "psalt/divergence.hpp"
#include "psalt/errors.hpp"
#include "psalt/model.hpp"
#include "psalt/parallel.hpp"
#include "psalt/random.hpp"

namespace psalt {

struct CostParams {
  double c_a = 850.0;  // installation
  double c_u = 120.0;  // per device
  double c_0 = 55.0;   // per unit time
  double c_s = 15.0;   // per inspection
  double c_v = 50.0;   // salvage per survivor
  double budget = 10000.0;
  double tau_max = 1.0;

  void validate() const {
    for (double c : {c_a, c_u, c_0, c_s, c_v, budget, tau_max})
      if (!std::isfinite(c) || c < 0.0) throw DomainError("costs must be finite and nonnegative");
    if (!(c_v < c_u)) throw DomainError("salvage value must be below the unit cost");
    if (!(budget > c_a)) throw DomainError("budget must exceed the installation cost");
    if (!(tau_max > 0.0)) throw DomainError("tau_max must be positive");
  }
};

/// k groups at fixed stress rates, each with a fixed number of inspections.
struct DesignProblem {
  std::vector<double> stress_rates;
  std::vector<std::size_t> n_inspections;
  std::vector<double> n_max;  // per-group allocation upper bound

  std::size_t n_groups() const { return stress_rates.size(); }
  std::size_t dimension() const {
    std::size_t d = n_groups();
    for (auto j : n_inspections) d += j;
    return d;
  }

  void validate() const {
    if (stress_rates.empty()) throw DomainError("design needs at least one group");
    if (n_inspections.size() != stress_rates.size() || n_max.size() != stress_rates.size())
      throw DomainError("stress rates, inspection counts and allocation bounds differ in length");
    for (std::size_t i = 0; i < stress_rates.size(); ++i) {
      if (!(stress_rates[i] > 0.0)) throw DomainError("stress rate must be positive");
      if (n_inspections[i] == 0) throw DomainError("each group needs an inspection");
      if (!(n_max[i] >= 1.0)) throw DomainError("allocation bound must be at least 1");
    }
  }

  /// Reference setting: rates (3, 8, 10), three inspections each, N_i <= 75.
  static DesignProblem reference_setting() { return {{3.0, 8.0, 10.0}, {3, 3, 3}, {75.0, 75.0, 75.0}}; }
};

struct DesignSolution {
  std::vector<long> allocation;
  std::vector<std::vector<double>> inspection_times;
  double cost = 0.0;
  double violation = 0.0;  // psi
  double objective = std::numeric_limits<double>::infinity();  // tr V

  bool feasible() const { return violation == 0.0; }

  TestPlan plan(const std::vector<double>& stress_rates) const {
    TestPlan p;
    for (std::size_t i = 0; i < allocation.size(); ++i)
      p.groups.push_back({static_cast<int>(allocation[i]), stress_rates.at(i), inspection_times[i]});
    return p;
  }
};

/// Expected cost of a design; D uses the survival cell p_is(theta).
inline double expected_cost(const DesignSolution& design, const std::vector<double>& stress_rates,
                            const ModelParams& theta, const CostParams& cost) {
  double n_total = 0.0, failures = 0.0, last_times = 0.0, inspections = 0.0;
  for (std::size_t i = 0; i < design.allocation.size(); ++i) {
    const auto& tau = design.inspection_times[i];
    const double n = static_cast<double>(design.allocation[i]);
    n_total += n;
    last_times += tau.back();
    inspections += static_cast<double>(tau.size());
    failures += n * (1.0 - survival(theta, stress_rates.at(i), tau.back()));
  }
  return cost.c_a + cost.c_u * n_total + cost.c_0 * last_times + cost.c_s * inspections -
         (n_total - failures) * cost.c_v;
}

/// psi. The time term repeats once per (i, j) as the measure is written;
/// `normalized` counts it once.
inline double constraint_violation(double design_cost,
                                   const std::vector<std::vector<double>>& inspection_times,
                                   const CostParams& cost, bool normalized = false) {
  double latest = 0.0;
  for (const auto& tau : inspection_times) latest = std::max(latest, tau.back());
  const double overrun = std::max(0.0, latest - cost.tau_max);
  double psi = std::max(0.0, design_cost - cost.budget);
  if (normalized) return psi + overrun;
  for (const auto& tau : inspection_times)
    for (std::size_t j = 0; j < tau.size(); ++j) psi += overrun;
  return psi;
}

/// tr cov(theta_hat) for the design, N = sum N_i; +inf when J is singular.
inline double design_objective(const DesignSolution& design, const std::vector<double>& stress_rates,
                               const ModelParams& theta, const TuningParams& tuning,
                               KWeighting weighting = KWeighting::literal) {
  try {
    const TestPlan plan = design.plan(stress_rates);
    plan.validate();
    return asym_covariance(theta, plan, tuning, weighting).cov.trace();
  } catch (const SingularMatrixError&) {
    return std::numeric_limits<double>::infinity();
  } catch (const SingularCellError&) {
    return std::numeric_limits<double>::infinity();
  }
}

/// Fills cost, violation and objective.
inline void evaluate_design(DesignSolution& design, const std::vector<double>& stress_rates,
                            const ModelParams& theta, const TuningParams& tuning,
                            const CostParams& cost, KWeighting weighting = KWeighting::literal,
                            bool normalized_violation = false) {
  design.cost = expected_cost(design, stress_rates, theta, cost);
  design.violation =
      constraint_violation(design.cost, design.inspection_times, cost, normalized_violation);
  design.objective = design_objective(design, stress_rates, theta, tuning, weighting);
}

struct SwarmOptions {
  std::size_t size = 20;
  double w = 0.3;
  double c1 = 0.5;
  double c2 = 0.5;
  int max_iter = 500;
  double tol = 1e-8;
  /// Consecutive iterations with |delta gbest tr V| < tol before stopping.
  /// 1 is the bare two-iteration rule.
  int patience = 50;
  std::uint64_t seed = 1;
  double velocity_clamp = 0.2;  // fraction of each coordinate's range
  KWeighting weighting = KWeighting::literal;
  bool normalized_violation = false;
  unsigned threads = 1;

  void validate() const {
    if (size == 0) throw DomainError("swarm.size must be positive");
    if (max_iter < 0) throw DomainError("swarm.max_iter must be nonnegative");
    if (!(tol >= 0.0)) throw DomainError("swarm.tol must be nonnegative");
    if (patience < 1) throw DomainError("swarm.patience must be at least 1");
    if (!(w >= 0.0) || !(c1 >= 0.0) || !(c2 >= 0.0))
      throw DomainError("swarm coefficients must be nonnegative");
  }
};

/// Position layout: N_1..N_k, then tau_11..tau_1J1, tau_21, ...
struct Particle {
  std::vector<double> position;
  std::vector<double> velocity;
  DesignSolution current;
  std::vector<double> pbest_position;
  DesignSolution pbest;
};

struct SwarmTraceRow {
  int iter = 0;
  double gbest_phi = std::numeric_limits<double>::infinity();
  double gbest_psi = std::numeric_limits<double>::infinity();
  std::size_t feasible_pbests = 0;
  /// Pbests that went from feasible to infeasible this iteration; Deb's rule keeps this 0.
  std::size_t dominance_breaks = 0;
};

struct SwarmResult {
  DesignSolution best;
  bool feasible = false;
  int iterations = 0;
  std::vector<SwarmTraceRow> trace;
};

namespace detail {

struct CoordinateBounds {
  std::vector<double> lo, hi;
};

inline CoordinateBounds coordinate_bounds(const DesignProblem& prob, const CostParams& cost) {
  CoordinateBounds b;
  for (std::size_t i = 0; i < prob.n_groups(); ++i) {
    b.lo.push_back(1.0);
    b.hi.push_back(prob.n_max[i]);
  }
  for (std::size_t i = 0; i < prob.n_groups(); ++i)
    for (std::size_t j = 0; j < prob.n_inspections[i]; ++j) {
      b.lo.push_back(1e-6 * cost.tau_max);
      b.hi.push_back(cost.tau_max);
    }
  return b;
}

inline bool shape_valid(const std::vector<double>& x, const DesignProblem& prob) {
  std::size_t k = prob.n_groups(), pos = k;
  for (std::size_t i = 0; i < k; ++i)
    if (!(x[i] >= 1.0)) return false;
  for (std::size_t i = 0; i < k; ++i) {
    double prev = 0.0;
    for (std::size_t j = 0; j < prob.n_inspections[i]; ++j, ++pos) {
      if (!(x[pos] > 0.0) || x[pos] < prev) return false;
      prev = x[pos];
    }
  }
  return true;
}

inline DesignSolution decode(const std::vector<double>& x, const DesignProblem& prob) {
  DesignSolution d;
  const std::size_t k = prob.n_groups();
  std::size_t pos = k;
  for (std::size_t i = 0; i < k; ++i) {
    d.allocation.push_back(static_cast<long>(std::floor(x[i])));
    d.inspection_times.emplace_back(x.begin() + static_cast<long>(pos),
                                    x.begin() + static_cast<long>(pos + prob.n_inspections[i]));
    pos += prob.n_inspections[i];
  }
  return d;
}

/// Deb's rule: true when `candidate` replaces `incumbent`.
inline bool deb_prefers(const DesignSolution& candidate, const DesignSolution& incumbent) {
  const bool cf = candidate.feasible(), inf = incumbent.feasible();
  if (cf && inf) return candidate.objective <= incumbent.objective;
  if (cf != inf) return cf;
  return candidate.violation <= incumbent.violation;
}

}  // namespace detail

/// Velocity update for one particle; returns the new position. Coordinates
/// are clamped to their bounds and velocities to the configured fraction of
/// each range.
inline std::vector<double> velocity_update(Particle& particle, const std::vector<double>& gbest,
                                           const detail::CoordinateBounds& bounds,
                                           const SwarmOptions& opt, double r1, double r2,
                                           const std::vector<double>& base_velocity) {
  std::vector<double> x(particle.position.size());
  for (std::size_t c = 0; c < x.size(); ++c) {
    const double vmax = opt.velocity_clamp * (bounds.hi[c] - bounds.lo[c]);
    double v = opt.w * base_velocity[c] +
               opt.c1 * r1 * (particle.pbest_position[c] - particle.position[c]) +
               opt.c2 * r2 * (gbest[c] - particle.position[c]);
    v = std::clamp(v, -vmax, vmax);
    particle.velocity[c] = v;
    x[c] = std::clamp(particle.position[c] + v, bounds.lo[c], bounds.hi[c]);
  }
  return x;
}

/// Re-applies the velocity rule with fresh r1, r2 until the position is
/// shape-valid, at most 50 times; then clamps N_i to >= 1 and sorts each
/// group's times. A valid particle is returned unchanged.
inline std::vector<double> repair_hard_constraints(Particle& particle, std::vector<double> x,
                                                   const std::vector<double>& gbest,
                                                   const DesignProblem& prob,
                                                   const detail::CoordinateBounds& bounds,
                                                   const SwarmOptions& opt, Rng& rng) {
  const std::vector<double> base = particle.velocity;
  for (int attempt = 0; attempt < 50 && !detail::shape_valid(x, prob); ++attempt) {
    const double r1 = rng.uniform(), r2 = rng.uniform();
    x = velocity_update(particle, gbest, bounds, opt, r1, r2, base);
  }
  if (!detail::shape_valid(x, prob)) {
    const std::size_t k = prob.n_groups();
    for (std::size_t i = 0; i < k; ++i) x[i] = std::max(x[i], 1.0);
    std::size_t pos = k;
    for (std::size_t i = 0; i < k; ++i) {
      auto first = x.begin() + static_cast<long>(pos);
      std::sort(first, first + static_cast<long>(prob.n_inspections[i]));
      pos += prob.n_inspections[i];
    }
  }
  return x;
}

inline SwarmResult cpso(const ModelParams& theta, const TuningParams& tuning,
                        const CostParams& cost, const DesignProblem& prob,
                        const SwarmOptions& opt) {
  theta.validate();
  tuning.validate();
  cost.validate();
  prob.validate();
  opt.validate();
  const auto bounds = detail::coordinate_bounds(prob, cost);
  const std::size_t dim = prob.dimension(), k = prob.n_groups();
  Rng rng(substream_seed(opt.seed, 0));

  auto evaluate = [&](std::vector<Particle>& swarm) {
    parallel_for(swarm.size(), opt.threads, [&](std::size_t l) {
      swarm[l].current = detail::decode(swarm[l].position, prob);
      evaluate_design(swarm[l].current, prob.stress_rates, theta, tuning, cost, opt.weighting,
                      opt.normalized_violation);
    });
  };

  std::vector<Particle> swarm(opt.size);
  for (auto& p : swarm) {
    p.position.resize(dim);
    p.velocity.assign(dim, 0.0);
    for (std::size_t i = 0; i < k; ++i) p.position[i] = 1.0 + rng.uniform() * (prob.n_max[i] - 1.0);
    std::size_t pos = k;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < prob.n_inspections[i]; ++j)
        p.position[pos + j] = cost.tau_max * rng.uniform_open();
      auto first = p.position.begin() + static_cast<long>(pos);
      std::sort(first, first + static_cast<long>(prob.n_inspections[i]));
      pos += prob.n_inspections[i];
    }
  }
  evaluate(swarm);
  for (auto& p : swarm) {
    p.pbest_position = p.position;
    p.pbest = p.current;
  }

  auto pick_gbest = [&]() -> std::size_t {
    std::size_t best = 0;
    bool best_feasible = swarm[0].pbest.feasible();
    for (std::size_t l = 1; l < swarm.size(); ++l) {
      const auto& c = swarm[l].pbest;
      const auto& b = swarm[best].pbest;
      if (c.feasible() != best_feasible) {
        if (c.feasible()) {
          best = l;
          best_feasible = true;
        }
        continue;
      }
      if (best_feasible ? c.objective < b.objective : c.violation < b.violation) best = l;
    }
    return best;
  };

  auto record = [&](int iter, std::size_t g, std::size_t breaks) {
    SwarmTraceRow row;
    row.iter = iter;
    row.gbest_phi = swarm[g].pbest.objective;
    row.gbest_psi = swarm[g].pbest.violation;
    row.dominance_breaks = breaks;
    for (const auto& p : swarm) row.feasible_pbests += p.pbest.feasible();
    return row;
  };

  SwarmResult out;
  std::size_t g = pick_gbest();
  out.trace.push_back(record(0, g, 0));
  int stall = 0;
  for (int iter = 1; iter <= opt.max_iter; ++iter) {
    const std::vector<double> gbest = swarm[g].pbest_position;
    for (auto& p : swarm) {
      const double r1 = rng.uniform(), r2 = rng.uniform();
      const std::vector<double> base = p.velocity;
      auto x = velocity_update(p, gbest, bounds, opt, r1, r2, base);
      p.position = repair_hard_constraints(p, std::move(x), gbest, prob, bounds, opt, rng);
    }
    evaluate(swarm);
    std::size_t breaks = 0;
    for (auto& p : swarm) {
      const bool was_feasible = p.pbest.feasible();
      if (detail::deb_prefers(p.current, p.pbest)) {
        p.pbest = p.current;
        p.pbest_position = p.position;
      }
      breaks += was_feasible && !p.pbest.feasible();
    }
    const double previous = swarm[g].pbest.objective;
    g = pick_gbest();
    out.trace.push_back(record(iter, g, breaks));
    out.iterations = iter;
    const double current = swarm[g].pbest.objective;
    const bool flat = std::isfinite(current) && std::isfinite(previous) &&
                      std::abs(current - previous) < opt.tol;
    stall = flat ? stall + 1 : 0;
    if (stall >= opt.patience) break;
  }
  out.best = swarm[g].pbest;
  out.feasible = out.best.feasible();
  return out;
}

}  // namespace psalt

#endif
