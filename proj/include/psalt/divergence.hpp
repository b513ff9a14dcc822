#ifndef PSALT_DIVERGENCE_HPP
#define PSALT_DIVERGENCE_HPP

// Likelihood and exponential-polynomial divergence (EPD) between the model
// cell probabilities p_ij(theta) and the empirical proportions q_ij.
//
// EPD is the Bregman divergence generated by
//
//   B(x) = beta/alpha^2 (e^{alpha x} - 1 - alpha x) + (1-beta)/gamma (x^{gamma+1} - x)
//
// beta = 0 is the density power divergence, beta = 1 the Bregman exponential
// divergence, and beta = 0 with gamma -> 0 the Kullback-Leibler divergence.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "psalt/errors.hpp"
#include "psalt/model.hpp"

namespace psalt {

struct TuningParams {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.5;

  bool uses_exponential() const noexcept { return beta > 0.0; }
  bool uses_polynomial() const noexcept { return beta < 1.0; }
  /// gamma = 0 with a polynomial part present means the KL limit.
  bool kl_limit() const noexcept { return uses_polynomial() && gamma == 0.0; }

  void validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma))
      throw DomainError("tuning parameters must be finite");
    if (beta < 0.0 || beta > 1.0) throw DomainError("tuning.beta must lie in [0, 1]");
    if (gamma < 0.0) throw DomainError("tuning.gamma must be nonnegative");
    if (beta > 0.0 && alpha == 0.0)
      throw DomainError("tuning.alpha must be nonzero when beta > 0");
  }

  friend bool operator==(const TuningParams&, const TuningParams&) = default;
};

/// Per group, the J_i interval failure counts followed by the survivor count.
struct ObservedCounts {
  std::vector<std::vector<long>> cells;

  std::size_t n_groups() const noexcept { return cells.size(); }

  long group_total(std::size_t i) const {
    long n = 0;
    for (long c : cells.at(i)) n += c;
    return n;
  }

  long failures(std::size_t i) const {
    const auto& g = cells.at(i);
    long n = 0;
    for (std::size_t j = 0; j + 1 < g.size(); ++j) n += g[j];
    return n;
  }

  /// q_ij = n_ij / N_i, survivor cell last.
  std::vector<std::vector<double>> proportions() const {
    std::vector<std::vector<double>> q(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const double total = static_cast<double>(group_total(i));
      for (long c : cells[i]) q[i].push_back(total > 0 ? c / total : 0.0);
    }
    return q;
  }

  /// Shapes must agree with the plan and each group must add up to N_i.
  void validate_against(const TestPlan& plan) const {
    if (cells.size() != plan.n_groups())
      throw DomainError("counts have " + std::to_string(cells.size()) + " groups, plan has " +
                        std::to_string(plan.n_groups()));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& g = plan.groups[i];
      if (cells[i].size() != g.n_cells())
        throw DomainError("group " + std::to_string(i) + ": expected " +
                          std::to_string(g.n_cells()) + " cells");
      for (long c : cells[i])
        if (c < 0) throw DomainError("group " + std::to_string(i) + ": negative count");
      if (group_total(i) != g.n_units)
        throw DomainError("group " + std::to_string(i) + ": counts add up to " +
                          std::to_string(group_total(i)) + " but the plan has " +
                          std::to_string(g.n_units) + " devices");
    }
  }
};

/// The convex generator B(x). With gamma = 0 and beta < 1 the polynomial part
/// takes its limit x ln x when `allow_gamma_limit` is set.
inline double generator_b(double x, const TuningParams& tuning, bool allow_gamma_limit = true) {
  tuning.validate();
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("generator argument must lie in [0, 1]");
  double value = 0.0;
  if (tuning.uses_exponential()) {
    const double ax = tuning.alpha * x;
    value += tuning.beta / (tuning.alpha * tuning.alpha) * (std::expm1(ax) - ax);
  }
  if (tuning.uses_polynomial()) {
    if (tuning.gamma == 0.0) {
      if (!allow_gamma_limit) throw DomainError("gamma = 0 requires the KL limit form");
      value += (1.0 - tuning.beta) * (x > 0.0 ? x * std::log(x) : 0.0);
    } else {
      value += (1.0 - tuning.beta) / tuning.gamma * (std::pow(x, tuning.gamma + 1.0) - x);
    }
  }
  return value;
}

namespace detail {

inline double floored(double p, double floor) { return p < floor ? floor : p; }

/// w(p) = (1-beta)(gamma+1) p^{gamma-1} + beta e^{alpha p}; the weight that
/// turns (q - p) dp into the estimating-equation summand.
inline double epd_weight(double p, const TuningParams& t, double floor) {
  double w = 0.0;
  if (t.uses_polynomial()) {
    const double pf = floored(p, floor);
    w += (1.0 - t.beta) * (t.gamma + 1.0) * std::pow(pf, t.gamma - 1.0);
  }
  if (t.uses_exponential()) w += t.beta * std::exp(t.alpha * p);
  return w;
}

/// One cell's contribution to the EPD objective. With `centered` the
/// parameter-free constant (gamma+1)/gamma (1-beta) q is subtracted so that
/// small gamma keeps full precision; gamma = 0 always uses the KL limit.
inline double epd_cell_term(double p, double q, const TuningParams& t, double floor,
                            bool centered) {
  double v = 0.0;
  if (t.uses_exponential()) {
    const double e = std::exp(t.alpha * p);
    v += t.beta / t.alpha * e * (p - 1.0 / t.alpha) - t.beta / t.alpha * e * q;
  }
  if (t.uses_polynomial()) {
    const double pf = floored(p, floor);
    const double g = t.gamma;
    if (g == 0.0) {
      v += (1.0 - t.beta) * (p - q * std::log(pf));
    } else if (centered) {
      v += (1.0 - t.beta) * (std::pow(p, g + 1.0) -
                             (g + 1.0) * q * std::expm1(g * std::log(pf)) / g);
    } else {
      v += (1.0 - t.beta) * (std::pow(p, g + 1.0) - (g + 1.0) / g * std::pow(pf, g) * q);
    }
  }
  return v;
}

inline std::vector<std::vector<double>> checked_proportions(const ObservedCounts& counts,
                                                            const TestPlan& plan) {
  counts.validate_against(plan);
  return counts.proportions();
}

}  // namespace detail

/// ln L(theta) = sum_i [ sum_j n_ij ln p_ij + (N_i - n_i) ln p_is ], without
/// the multinomial coefficient. Empty cells contribute nothing.
inline double log_likelihood(const ModelParams& theta, const ObservedCounts& counts,
                             const TestPlan& plan, double floor = kProbabilityFloor) {
  counts.validate_against(plan);
  const auto cells = cell_probabilities(theta, plan);
  double ll = 0.0;
  for (std::size_t i = 0; i < cells.groups.size(); ++i)
    for (std::size_t j = 0; j < cells.groups[i].size(); ++j)
      if (counts.cells[i][j] > 0)
        ll += counts.cells[i][j] * std::log(detail::floored(cells.groups[i][j], floor));
  return ll;
}

/// d ln L / d theta.
inline Vec3 log_likelihood_gradient(const ModelParams& theta, const ObservedCounts& counts,
                                    const TestPlan& plan, double floor = kProbabilityFloor) {
  counts.validate_against(plan);
  const auto jac = cell_jacobian(theta, plan);
  Vec3 g = Vec3::Zero();
  for (std::size_t i = 0; i < jac.p.size(); ++i)
    for (std::size_t j = 0; j < jac.p[i].size(); ++j)
      if (counts.cells[i][j] > 0)
        g += counts.cells[i][j] * jac.dp[i][j] / detail::floored(jac.p[i][j], floor);
  return g;
}

/// EPD objective with the q-only terms dropped. Groups enter unweighted.
inline double epd_objective(const ModelParams& theta, const ObservedCounts& counts,
                            const TestPlan& plan, const TuningParams& tuning,
                            double floor = kProbabilityFloor) {
  tuning.validate();
  const auto q = detail::checked_proportions(counts, plan);
  const auto cells = cell_probabilities(theta, plan);
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q[i].size(); ++j)
      d += detail::epd_cell_term(cells.groups[i][j], q[i][j], tuning, floor, false);
  return d;
}

/// Same minimizer as epd_objective, shifted by a theta-free constant so that
/// gamma near zero does not cancel catastrophically. This is what the solver uses.
inline double epd_objective_centered(const ModelParams& theta,
                                     const std::vector<std::vector<double>>& q,
                                     const TestPlan& plan, const TuningParams& tuning,
                                     double floor = kProbabilityFloor) {
  const auto cells = cell_probabilities(theta, plan);
  double d = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q[i].size(); ++j)
      d += detail::epd_cell_term(cells.groups[i][j], q[i][j], tuning, floor, true);
  return d;
}

/// Estimating function sum_ij w(p_ij)(q_ij - p_ij) dp_ij/dtheta, equal to
/// p_ij w (q - p) u_ij and to minus the gradient of the objective.
inline Vec3 epd_residual_from_proportions(const ModelParams& theta,
                                          const std::vector<std::vector<double>>& q,
                                          const TestPlan& plan, const TuningParams& tuning,
                                          double floor = kProbabilityFloor) {
  const auto jac = cell_jacobian(theta, plan);
  Vec3 r = Vec3::Zero();
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q[i].size(); ++j) {
      const double p = jac.p[i][j];
      r += detail::epd_weight(p, tuning, floor) * (q[i][j] - p) * jac.dp[i][j];
    }
  return r;
}

inline Vec3 epd_estimating_residual(const ModelParams& theta, const ObservedCounts& counts,
                                    const TestPlan& plan, const TuningParams& tuning,
                                    double floor = kProbabilityFloor) {
  tuning.validate();
  const auto q = detail::checked_proportions(counts, plan);
  return epd_residual_from_proportions(theta, q, plan, tuning, floor);
}

}  // namespace psalt

#endif
