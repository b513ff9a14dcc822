#ifndef PSALT_MODEL_HPP
#define PSALT_MODEL_HPP

// Log-logistic lifetimes under a ramp-stress accelerated test with the
// tampered-failure-rate link:
//
//   S_i(t) = [1 + (a nu_i^b)^mu t^{mu(b+1)}]^{-1/(b+1)}
//
// Everything below evaluates A = (a nu^b)^mu t^{mu(b+1)} through its
// logarithm, so mu(b+1) well above 5 does not overflow.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "psalt/errors.hpp"

namespace psalt {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Values below this are raised to it before any log or negative power.
inline constexpr double kProbabilityFloor = 1e-12;

/// theta = (a, b, mu): inverse-power-law coefficient, exponent and shape.
struct ModelParams {
  double a = 1.0;
  double b = 1.0;
  double mu = 1.0;

  bool valid() const noexcept {
    return std::isfinite(a) && std::isfinite(b) && std::isfinite(mu) && a > 0 && b > 0 &&
           mu > 0;
  }

  void validate() const {
    if (!valid()) throw DomainError("model parameters (a, b, mu) must be finite and positive");
  }

  Vec3 vec() const { return {a, b, mu}; }
  static ModelParams from(const Vec3& v) { return {v[0], v[1], v[2]}; }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct GroupPlan {
  int n_units = 0;
  double stress_rate = 1.0;
  std::vector<double> inspection_times;  // tau_i1 <= ... <= tau_iJ; tau_i0 = 0 is implied

  std::size_t n_inspections() const noexcept { return inspection_times.size(); }
  std::size_t n_cells() const noexcept { return inspection_times.size() + 1; }
};

struct TestPlan {
  std::vector<GroupPlan> groups;

  std::size_t n_groups() const noexcept { return groups.size(); }

  long total_units() const noexcept {
    long n = 0;
    for (const auto& g : groups) n += g.n_units;
    return n;
  }

  std::size_t total_cells() const noexcept {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.n_cells();
    return n;
  }

  void validate() const {
    if (groups.empty()) throw DomainError("test plan needs at least one group");
    for (std::size_t i = 0; i < groups.size(); ++i) {
      const auto& g = groups[i];
      const std::string where = "group " + std::to_string(i) + ": ";
      if (g.n_units <= 0) throw DomainError(where + "device count must be positive");
      if (!(g.stress_rate > 0) || !std::isfinite(g.stress_rate))
        throw DomainError(where + "stress rate must be positive");
      if (g.inspection_times.empty()) throw DomainError(where + "no inspection times");
      double prev = 0.0;
      for (double t : g.inspection_times) {
        if (!(t > 0) || !std::isfinite(t))
          throw DomainError(where + "inspection times must be positive");
        if (t < prev) throw DomainError(where + "inspection times must be nondecreasing");
        prev = t;
      }
    }
  }
};

/// Per group: failure cells p_i1..p_iJ followed by the survival cell.
struct CellProbabilities {
  std::vector<std::vector<double>> groups;
};

/// Per group, per cell: u_ij = d ln p_ij / d theta.
struct ScoreVectors {
  std::vector<std::vector<Vec3>> groups;
};

/// Cell probabilities together with their gradients dp_ij/dtheta. Unlike the
/// score vectors these stay finite when a cell is empty.
struct CellJacobian {
  std::vector<std::vector<double>> p;
  std::vector<std::vector<Vec3>> dp;
};

namespace detail {

inline void check_rate_time(double nu, double t) {
  if (!(nu > 0) || !std::isfinite(nu)) throw DomainError("stress rate must be positive");
  if (!(t >= 0) || !std::isfinite(t)) throw DomainError("time must be nonnegative");
}

/// ln A(t) = mu (ln a + b ln nu) + mu (b+1) ln t, for t > 0.
inline double log_accel(const ModelParams& th, double nu, double t) {
  return th.mu * (std::log(th.a) + th.b * std::log(nu)) + th.mu * (th.b + 1.0) * std::log(t);
}

/// ln(1 + e^x) without overflow.
inline double log1p_exp(double x) {
  return x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// e^x / (1 + e^x)
inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct SurvivalPoint {
  double s = 1.0;
  Vec3 ds = Vec3::Zero();
};

/// S(t) and dS/dtheta. At t = 0 the gradient is exactly zero.
inline SurvivalPoint survival_with_gradient(const ModelParams& th, double nu, double t) {
  SurvivalPoint out;
  if (t == 0.0) return out;
  const double la = log_accel(th, nu, t);
  const double l1p = log1p_exp(la);
  const double bp1 = th.b + 1.0;
  const double log_s = -l1p / bp1;
  const double frac = logistic(la);  // A / (1 + A)
  out.s = std::exp(log_s);
  Vec3 dlog;
  dlog[0] = -frac * th.mu / (th.a * bp1);
  dlog[1] = l1p / (bp1 * bp1) - frac * th.mu * (std::log(nu) + std::log(t)) / bp1;
  dlog[2] = -frac * la / (th.mu * bp1);
  out.ds = out.s * dlog;
  return out;
}

}  // namespace detail

/// Survival probability S(t) of a unit ramped at stress rate nu.
inline double survival(const ModelParams& theta, double nu, double t) {
  theta.validate();
  detail::check_rate_time(nu, t);
  if (t == 0.0) return 1.0;
  return std::exp(-detail::log1p_exp(detail::log_accel(theta, nu, t)) / (theta.b + 1.0));
}

/// H(t) = ln[1 + A(t)] / (b+1), so that exp(-H) = S.
inline double cumulative_hazard(const ModelParams& theta, double nu, double t) {
  theta.validate();
  detail::check_rate_time(nu, t);
  if (t == 0.0) return 0.0;
  return detail::log1p_exp(detail::log_accel(theta, nu, t)) / (theta.b + 1.0);
}

/// h(t) = dH/dt = mu A(t) / (t [1 + A(t)]).
inline double hazard(const ModelParams& theta, double nu, double t) {
  theta.validate();
  detail::check_rate_time(nu, t);
  if (t == 0.0) throw DomainError("hazard requires t > 0");
  return theta.mu * detail::logistic(detail::log_accel(theta, nu, t)) / t;
}

/// Per-group interval probabilities: p_ij = S(tau_i(j-1)) - S(tau_ij), p_is = S(tau_iJ).
inline CellProbabilities cell_probabilities(const ModelParams& theta, const TestPlan& plan) {
  theta.validate();
  plan.validate();
  CellProbabilities out;
  out.groups.reserve(plan.n_groups());
  for (const auto& g : plan.groups) {
    std::vector<double> cells;
    cells.reserve(g.n_cells());
    double prev = 1.0;
    for (double tau : g.inspection_times) {
      const double s = survival(theta, g.stress_rate, tau);
      // Coincident inspection times give an exact zero here.
      cells.push_back(prev - s);
      prev = s;
    }
    cells.push_back(prev);
    out.groups.push_back(std::move(cells));
  }
  return out;
}

/// Cell probabilities and dp/dtheta in one pass.
inline CellJacobian cell_jacobian(const ModelParams& theta, const TestPlan& plan) {
  theta.validate();
  plan.validate();
  CellJacobian out;
  out.p.resize(plan.n_groups());
  out.dp.resize(plan.n_groups());
  for (std::size_t i = 0; i < plan.n_groups(); ++i) {
    const auto& g = plan.groups[i];
    auto& p = out.p[i];
    auto& dp = out.dp[i];
    p.reserve(g.n_cells());
    dp.reserve(g.n_cells());
    detail::SurvivalPoint prev;
    for (double tau : g.inspection_times) {
      const auto cur = detail::survival_with_gradient(theta, g.stress_rate, tau);
      p.push_back(prev.s - cur.s);
      dp.push_back(prev.ds - cur.ds);
      prev = cur;
    }
    p.push_back(prev.s);
    dp.push_back(prev.ds);
  }
  return out;
}

/// u_ij = d ln p_ij / d theta. Throws SingularCellError if any p_ij <= floor.
inline ScoreVectors score_vectors(const ModelParams& theta, const TestPlan& plan,
                                  double floor = kProbabilityFloor) {
  const auto jac = cell_jacobian(theta, plan);
  ScoreVectors out;
  out.groups.resize(jac.p.size());
  for (std::size_t i = 0; i < jac.p.size(); ++i) {
    for (std::size_t j = 0; j < jac.p[i].size(); ++j) {
      const double p = jac.p[i][j];
      if (!(p > floor)) throw SingularCellError(i, j, p);
      out.groups[i].push_back(jac.dp[i][j] / p);
    }
  }
  return out;
}

/// Inverse-transform draw: the lifetime t with S(t) = survival_draw.
inline double sample_lifetime(const ModelParams& theta, double nu, double survival_draw) {
  theta.validate();
  if (!(nu > 0) || !std::isfinite(nu)) throw DomainError("stress rate must be positive");
  if (!(survival_draw > 0.0 && survival_draw < 1.0))
    throw DomainError("uniform draw must lie strictly inside (0, 1)");
  const double bp1 = theta.b + 1.0;
  // A = u^{-(b+1)} - 1
  const double log_a_target = std::log(std::expm1(-bp1 * std::log(survival_draw)));
  const double log_scale = theta.mu * (std::log(theta.a) + theta.b * std::log(nu));
  return std::exp((log_a_target - log_scale) / (theta.mu * bp1));
}

}  // namespace psalt

#endif
