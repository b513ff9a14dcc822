#ifndef PSALT_ESTIMATION_HPP
#define PSALT_ESTIMATION_HPP

// MLE and minimum-EPD fits.
//
// Both are solved in log-parameters x = ln(theta), which keeps (a, b, mu)
// positive without explicit constraints. The outer loop is cyclic coordinate
// descent: each cycle runs a Brent line search on x_a, x_b, x_mu in turn
// within [x - ln 4, x + ln 4] (that is, theta in [theta/4, 4 theta]),
// re-centering the bracket whenever the minimum lands on its edge. A
// safeguarded Newton step on the analytic gradient closes each cycle; it is
// only kept when it does not raise the objective, so the objective trace is
// nonincreasing.
//
// gradient_norm is the Euclidean norm of the gradient with respect to x,
// i.e. |theta (*) grad_theta|, which also vanishes when an estimate runs to
// the b -> 0 edge of the parameter space.

#include <boost/math/tools/minima.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <tuple>
#include <vector>

#include "psalt/divergence.hpp"
#include "psalt/model.hpp"

namespace psalt {

struct FitResult {
  ModelParams theta_hat;
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  int iterations = 0;
  double gradient_norm = std::numeric_limits<double>::infinity();
  /// Solver objective after every cycle (index 0 is the start).
  std::vector<double> objective_trace;
};

struct SolverOptions {
  double gradient_tolerance = 1e-8;
  double step_tolerance = 1e-10;
  int max_cycles = 500;
  bool newton_acceleration = true;
};

namespace detail {

inline constexpr double kLogBound = 40.0;  // |ln theta| never exceeds this
inline const double kLn4 = std::log(4.0);

inline Vec3 to_log(const ModelParams& th) {
  return {std::log(th.a), std::log(th.b), std::log(th.mu)};
}

inline ModelParams from_log(const Vec3& x) {
  return {std::exp(x[0]), std::exp(x[1]), std::exp(x[2])};
}

/// f and grad act on ModelParams (natural coordinates); grad is d f / d theta.
template <class Objective, class Gradient>
class LogSpaceProblem {
 public:
  LogSpaceProblem(Objective f, Gradient g) : f_(std::move(f)), g_(std::move(g)) {}

  double value(const Vec3& x) const {
    const double v = f_(from_log(x));
    return std::isfinite(v) ? v : std::numeric_limits<double>::max();
  }

  Vec3 gradient(const Vec3& x) const {
    const ModelParams th = from_log(x);
    return g_(th).cwiseProduct(th.vec());
  }

 private:
  Objective f_;
  Gradient g_;
};

template <class Problem>
bool coordinate_step(const Problem& prob, Vec3& x, double& fx, int coord) {
  const int bits = std::numeric_limits<double>::digits / 2;
  double centre = x[coord];
  double half = kLn4;
  bool improved = false;
  for (int expansion = 0; expansion < 12; ++expansion) {
    const double lo = std::max(centre - half, -kLogBound);
    const double hi = std::min(centre + half, kLogBound);
    Vec3 trial = x;
    auto h = [&](double s) {
      trial[coord] = s;
      return prob.value(trial);
    };
    std::uintmax_t max_iter = 200;
    auto [s, hs] = boost::math::tools::brent_find_minima(h, lo, hi, bits, max_iter);
    if (hs < fx) {
      x[coord] = s;
      fx = hs;
      improved = true;
    }
    const double edge = 1e-3 * (hi - lo);
    const bool at_lo = s - lo < edge && lo > -kLogBound;
    const bool at_hi = hi - s < edge && hi < kLogBound;
    if (!at_lo && !at_hi) break;
    centre = x[coord];
    half *= 2.0;
  }
  return improved;
}

template <class Problem>
bool newton_step(const Problem& prob, Vec3& x, double& fx) {
  const Vec3 g = prob.gradient(x);
  if (!g.allFinite()) return false;
  const double h = 1e-5;
  Mat3 hess;
  for (int c = 0; c < 3; ++c) {
    Vec3 xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    hess.col(c) = (prob.gradient(xp) - prob.gradient(xm)) / (2.0 * h);
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
  if (!hess.allFinite()) return false;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(hess);
  Vec3 lam = eig.eigenvalues();
  const double scale = std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  for (int c = 0; c < 3; ++c) lam[c] = std::max(std::abs(lam[c]), 1e-10 * scale);
  Vec3 step = -eig.eigenvectors() * (eig.eigenvectors().transpose() * g).cwiseQuotient(lam);
  const double len = step.norm();
  if (!(len > 0) || !std::isfinite(len)) return false;
  if (len > 2.0) step *= 2.0 / len;

  const double gnorm = g.norm();
  const double noise = 1e-14 * (1.0 + std::abs(fx));
  for (double t = 1.0; t > 1e-6; t *= 0.5) {
    Vec3 xn = (x + t * step).cwiseMax(-kLogBound).cwiseMin(kLogBound);
    const double fn = prob.value(xn);
    if (fn < fx - noise || (fn <= fx + noise && prob.gradient(xn).norm() < gnorm)) {
      x = xn;
      fx = std::min(fn, fx);
      return true;
    }
  }
  return false;
}

template <class Objective, class Gradient>
FitResult minimize_positive(Objective f, Gradient grad, const ModelParams& init,
                            const SolverOptions& opt) {
  init.validate();
  LogSpaceProblem<Objective, Gradient> prob(std::move(f), std::move(grad));
  Vec3 x = to_log(init).cwiseMax(-kLogBound).cwiseMin(kLogBound);
  double fx = prob.value(x);
  FitResult out;
  out.objective_trace.push_back(fx);
  Vec3 g = prob.gradient(x);
  out.gradient_norm = g.norm();
  if (out.gradient_norm <= opt.gradient_tolerance) out.converged = true;
  for (int cycle = 1; cycle <= opt.max_cycles && !out.converged; ++cycle) {
    const Vec3 x_prev = x;
    for (int c = 0; c < 3; ++c) coordinate_step(prob, x, fx, c);
    bool newton_moved = false;
    if (opt.newton_acceleration) newton_moved = newton_step(prob, x, fx);
    out.iterations = cycle;
    out.objective_trace.push_back(fx);
    g = prob.gradient(x);
    out.gradient_norm = g.allFinite() ? g.norm() : std::numeric_limits<double>::infinity();
    if (out.gradient_norm <= opt.gradient_tolerance) {
      out.converged = true;
      break;
    }
    if ((x - x_prev).cwiseAbs().maxCoeff() < opt.step_tolerance && !newton_moved) break;
  }
  out.theta_hat = from_log(x);
  return out;
}

inline bool lexicographically_less(const ModelParams& l, const ModelParams& r) {
  return std::tie(l.a, l.b, l.mu) < std::tie(r.a, r.b, r.mu);
}

}  // namespace detail

/// Starting points used when the caller has none.
inline std::vector<ModelParams> default_starts() {
  return {{1.0, 1.0, 1.0}, {3.0, 0.5, 3.0}, {0.5, 2.0, 2.0}, {2.0, 0.1, 4.0}, {1.6, 1.1, 2.7}};
}

/// Maximum-likelihood fit. objective_value is ln L at the estimate.
inline FitResult mle(const ObservedCounts& counts, const TestPlan& plan, const ModelParams& init,
                     const SolverOptions& opt = {}) {
  counts.validate_against(plan);
  const double n_total = static_cast<double>(plan.total_units());
  auto f = [&](const ModelParams& th) { return -log_likelihood(th, counts, plan) / n_total; };
  auto g = [&](const ModelParams& th) -> Vec3 {
    return -log_likelihood_gradient(th, counts, plan) / n_total;
  };
  FitResult fit = detail::minimize_positive(f, g, init, opt);
  fit.objective_value = log_likelihood(fit.theta_hat, counts, plan);
  return fit;
}

/// Minimum-EPD fit. objective_value is epd_objective at the estimate.
inline FitResult mepde(const ObservedCounts& counts, const TestPlan& plan,
                       const TuningParams& tuning, const ModelParams& init,
                       const SolverOptions& opt = {}) {
  tuning.validate();
  counts.validate_against(plan);
  const auto q = counts.proportions();
  auto f = [&](const ModelParams& th) { return epd_objective_centered(th, q, plan, tuning); };
  auto g = [&](const ModelParams& th) -> Vec3 {
    return -epd_residual_from_proportions(th, q, plan, tuning);
  };
  FitResult fit = detail::minimize_positive(f, g, init, opt);
  fit.objective_value = epd_objective(fit.theta_hat, counts, plan, tuning);
  return fit;
}

/// MEPDE warm-started at the MLE.
inline FitResult mepde(const ObservedCounts& counts, const TestPlan& plan,
                       const TuningParams& tuning, const SolverOptions& opt = {}) {
  FitResult best_mle;
  bool have = false;
  for (const auto& start : default_starts()) {
    auto fit = mle(counts, plan, start, opt);
    if (!have || fit.objective_value > best_mle.objective_value) {
      best_mle = fit;
      have = true;
    }
  }
  return mepde(counts, plan, tuning, best_mle.theta_hat, opt);
}

/// Picks the best of several fits: smallest solver objective, then the
/// lexicographically smallest theta.
inline FitResult pick_best(std::span<const FitResult> fits, bool maximize) {
  if (fits.empty()) throw DomainError("no fits to choose from");
  const FitResult* best = &fits[0];
  for (const auto& f : fits.subspan(1)) {
    const double lhs = maximize ? -f.objective_value : f.objective_value;
    const double rhs = maximize ? -best->objective_value : best->objective_value;
    if (lhs < rhs || (lhs == rhs && detail::lexicographically_less(f.theta_hat, best->theta_hat)))
      best = &f;
  }
  return *best;
}

inline FitResult mle_multistart(const ObservedCounts& counts, const TestPlan& plan,
                                std::span<const ModelParams> starts,
                                const SolverOptions& opt = {}) {
  std::vector<FitResult> fits;
  for (const auto& s : starts) fits.push_back(mle(counts, plan, s, opt));
  return pick_best(fits, true);
}

inline FitResult mepde_multistart(const ObservedCounts& counts, const TestPlan& plan,
                                  const TuningParams& tuning, std::span<const ModelParams> starts,
                                  const SolverOptions& opt = {}) {
  std::vector<FitResult> fits;
  for (const auto& s : starts) fits.push_back(mepde(counts, plan, tuning, s, opt));
  return pick_best(fits, false);
}

}  // namespace psalt

#endif
