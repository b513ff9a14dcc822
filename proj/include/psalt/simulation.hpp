#ifndef PSALT_SIMULATION_HPP
#define PSALT_SIMULATION_HPP

// Data generation, Monte-Carlo summaries, parametric bootstrap and the
// bootstrap goodness-of-fit test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "psalt/divergence.hpp"
#include "psalt/errors.hpp"
#include "psalt/estimation.hpp"
#include "psalt/model.hpp"
#include "psalt/parallel.hpp"
#include "psalt/random.hpp"

namespace psalt {

enum class ContaminantKind {
  /// S*(t) = exp[-((a* nu^b*) t)^mu*], the same stress link as the main model.
  linked_weibull,
  /// Plain Weibull with shape a* and scale b*; mu* unused.
  plain_weibull,
};

struct ContaminationSpec {
  double epsilon = 0.0;
  ModelParams contaminant{1.4, 1.0, 2.6};
  ContaminantKind kind = ContaminantKind::linked_weibull;

  void validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
      throw DomainError("contamination.epsilon must lie in [0, 1]");
    contaminant.validate();
  }
};

/// A fitting recipe: MLE when `tuning` is empty, otherwise MEPDE at `tuning`.
struct EstimatorSpec {
  std::string name = "MLE";
  std::optional<TuningParams> tuning;

  static EstimatorSpec mle() { return {}; }
  static EstimatorSpec mepde(const TuningParams& t, std::string name = "MEPDE") {
    return {std::move(name), t};
  }
};

struct McReport {
  std::string estimator;
  Vec3 bias = Vec3::Zero();  // mean(theta_hat) - theta0
  Vec3 abs_bias = Vec3::Zero();
  Vec3 rmse = Vec3::Zero();
  double rmse_plus = 0.0;
  int replications = 0;  // successful fits
  int failures = 0;
  bool flagged = false;  // more than 20% of fits failed
};

inline double sample_contaminant(const ContaminationSpec& spec, double nu, double survival_draw) {
  const double e = -std::log(survival_draw);
  const auto& c = spec.contaminant;
  if (spec.kind == ContaminantKind::plain_weibull) return c.b * std::pow(e, 1.0 / c.a);
  return std::pow(e, 1.0 / c.mu) / (c.a * std::pow(nu, c.b));
}

/// Cell index of lifetime t: j with tau_(j-1) < t <= tau_j, or the survivor cell.
inline std::size_t tabulate(const GroupPlan& g, double t) {
  const auto& tau = g.inspection_times;
  return static_cast<std::size_t>(std::lower_bound(tau.begin(), tau.end(), t) - tau.begin());
}

/// Simulated interval/survivor counts for every group of the plan.
inline ObservedCounts generate_dataset(const ModelParams& theta, const TestPlan& plan,
                                       const ContaminationSpec& contamination,
                                       std::uint64_t seed) {
  theta.validate();
  plan.validate();
  contamination.validate();
  Rng rng(seed);
  ObservedCounts out;
  for (const auto& g : plan.groups) {
    std::vector<long> cells(g.n_cells(), 0);
    for (int unit = 0; unit < g.n_units; ++unit) {
      const bool outlier = contamination.epsilon > 0.0 && rng.uniform() < contamination.epsilon;
      const double u = rng.uniform_open();
      const double t = outlier ? sample_contaminant(contamination, g.stress_rate, u)
                               : sample_lifetime(theta, g.stress_rate, u);
      ++cells[tabulate(g, t)];
    }
    out.cells.push_back(std::move(cells));
  }
  return out;
}

/// Fits one estimator; nullopt when the solver fails to converge or throws.
inline std::optional<FitResult> try_fit(const EstimatorSpec& spec, const ObservedCounts& counts,
                                        const TestPlan& plan, const ModelParams& init) {
  try {
    FitResult fit = spec.tuning ? mepde(counts, plan, *spec.tuning, init) : mle(counts, plan, init);
    if (!fit.converged || !fit.theta_hat.valid()) return std::nullopt;
    return fit;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// Per replicate, per estimator: the estimate, or nullopt for a failed fit.
/// MLE starts at theta0; every MEPDE is warm-started at that replicate's MLE.
inline std::vector<std::vector<std::optional<ModelParams>>> simulate_estimates(
    const ModelParams& theta0, const TestPlan& plan, const ContaminationSpec& contamination,
    const std::vector<EstimatorSpec>& estimators, int reps, std::uint64_t seed,
    unsigned threads = 1) {
  if (reps < 1) throw DomainError("reps must be at least 1");
  std::vector<std::vector<std::optional<ModelParams>>> out(
      static_cast<std::size_t>(reps), std::vector<std::optional<ModelParams>>(estimators.size()));
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
    const auto data = generate_dataset(theta0, plan, contamination, substream_seed(seed, r));
    const auto ml = try_fit(EstimatorSpec::mle(), data, plan, theta0);
    const ModelParams warm = ml ? ml->theta_hat : theta0;
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      const auto fit = estimators[e].tuning ? try_fit(estimators[e], data, plan, warm) : ml;
      if (fit) out[r][e] = fit->theta_hat;
    }
  });
  return out;
}

/// Bias / RMSE summary of estimates around a reference value.
inline McReport summarize(const std::string& name, const std::vector<std::optional<ModelParams>>& est,
                          const ModelParams& reference) {
  McReport rep;
  rep.estimator = name;
  Vec3 sum = Vec3::Zero(), sq = Vec3::Zero();
  const Vec3 ref = reference.vec();
  for (const auto& e : est) {
    if (!e) {
      ++rep.failures;
      continue;
    }
    const Vec3 d = e->vec() - ref;
    sum += d;
    sq += d.cwiseProduct(d);
    ++rep.replications;
  }
  if (rep.replications > 0) {
    rep.bias = sum / rep.replications;
    rep.abs_bias = rep.bias.cwiseAbs();
    rep.rmse = (sq / rep.replications).cwiseSqrt();
    rep.rmse_plus = rep.rmse.sum();
  }
  const int total = rep.replications + rep.failures;
  rep.flagged = total == 0 || rep.failures > 0.2 * total;
  return rep;
}

inline std::vector<McReport> run_simulation(const ModelParams& theta0, const TestPlan& plan,
                                            const ContaminationSpec& contamination,
                                            const std::vector<EstimatorSpec>& estimators,
                                            int reps, std::uint64_t seed, unsigned threads = 1) {
  const auto est = simulate_estimates(theta0, plan, contamination, estimators, reps, seed, threads);
  std::vector<McReport> out;
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    std::vector<std::optional<ModelParams>> column;
    column.reserve(est.size());
    for (const auto& row : est) column.push_back(row[e]);
    out.push_back(summarize(estimators[e].name, column, theta0));
  }
  return out;
}

/// Best MLE over the default starts, then MEPDE from it if requested.
inline FitResult fit_estimator(const EstimatorSpec& spec, const ObservedCounts& counts,
                               const TestPlan& plan) {
  const auto starts = default_starts();
  FitResult ml = mle_multistart(counts, plan, starts);
  if (!spec.tuning) return ml;
  std::vector<FitResult> fits{mepde(counts, plan, *spec.tuning, ml.theta_hat)};
  for (const auto& s : starts) fits.push_back(mepde(counts, plan, *spec.tuning, s));
  return pick_best(fits, false);
}

struct BootstrapReport {
  ModelParams estimate;
  Vec3 bias = Vec3::Zero();  // mean(theta*) - theta_hat
  Vec3 rmse = Vec3::Zero();  // around theta_hat
  double rmse_plus = 0.0;
  Vec3 lower_2_5 = Vec3::Zero();
  Vec3 upper_97_5 = Vec3::Zero();
  int replications = 0;
  int failures = 0;
};

namespace detail {

inline double percentile(std::vector<double> v, double prob) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Parametric bootstrap around an already fitted estimate.
inline BootstrapReport bootstrap_from(const ModelParams& estimate, const TestPlan& plan,
                                      const EstimatorSpec& spec, int b_reps, std::uint64_t seed,
                                      unsigned threads = 1) {
  if (b_reps < 1) throw DomainError("bootstrap needs at least one replicate");
  std::vector<std::optional<ModelParams>> est(static_cast<std::size_t>(b_reps));
  parallel_for(est.size(), threads, [&](std::size_t r) {
    const auto data = generate_dataset(estimate, plan, {}, substream_seed(seed, r));
    ModelParams warm = estimate;
    if (spec.tuning) {
      if (auto ml = try_fit(EstimatorSpec::mle(), data, plan, estimate)) warm = ml->theta_hat;
    }
    if (auto fit = try_fit(spec, data, plan, warm)) est[r] = fit->theta_hat;
  });
  const McReport summary = summarize(spec.name, est, estimate);
  BootstrapReport out;
  out.estimate = estimate;
  out.bias = summary.bias;
  out.rmse = summary.rmse;
  out.rmse_plus = summary.rmse_plus;
  out.replications = summary.replications;
  out.failures = summary.failures;
  for (int l = 0; l < 3; ++l) {
    std::vector<double> v;
    for (const auto& e : est)
      if (e) v.push_back(e->vec()[l]);
    out.lower_2_5[l] = detail::percentile(v, 0.025);
    out.upper_97_5[l] = detail::percentile(v, 0.975);
  }
  return out;
}

inline BootstrapReport bootstrap(const ObservedCounts& counts, const TestPlan& plan,
                                 const EstimatorSpec& spec, int b_reps, std::uint64_t seed,
                                 unsigned threads = 1) {
  const FitResult fit = fit_estimator(spec, counts, plan);
  return bootstrap_from(fit.theta_hat, plan, spec, b_reps, seed, threads);
}

/// TS = sum_ij |n_ij - N_i p_ij| / (N_i p_ij) over all cells including survivors.
inline double gof_statistic(const ObservedCounts& counts, const TestPlan& plan,
                            const ModelParams& theta) {
  counts.validate_against(plan);
  const auto cells = cell_probabilities(theta, plan);
  double ts = 0.0;
  for (std::size_t i = 0; i < cells.groups.size(); ++i) {
    const double n = plan.groups[i].n_units;
    for (std::size_t j = 0; j < cells.groups[i].size(); ++j) {
      const double expected = n * cells.groups[i][j];
      if (!(expected > 0.0))
        throw DomainError("expected count is zero in group " + std::to_string(i) + ", cell " +
                          std::to_string(j));
      ts += std::abs(counts.cells[i][j] - expected) / expected;
    }
  }
  return ts;
}

/// Fraction of bootstrap statistics at least as large as the observed one.
inline double bootstrap_p_value(double observed, const std::vector<double>& resampled) {
  if (resampled.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto hits = std::count_if(resampled.begin(), resampled.end(),
                                  [&](double t) { return t >= observed; });
  return static_cast<double>(hits) / static_cast<double>(resampled.size());
}

struct GofResult {
  double ts = 0.0;
  double p_value = 0.0;
  ModelParams estimate;
  std::vector<double> resampled;  // TS* of successful replicates, in replicate order
  int failures = 0;
};

inline GofResult gof_test(const ObservedCounts& counts, const TestPlan& plan, int b_reps,
                          std::uint64_t seed, unsigned threads = 1) {
  if (b_reps < 1) throw DomainError("bootstrap needs at least one replicate");
  GofResult out;
  out.estimate = fit_estimator(EstimatorSpec::mle(), counts, plan).theta_hat;
  out.ts = gof_statistic(counts, plan, out.estimate);
  std::vector<std::optional<double>> ts(static_cast<std::size_t>(b_reps));
  parallel_for(ts.size(), threads, [&](std::size_t r) {
    const auto data = generate_dataset(out.estimate, plan, {}, substream_seed(seed, r));
    const auto fit = try_fit(EstimatorSpec::mle(), data, plan, out.estimate);
    if (!fit) return;
    try {
      ts[r] = gof_statistic(data, plan, fit->theta_hat);
    } catch (const DomainError&) {
    }
  });
  for (const auto& t : ts) {
    if (t)
      out.resampled.push_back(*t);
    else
      ++out.failures;
  }
  out.p_value = bootstrap_p_value(out.ts, out.resampled);
  return out;
}

}  // namespace psalt

#endif
