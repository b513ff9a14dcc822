#ifndef PSALT_TUNING_HPP
#define PSALT_TUNING_HPP

// Data-driven choice of (alpha, beta, gamma).
//
//  * WJ:   estimated MSE |theta_EP - pilot|^2 + tr(J^-1 K J^-1) / N
//  * IWJ:  WJ with the pilot replaced by the last selection's fit until stable
//  * AMAX / MAE / AMED: max / mean / median of |p_ij(theta_EP) - q_ij|
//  * CSM:  concrete score matching on the one-hot outcome lattice of each group
//
// Concrete score matching. The outcome space of group i is the set of one-hot
// vectors X_i1 .. X_i(J+1) (failure in interval j, or survival). Each X_ij is
// linked to X_i(j-1) and X_i(j+1) where those exist, so the end cells have one
// neighbour and interior cells two. The unnormalised model is
//
//   Q_theta(X_ij) = exp(-V(X_ij)),  V(X) = sum_j' [c_j' - b_j' x_j']
//
// with c_j = (1-beta) p^{gamma+1} + beta/alpha e^{alpha p}(p - 1/alpha) and
// b_j = beta/alpha e^{alpha p} + (gamma+1)/gamma (1-beta) p^gamma, all at
// p = p_ij(theta). The concrete score at X is the vector of relative changes
// Q(neighbour)/Q(X) - 1. With data weights Q_data the per-group criterion is
//
//   Phi = sum_X sum_m [ Q_data(X)(c_m(X)^2 + 2 c_m(X)) - 2 Q_data(N_m(X)) c_m(X) ]
//
// whose sample version averages (c^2 + 2c) over the observed points and
// 2 c_m(X') over the reverse-neighbour incidences (X', m) of each observed point.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "psalt/asymptotics.hpp"
#include "psalt/divergence.hpp"
#include "psalt/errors.hpp"
#include "psalt/estimation.hpp"
#include "psalt/model.hpp"
#include "psalt/parallel.hpp"

namespace psalt {

struct TuningGrid {
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<double> gammas;

  /// alpha in {-15,-10,-8,-6,-4,-2,-1,1,2,4,6,9}, beta in {0,0.1,..,1},
  /// gamma in {0.02,0.06,..,0.98} plus 1.0.
  static TuningGrid default_grid() {
    TuningGrid g;
    g.alphas = {-15, -10, -8, -6, -4, -2, -1, 1, 2, 4, 6, 9};
    for (int k = 0; k <= 10; ++k) g.betas.push_back(k / 10.0);
    for (int k = 0; k < 25; ++k) g.gammas.push_back(0.02 + 0.04 * k);
    g.gammas.push_back(1.0);
    return g;
  }

  /// Admissible grid points with redundant ones removed: beta = 0 ignores
  /// alpha and beta = 1 ignores gamma, so only the first alpha (resp. gamma)
  /// is kept for those rows. Order is alpha-major, then beta, then gamma.
  std::vector<TuningParams> points() const {
    if (alphas.empty() || betas.empty() || gammas.empty())
      throw DomainError("tuning grid must be nonempty in every coordinate");
    std::vector<TuningParams> out;
    std::set<std::tuple<double, double, double>> seen;
    for (double a : alphas)
      for (double b : betas)
        for (double g : gammas) {
          TuningParams t{a, b, g};
          t.validate();
          const double key_a = b == 0.0 ? alphas.front() : a;
          const double key_g = b == 1.0 ? gammas.front() : g;
          if (seen.insert({key_a, b, key_g}).second) out.push_back({key_a, b, key_g});
        }
    return out;
  }
};

/// Tie-break order for selections: smallest (|alpha|, beta, gamma).
inline bool tuning_less(const TuningParams& l, const TuningParams& r) {
  return std::make_tuple(std::abs(l.alpha), l.beta, l.gamma, l.alpha) <
         std::make_tuple(std::abs(r.alpha), r.beta, r.gamma, r.alpha);
}

/// One grid point's fit together with its selection score.
struct GridScore {
  TuningParams tuning;
  std::optional<FitResult> fit;
  double score = std::numeric_limits<double>::infinity();
};

struct TuningSelection {
  TuningParams tuning;
  double score = std::numeric_limits<double>::infinity();
  std::vector<GridScore> table;  // every grid point, grid order
  int iterations = 1;  // IWJ: rounds until the selection stopped changing
  bool cycling = false;  // IWJ only: period-2 oscillation detected
};

struct TuningOptions {
  KWeighting weighting = KWeighting::literal;
  unsigned threads = 1;
};

namespace detail {

inline const GridScore& argmin_score(const std::vector<GridScore>& table) {
  const GridScore* best = nullptr;
  for (const auto& row : table) {
    if (!std::isfinite(row.score)) continue;
    if (!best || row.score < best->score ||
        (row.score == best->score && tuning_less(row.tuning, best->tuning)))
      best = &row;
  }
  if (!best) throw std::runtime_error("every grid point failed to fit");
  return *best;
}

/// MEPDE at every grid point, warm-started from `warm`.
inline std::vector<GridScore> fit_grid(const ObservedCounts& counts, const TestPlan& plan,
                                       const std::vector<TuningParams>& points,
                                       const ModelParams& warm, unsigned threads) {
  std::vector<GridScore> table(points.size());
  parallel_for(points.size(), threads, [&](std::size_t k) {
    table[k].tuning = points[k];
    try {
      auto fit = mepde(counts, plan, points[k], warm);
      if (fit.converged) table[k].fit = std::move(fit);
    } catch (const std::exception&) {
    }
  });
  return table;
}

inline FitResult warm_start(const ObservedCounts& counts, const TestPlan& plan) {
  const auto starts = default_starts();
  return mle_multistart(counts, plan, starts);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Warwick-Jones

/// The two parts of the WJ score.
struct WjTerms {
  double bias = 0.0;      // |theta_EP - pilot|^2
  double variance = 0.0;  // tr(cov)
  double total() const { return bias + variance; }
};

inline WjTerms wj_terms(const ModelParams& fitted, const ModelParams& pilot, const TestPlan& plan,
                        const TuningParams& tuning, KWeighting weighting = KWeighting::literal) {
  WjTerms out;
  out.bias = (fitted.vec() - pilot.vec()).squaredNorm();
  out.variance = asym_covariance(fitted, plan, tuning, weighting).cov.trace();
  return out;
}

/// WJ score of `tuning`, fitting the MEPDE internally. A failed fit scores +inf.
inline double wj_mse(const TuningParams& tuning, const ModelParams& pilot,
                     const ObservedCounts& counts, const TestPlan& plan,
                     KWeighting weighting = KWeighting::literal) {
  try {
    const auto fit = mepde(counts, plan, tuning, pilot);
    if (!fit.converged) return std::numeric_limits<double>::infinity();
    return wj_terms(fit.theta_hat, pilot, plan, tuning, weighting).total();
  } catch (const std::exception&) {
    return std::numeric_limits<double>::infinity();
  }
}

namespace detail {

inline void score_wj(std::vector<GridScore>& table, const ModelParams& pilot, const TestPlan& plan,
                     KWeighting weighting) {
  for (auto& row : table) {
    row.score = std::numeric_limits<double>::infinity();
    if (!row.fit) continue;
    try {
      row.score = wj_terms(row.fit->theta_hat, pilot, plan, row.tuning, weighting).total();
    } catch (const std::exception&) {
    }
  }
}

}  // namespace detail

/// Single WJ pass with a fixed pilot (MLE by default).
inline TuningSelection wj_select(const ObservedCounts& counts, const TestPlan& plan,
                                 const TuningGrid& grid, std::optional<ModelParams> pilot = {},
                                 const TuningOptions& opt = {}) {
  const auto ml = detail::warm_start(counts, plan);
  const ModelParams p = pilot.value_or(ml.theta_hat);
  TuningSelection out;
  out.table = detail::fit_grid(counts, plan, grid.points(), ml.theta_hat, opt.threads);
  detail::score_wj(out.table, p, plan, opt.weighting);
  const auto& best = detail::argmin_score(out.table);
  out.tuning = best.tuning;
  out.score = best.score;
  return out;
}

/// Iterated WJ: pilot <- fit at the current selection, until the selection
/// repeats or 20 rounds. A period-2 cycle returns the member with the smaller
/// WJ score and sets `cycling`.
inline TuningSelection iwj_select(const ObservedCounts& counts, const TestPlan& plan,
                                  const TuningGrid& grid, const TuningOptions& opt = {},
                                  std::optional<ModelParams> initial_pilot = {}) {
  const auto ml = detail::warm_start(counts, plan);
  TuningSelection out;
  out.table = detail::fit_grid(counts, plan, grid.points(), ml.theta_hat, opt.threads);
  ModelParams pilot = initial_pilot.value_or(ml.theta_hat);
  std::vector<TuningSelection> history;
  for (int round = 1; round <= 20; ++round) {
    detail::score_wj(out.table, pilot, plan, opt.weighting);
    const auto& best = detail::argmin_score(out.table);
    TuningSelection sel;
    sel.tuning = best.tuning;
    sel.score = best.score;
    sel.iterations = round;
    const ModelParams next_pilot = best.fit->theta_hat;
    if (!history.empty() && history.back().tuning == sel.tuning) {
      sel.iterations = round - 1;  // the round that first reached it
      sel.table = std::move(out.table);
      return sel;
    }
    if (history.size() >= 2 && history[history.size() - 2].tuning == sel.tuning) {
      const auto& other = history.back();
      TuningSelection pick = other.score < sel.score ? other : sel;
      pick.iterations = round;
      pick.cycling = true;
      pick.table = std::move(out.table);
      return pick;
    }
    history.push_back(sel);
    pilot = next_pilot;
  }
  TuningSelection last = history.back();
  last.table = std::move(out.table);
  return last;
}

// ---------------------------------------------------------------------------
// Absolute-error criteria

enum class ErrorCriterion { amax, mae, amed };

/// max / mean / median of |p_ij(theta) - q_ij| over all cells of all groups.
/// The mean divides by sum_i (J_i + 1).
inline double absolute_error_score(const ModelParams& theta, const ObservedCounts& counts,
                                   const TestPlan& plan, ErrorCriterion criterion) {
  counts.validate_against(plan);
  const auto q = counts.proportions();
  const auto p = cell_probabilities(theta, plan);
  std::vector<double> err;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = 0; j < q[i].size(); ++j) err.push_back(std::abs(p.groups[i][j] - q[i][j]));
  switch (criterion) {
    case ErrorCriterion::amax:
      return *std::max_element(err.begin(), err.end());
    case ErrorCriterion::mae: {
      double s = 0.0;
      for (double e : err) s += e;
      return s / static_cast<double>(plan.total_cells());
    }
    case ErrorCriterion::amed: {
      std::sort(err.begin(), err.end());
      const std::size_t n = err.size();
      return n % 2 ? err[n / 2] : 0.5 * (err[n / 2 - 1] + err[n / 2]);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

inline TuningSelection min_error_select(const ObservedCounts& counts, const TestPlan& plan,
                                        const TuningGrid& grid, ErrorCriterion criterion,
                                        const TuningOptions& opt = {}) {
  const auto ml = detail::warm_start(counts, plan);
  TuningSelection out;
  out.table = detail::fit_grid(counts, plan, grid.points(), ml.theta_hat, opt.threads);
  for (auto& row : out.table)
    if (row.fit) row.score = absolute_error_score(row.fit->theta_hat, counts, plan, criterion);
  const auto& best = detail::argmin_score(out.table);
  out.tuning = best.tuning;
  out.score = best.score;
  return out;
}

// ---------------------------------------------------------------------------
// Concrete score matching

/// Neighbourhood structure of one group's one-hot lattice.
struct CsmLattice {
  std::size_t n_cells = 0;

  /// N(X_j): j-1 and j+1 where they exist, in that order.
  std::vector<std::size_t> neighbours(std::size_t j) const {
    std::vector<std::size_t> out;
    if (j > 0) out.push_back(j - 1);
    if (j + 1 < n_cells) out.push_back(j + 1);
    return out;
  }

  /// N^-1(X_j): pairs (X', m) such that the m-th neighbour of X' is X_j.
  std::vector<std::pair<std::size_t, std::size_t>> reverse_neighbours(std::size_t j) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t x = 0; x < n_cells; ++x) {
      const auto nb = neighbours(x);
      for (std::size_t m = 0; m < nb.size(); ++m)
        if (nb[m] == j) out.emplace_back(x, m);
    }
    return out;
  }
};

namespace detail {

/// b_j minus a theta-free constant; only differences of b enter the scores.
inline double csm_b_centered(double p, const TuningParams& t, double floor) {
  double b = 0.0;
  if (t.uses_exponential()) b += t.beta / t.alpha * std::exp(t.alpha * p);
  if (t.uses_polynomial()) {
    const double lp = std::log(floored(p, floor));
    b += (1.0 - t.beta) * (t.gamma == 0.0 ? lp : (t.gamma + 1.0) * std::expm1(t.gamma * lp) / t.gamma);
  }
  return b;
}

inline double csm_c(double p, const TuningParams& t) {
  double c = 0.0;
  if (t.uses_polynomial()) c += (1.0 - t.beta) * (t.gamma == 0.0 ? p : std::pow(p, t.gamma + 1.0));
  if (t.uses_exponential()) c += t.beta / t.alpha * std::exp(t.alpha * p) * (p - 1.0 / t.alpha);
  return c;
}

}  // namespace detail

/// Q_theta(X_ij) for group `group`, cell `cell`. The data-average over the
/// N_i devices is kept explicit; its summand does not depend on the device.
/// gamma = 0 uses the KL limit, whose b term is (1-beta) ln p.
inline double csm_q(const ModelParams& theta, const TuningParams& tuning,
                    const ObservedCounts& counts, const TestPlan& plan, std::size_t group,
                    std::size_t cell, double floor = kProbabilityFloor) {
  tuning.validate();
  counts.validate_against(plan);
  if (group >= plan.n_groups() || cell >= plan.groups[group].n_cells())
    throw DomainError("lattice index out of range");
  const auto p = cell_probabilities(theta, plan).groups[group];
  const long n_i = counts.group_total(group);
  if (n_i <= 0) throw DomainError("empty group");
  double device_sum = 0.0;
  for (long l = 0; l < n_i; ++l) {
    double v = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      double b;
      if (tuning.kl_limit()) {
        b = detail::csm_b_centered(p[j], tuning, floor);
      } else {
        b = 0.0;
        if (tuning.uses_exponential()) b += tuning.beta / tuning.alpha * std::exp(tuning.alpha * p[j]);
        if (tuning.uses_polynomial())
          b += (tuning.gamma + 1.0) / tuning.gamma * (1.0 - tuning.beta) *
               std::pow(detail::floored(p[j], floor), tuning.gamma);
      }
      v += detail::csm_c(p[j], tuning) - b * (j == cell ? 1.0 : 0.0);
    }
    device_sum += v;
  }
  return std::exp(-device_sum / static_cast<double>(n_i));
}

/// Concrete score at lattice point `cell` from arbitrary positive Q values of
/// one group: (Q(nb) - Q(X)) / Q(X) for each neighbour nb.
inline std::vector<double> concrete_score(const std::vector<double>& q_values, std::size_t cell) {
  if (cell >= q_values.size()) throw DomainError("lattice index out of range");
  for (double q : q_values)
    if (!(q > 0.0) || !std::isfinite(q)) throw DomainError("Q values must be positive and finite");
  const CsmLattice lattice{q_values.size()};
  std::vector<double> out;
  for (std::size_t nb : lattice.neighbours(cell))
    out.push_back((q_values[nb] - q_values[cell]) / q_values[cell]);
  return out;
}

/// Concrete scores of the model Q_theta for every cell of one group, computed
/// from differences of log Q so that large exponents do not overflow.
inline std::vector<std::vector<double>> model_concrete_scores(const std::vector<double>& p,
                                                              const TuningParams& tuning,
                                                              double floor = kProbabilityFloor) {
  std::vector<double> log_q(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) log_q[j] = detail::csm_b_centered(p[j], tuning, floor);
  const CsmLattice lattice{p.size()};
  std::vector<std::vector<double>> out(p.size());
  for (std::size_t j = 0; j < p.size(); ++j)
    for (std::size_t nb : lattice.neighbours(j)) out[j].push_back(std::expm1(log_q[nb] - log_q[j]));
  return out;
}

/// Exhaustive Phi for one group given concrete scores and data weights.
inline double csm_phi_exhaustive(const std::vector<std::vector<double>>& scores,
                                 const std::vector<double>& q_data) {
  const CsmLattice lattice{scores.size()};
  double phi1 = 0.0, phi2 = 0.0;
  for (std::size_t x = 0; x < scores.size(); ++x) {
    const auto nb = lattice.neighbours(x);
    for (std::size_t m = 0; m < nb.size(); ++m) {
      const double c = scores[x][m];
      phi1 += q_data[x] * (c * c + 2.0 * c);
      phi2 += 2.0 * q_data[nb[m]] * c;
    }
  }
  return phi1 - phi2;
}

/// Sample estimate of Phi for one group from its cell counts.
inline double csm_phi_estimate(const std::vector<std::vector<double>>& scores,
                               const std::vector<long>& counts) {
  const CsmLattice lattice{scores.size()};
  long n = 0;
  for (long c : counts) n += c;
  if (n <= 0) throw DomainError("empty group");
  double phi1 = 0.0, phi2 = 0.0;
  for (std::size_t y = 0; y < counts.size(); ++y) {
    if (counts[y] == 0) continue;
    double own = 0.0;
    for (double c : scores[y]) own += c * c + 2.0 * c;
    double incoming = 0.0;
    for (const auto& [x, m] : lattice.reverse_neighbours(y)) incoming += 2.0 * scores[x][m];
    phi1 += counts[y] * own;
    phi2 += counts[y] * incoming;
  }
  return (phi1 - phi2) / static_cast<double>(n);
}

/// Sum over groups of the sample CSM criterion at a fitted theta.
inline double csm_criterion(const ModelParams& theta_hat, const TuningParams& tuning,
                            const ObservedCounts& counts, const TestPlan& plan) {
  tuning.validate();
  counts.validate_against(plan);
  const auto p = cell_probabilities(theta_hat, plan);
  double phi = 0.0;
  for (std::size_t i = 0; i < plan.n_groups(); ++i)
    phi += csm_phi_estimate(model_concrete_scores(p.groups[i], tuning), counts.cells[i]);
  return phi;
}

/// Everything the criterion needs for one plan: the lattice, Q_theta, the
/// data weights Q_data = q_ij and the model concrete scores, per group.
struct CsmWorkspace {
  std::vector<CsmLattice> lattices;
  std::vector<std::vector<double>> q_theta;
  std::vector<std::vector<double>> q_data;
  std::vector<std::vector<std::vector<double>>> scores;

  static CsmWorkspace build(const ModelParams& theta, const TuningParams& tuning,
                            const ObservedCounts& counts, const TestPlan& plan) {
    tuning.validate();
    counts.validate_against(plan);
    const auto p = cell_probabilities(theta, plan);
    CsmWorkspace ws;
    ws.q_data = counts.proportions();
    for (std::size_t i = 0; i < plan.n_groups(); ++i) {
      const std::size_t m = plan.groups[i].n_cells();
      ws.lattices.push_back({m});
      std::vector<double> q(m);
      for (std::size_t j = 0; j < m; ++j) q[j] = csm_q(theta, tuning, counts, plan, i, j);
      ws.q_theta.push_back(std::move(q));
      ws.scores.push_back(model_concrete_scores(p.groups[i], tuning));
    }
    return ws;
  }

  /// Sum over groups of the exhaustive Phi under Q_data.
  double phi_exhaustive() const {
    double phi = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) phi += csm_phi_exhaustive(scores[i], q_data[i]);
    return phi;
  }
};

inline TuningSelection csm_select(const ObservedCounts& counts, const TestPlan& plan,
                                  const TuningGrid& grid, const TuningOptions& opt = {}) {
  const auto ml = detail::warm_start(counts, plan);
  TuningSelection out;
  out.table = detail::fit_grid(counts, plan, grid.points(), ml.theta_hat, opt.threads);
  for (auto& row : out.table)
    if (row.fit) row.score = csm_criterion(row.fit->theta_hat, row.tuning, counts, plan);
  const auto& best = detail::argmin_score(out.table);
  out.tuning = best.tuning;
  out.score = best.score;
  return out;
}

}  // namespace psalt

#endif
