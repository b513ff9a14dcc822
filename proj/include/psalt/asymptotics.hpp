#ifndef PSALT_ASYMPTOTICS_HPP
#define PSALT_ASYMPTOTICS_HPP

// Sandwich covariance J^-1 K J^-1 / N of the minimum-EPD estimator, Wald
// intervals and the influence function.
//
// With w_ij = beta e^{alpha p_ij} + (1-beta)(gamma+1) p_ij^{gamma-1} and
// d_ij = dp_ij/dtheta:
//
//   J   = sum_i sum_j w_ij d_ij d_ij^T
//   K_i = Cov of the single-draw score  sum_j w_ij X_j d_ij,  X ~ Mult(1, p_i)
//       = sum_j w_ij^2 p_ij d_ij d_ij^T - m_i m_i^T,   m_i = sum_j w_ij p_ij d_ij
//
// K = sum_i K_i (literal) or sum_i (N / N_i) K_i (proportional). Only the
// proportional form is the exact large-sample covariance of the group-unweighted
// objective when the N_i differ; the literal one is the default.

#include <boost/math/distributions/normal.hpp>

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <vector>

#include "psalt/divergence.hpp"
#include "psalt/errors.hpp"
#include "psalt/estimation.hpp"
#include "psalt/model.hpp"

namespace psalt {

enum class KWeighting { literal, proportional };

struct SandwichMatrices {
  Mat3 j_mat = Mat3::Zero();
  Mat3 k_mat = Mat3::Zero();
  Mat3 cov = Mat3::Zero();
};

/// One-hot outlier cell for a group.
struct OutlierPoint {
  std::vector<int> indicator;

  static OutlierPoint at(std::size_t n_cells, std::size_t hot) {
    OutlierPoint t;
    t.indicator.assign(n_cells, 0);
    t.indicator.at(hot) = 1;
    return t;
  }

  void validate(std::size_t n_cells) const {
    if (indicator.size() != n_cells) throw DomainError("outlier point has the wrong length");
    int ones = 0;
    for (int v : indicator) {
      if (v != 0 && v != 1) throw DomainError("outlier point entries must be 0 or 1");
      ones += v;
    }
    if (ones != 1) throw DomainError("outlier point must have exactly one nonzero entry");
  }
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

namespace detail {

inline void require_positive_cells(const CellJacobian& jac, double floor) {
  for (std::size_t i = 0; i < jac.p.size(); ++i)
    for (std::size_t j = 0; j < jac.p[i].size(); ++j)
      if (!(jac.p[i][j] > floor)) throw SingularCellError(i, j, jac.p[i][j]);
}

inline Mat3 group_k(const std::vector<double>& p, const std::vector<Vec3>& dp,
                    const TuningParams& t, double floor) {
  Mat3 second = Mat3::Zero();
  Vec3 mean = Vec3::Zero();
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double w = epd_weight(p[j], t, floor);
    second += w * w * p[j] * dp[j] * dp[j].transpose();
    mean += w * p[j] * dp[j];
  }
  const Mat3 k = second - mean * mean.transpose();
  return 0.5 * (k + k.transpose());
}

}  // namespace detail

/// Inverse of a symmetric matrix via its eigendecomposition. Throws
/// SingularMatrixError when the smallest eigenvalue is not above
/// 1e-12 * trace.
inline Mat3 symmetric_inverse(const Mat3& m) {
  const Mat3 s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(s);
  const Vec3 lam = eig.eigenvalues();
  const double floor = 1e-12 * std::abs(s.trace());
  const double cond = lam.cwiseAbs().maxCoeff() / std::max(std::abs(lam.minCoeff()), 1e-300);
  if (!s.allFinite() || !(lam.minCoeff() > floor)) throw SingularMatrixError(cond);
  return eig.eigenvectors() * lam.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

inline Mat3 j_matrix(const ModelParams& theta, const TestPlan& plan, const TuningParams& tuning,
                     double floor = kProbabilityFloor) {
  tuning.validate();
  const auto jac = cell_jacobian(theta, plan);
  detail::require_positive_cells(jac, floor);
  Mat3 j = Mat3::Zero();
  for (std::size_t i = 0; i < jac.p.size(); ++i)
    for (std::size_t c = 0; c < jac.p[i].size(); ++c)
      j += detail::epd_weight(jac.p[i][c], tuning, floor) * jac.dp[i][c] *
           jac.dp[i][c].transpose();
  return 0.5 * (j + j.transpose());
}

/// Per-group K_i, unweighted.
inline std::vector<Mat3> k_matrix_groups(const ModelParams& theta, const TestPlan& plan,
                                         const TuningParams& tuning,
                                         double floor = kProbabilityFloor) {
  tuning.validate();
  const auto jac = cell_jacobian(theta, plan);
  detail::require_positive_cells(jac, floor);
  std::vector<Mat3> out;
  for (std::size_t i = 0; i < jac.p.size(); ++i)
    out.push_back(detail::group_k(jac.p[i], jac.dp[i], tuning, floor));
  return out;
}

inline Mat3 k_matrix(const ModelParams& theta, const TestPlan& plan, const TuningParams& tuning,
                     KWeighting weighting = KWeighting::literal,
                     double floor = kProbabilityFloor) {
  const auto groups = k_matrix_groups(theta, plan, tuning, floor);
  const double n_total = static_cast<double>(plan.total_units());
  Mat3 k = Mat3::Zero();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double scale = weighting == KWeighting::proportional
                             ? n_total / static_cast<double>(plan.groups[i].n_units)
                             : 1.0;
    k += scale * groups[i];
  }
  return k;
}

/// J, K and cov = J^-1 K J^-1 / n_total.
inline SandwichMatrices asym_covariance(const ModelParams& theta, const TestPlan& plan,
                                        const TuningParams& tuning, long n_total,
                                        KWeighting weighting = KWeighting::literal) {
  if (n_total <= 0) throw DomainError("total sample size must be positive");
  SandwichMatrices out;
  out.j_mat = j_matrix(theta, plan, tuning);
  out.k_mat = k_matrix(theta, plan, tuning, weighting);
  const Mat3 j_inv = symmetric_inverse(out.j_mat);
  out.cov = j_inv * out.k_mat * j_inv / static_cast<double>(n_total);
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

inline SandwichMatrices asym_covariance(const ModelParams& theta, const TestPlan& plan,
                                        const TuningParams& tuning,
                                        KWeighting weighting = KWeighting::literal) {
  return asym_covariance(theta, plan, tuning, plan.total_units(), weighting);
}

/// Inverse Fisher information of the MLE, (sum_i N_i sum_j d d^T / p)^-1.
inline Mat3 mle_covariance(const ModelParams& theta, const TestPlan& plan,
                           double floor = kProbabilityFloor) {
  const auto jac = cell_jacobian(theta, plan);
  detail::require_positive_cells(jac, floor);
  Mat3 info = Mat3::Zero();
  for (std::size_t i = 0; i < jac.p.size(); ++i)
    for (std::size_t c = 0; c < jac.p[i].size(); ++c)
      info += plan.groups[i].n_units * jac.dp[i][c] * jac.dp[i][c].transpose() / jac.p[i][c];
  return symmetric_inverse(info);
}

/// Wald intervals theta_l +- z_{(1+level)/2} sqrt(cov_ll).
inline std::array<Interval, 3> confidence_intervals(const FitResult& fit, const Mat3& cov,
                                                    double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
  const Vec3 est = fit.theta_hat.vec();
  std::array<Interval, 3> out;
  for (int l = 0; l < 3; ++l) {
    const double var = cov(l, l);
    if (var < 0.0 || !std::isfinite(var)) throw DomainError("negative or non-finite variance");
    const double half = z * std::sqrt(var);
    out[l] = {est[l] - half, est[l] + half};
  }
  return out;
}

/// Influence function J^-1 sum_i sum_j w_ij d_ij (t_ij - p_ij) for one
/// outlier cell per group.
inline Vec3 influence_function(std::span<const OutlierPoint> outliers, const ModelParams& theta,
                               const TestPlan& plan, const TuningParams& tuning,
                               double floor = kProbabilityFloor) {
  tuning.validate();
  if (outliers.size() != plan.n_groups())
    throw DomainError("need one outlier point per group");
  const auto jac = cell_jacobian(theta, plan);
  detail::require_positive_cells(jac, floor);
  Vec3 s = Vec3::Zero();
  Mat3 j = Mat3::Zero();
  for (std::size_t i = 0; i < jac.p.size(); ++i) {
    outliers[i].validate(jac.p[i].size());
    for (std::size_t c = 0; c < jac.p[i].size(); ++c) {
      const double w = detail::epd_weight(jac.p[i][c], tuning, floor);
      j += w * jac.dp[i][c] * jac.dp[i][c].transpose();
      s += w * jac.dp[i][c] * (outliers[i].indicator[c] - jac.p[i][c]);
    }
  }
  return symmetric_inverse(j) * s;
}

}  // namespace psalt

#endif
