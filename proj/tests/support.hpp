#ifndef PSALT_TESTS_SUPPORT_HPP
#define PSALT_TESTS_SUPPORT_HPP

// Shared fixtures and independent reference implementations for the tests.
// Nothing here calls into the library's numerical routines.

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "psalt/divergence.hpp"
#include "psalt/model.hpp"

namespace psalt::oracle {

using hp = boost::multiprecision::cpp_dec_float_50;

inline TestPlan simulation_plan() {
  return {{{20, 3.0, {0.4, 0.5, 0.7}}, {25, 8.0, {0.2, 0.4, 0.8}}, {30, 10.0, {0.2, 0.3, 0.5}}}};
}

inline TestPlan lightbulb_plan() {
  return {{{62, 0.201, {0.37, 0.67, 0.75}}, {61, 0.2015, {0.37, 0.44, 0.54}}}};
}

inline ObservedCounts lightbulb_counts() { return {{{18, 27, 8, 9}, {27, 7, 19, 8}}}; }

inline const ModelParams kTheta0{1.6, 1.1, 2.7};

/// S(t) = [1 + (a nu^b)^mu t^{mu(b+1)}]^{-1/(b+1)} in 50-digit arithmetic.
inline hp survival_hp(const ModelParams& th, double nu, double t) {
  if (t == 0.0) return hp(1);
  const hp a(th.a), b(th.b), mu(th.mu), v(nu), tt(t);
  const hp A = pow(a * pow(v, b), mu) * pow(tt, mu * (b + 1));
  return pow(1 + A, -1 / (b + 1));
}

inline std::vector<std::vector<hp>> cells_hp(const ModelParams& th, const TestPlan& plan) {
  std::vector<std::vector<hp>> out;
  for (const auto& g : plan.groups) {
    std::vector<hp> p;
    hp prev(1);
    for (double t : g.inspection_times) {
      const hp s = survival_hp(th, g.stress_rate, t);
      p.push_back(prev - s);
      prev = s;
    }
    p.push_back(prev);
    out.push_back(std::move(p));
  }
  return out;
}

/// Cell probabilities in double, computed directly from the survival formula.
inline std::vector<std::vector<double>> cells_direct(const ModelParams& th, const TestPlan& plan) {
  std::vector<std::vector<double>> out;
  for (const auto& row : cells_hp(th, plan)) {
    std::vector<double> p;
    for (const auto& x : row) p.push_back(static_cast<double>(x));
    out.push_back(std::move(p));
  }
  return out;
}

/// Random plan with positive, well-separated cells.
inline TestPlan random_plan(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> groups(1, 4), inspections(1, 4), units(5, 60);
  std::uniform_real_distribution<double> rate(0.5, 10.0), step(0.05, 0.3);
  TestPlan plan;
  const int k = groups(rng);
  for (int i = 0; i < k; ++i) {
    GroupPlan g;
    g.n_units = units(rng);
    g.stress_rate = rate(rng);
    double t = 0.0;
    const int j = inspections(rng);
    for (int m = 0; m < j; ++m) g.inspection_times.push_back(t += step(rng));
    plan.groups.push_back(std::move(g));
  }
  return plan;
}

inline ModelParams random_theta(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> a(0.5, 3.0), b(0.2, 2.0), mu(0.8, 4.0);
  return {a(rng), b(rng), mu(rng)};
}

/// Expected counts rounded to integers, adjusted so each group sums to N_i.
inline ObservedCounts rounded_counts(const ModelParams& th, const TestPlan& plan) {
  ObservedCounts c;
  const auto p = cells_direct(th, plan);
  for (std::size_t i = 0; i < plan.n_groups(); ++i) {
    std::vector<long> row;
    long total = 0;
    for (double x : p[i]) {
      row.push_back(std::lround(x * plan.groups[i].n_units));
      total += row.back();
    }
    row.back() += plan.groups[i].n_units - total;
    c.cells.push_back(std::move(row));
  }
  return c;
}

/// Central difference of a scalar function of theta.
inline Vec3 numeric_gradient(const std::function<double(const ModelParams&)>& f,
                             const ModelParams& th, double rel = 1e-6) {
  Vec3 g;
  for (int l = 0; l < 3; ++l) {
    Vec3 xp = th.vec(), xm = th.vec();
    const double h = rel * std::max(1.0, std::abs(xp[l]));
    xp[l] += h;
    xm[l] -= h;
    g[l] = (f(ModelParams::from(xp)) - f(ModelParams::from(xm))) / (2 * h);
  }
  return g;
}

/// Plain Nelder-Mead on an unconstrained 3-vector.
inline Vec3 nelder_mead(const std::function<double(const Vec3&)>& f, Vec3 start, double size,
                        int max_iter = 20000, double tol = 1e-15) {
  std::array<Vec3, 4> x;
  std::array<double, 4> fx;
  x[0] = start;
  for (int k = 1; k < 4; ++k) {
    x[k] = start;
    x[k][k - 1] += size;
  }
  for (int k = 0; k < 4; ++k) fx[k] = f(x[k]);
  for (int it = 0; it < max_iter; ++it) {
    std::array<int, 4> order{0, 1, 2, 3};
    std::sort(order.begin(), order.end(), [&](int l, int r) { return fx[l] < fx[r]; });
    std::array<Vec3, 4> xs;
    std::array<double, 4> fs;
    for (int k = 0; k < 4; ++k) {
      xs[k] = x[order[k]];
      fs[k] = fx[order[k]];
    }
    x = xs;
    fx = fs;
    if (std::abs(fx[3] - fx[0]) <= tol * (1 + std::abs(fx[0])) &&
        (x[3] - x[0]).cwiseAbs().maxCoeff() < 1e-12)
      break;
    const Vec3 c = (x[0] + x[1] + x[2]) / 3.0;
    const Vec3 r = c + (c - x[3]);
    const double fr = f(r);
    if (fr < fx[0]) {
      const Vec3 e = c + 2.0 * (c - x[3]);
      const double fe = f(e);
      if (fe < fr) {
        x[3] = e;
        fx[3] = fe;
      } else {
        x[3] = r;
        fx[3] = fr;
      }
    } else if (fr < fx[2]) {
      x[3] = r;
      fx[3] = fr;
    } else {
      const Vec3 k = c + 0.5 * (x[3] - c);
      const double fk = f(k);
      if (fk < fx[3]) {
        x[3] = k;
        fx[3] = fk;
      } else {
        for (int m = 1; m < 4; ++m) {
          x[m] = x[0] + 0.5 * (x[m] - x[0]);
          fx[m] = f(x[m]);
        }
      }
    }
  }
  return x[std::min_element(fx.begin(), fx.end()) - fx.begin()];
}

/// Newton on a gradient given only as a function, with a central-difference
/// Jacobian. Used to polish an oracle minimum.
inline Vec3 newton_root(const std::function<Vec3(const Vec3&)>& g, Vec3 x, int iters = 30) {
  for (int it = 0; it < iters; ++it) {
    const Vec3 gx = g(x);
    Mat3 jac;
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6 * std::max(1.0, std::abs(x[c]));
      Vec3 xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      jac.col(c) = (g(xp) - g(xm)) / (2 * h);
    }
    const Vec3 step = jac.fullPivLu().solve(gx);
    x -= step;
    if (step.norm() < 1e-14 * (1 + x.norm())) break;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Standalone density power divergence estimator, evaluated in 50 digits.

inline std::vector<std::vector<hp>> cells_hp(const hp& a, const hp& b, const hp& mu,
                                             const TestPlan& plan) {
  std::vector<std::vector<hp>> out;
  for (const auto& g : plan.groups) {
    std::vector<hp> p;
    hp prev(1);
    for (double t : g.inspection_times) {
      const hp A = pow(a * pow(hp(g.stress_rate), b), mu) * pow(hp(t), mu * (b + 1));
      const hp s = pow(1 + A, -1 / (b + 1));
      p.push_back(prev - s);
      prev = s;
    }
    p.push_back(prev);
    out.push_back(std::move(p));
  }
  return out;
}

/// sum_ij [ p^{1+g} - (1 + 1/g) q p^g ]
inline hp dpd_objective_hp(const hp& a, const hp& b, const hp& mu,
                           const std::vector<std::vector<double>>& q, const TestPlan& plan,
                           double gamma) {
  const hp g(gamma);
  const auto p = cells_hp(a, b, mu, plan);
  hp d(0);
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p[i].size(); ++j)
      d += pow(p[i][j], 1 + g) - (1 + 1 / g) * hp(q[i][j]) * pow(p[i][j], g);
  return d;
}

/// Minimiser of the DPD objective: Nelder-Mead on log theta in double, then
/// Newton on a 50-digit central-difference gradient.
inline ModelParams dpd_oracle_fit(const std::vector<std::vector<double>>& q, const TestPlan& plan,
                                  double gamma, const ModelParams& start) {
  auto f = [&](const Vec3& x) {
    const Vec3 t = x.array().exp();
    return static_cast<double>(dpd_objective_hp(hp(t[0]), hp(t[1]), hp(t[2]), q, plan, gamma));
  };
  Vec3 x = nelder_mead(f, Vec3(std::log(start.a), std::log(start.b), std::log(start.mu)), 0.3, 4000,
                       1e-14);
  auto grad = [&](const Vec3& xd) {
    Vec3 g;
    const hp h("1e-20");
    for (int l = 0; l < 3; ++l) {
      std::array<hp, 3> up{exp(hp(xd[0])), exp(hp(xd[1])), exp(hp(xd[2]))};
      std::array<hp, 3> dn = up;
      up[l] = exp(hp(xd[l]) + h);
      dn[l] = exp(hp(xd[l]) - h);
      const hp fu = dpd_objective_hp(up[0], up[1], up[2], q, plan, gamma);
      const hp fd = dpd_objective_hp(dn[0], dn[1], dn[2], q, plan, gamma);
      g[l] = static_cast<double>((fu - fd) / (2 * h));
    }
    return g;
  };
  x = newton_root(grad, x, 20);
  return {std::exp(x[0]), std::exp(x[1]), std::exp(x[2])};
}

}  // namespace psalt::oracle

#endif
