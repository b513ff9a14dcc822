// Fits the bundled light-bulb data by maximum likelihood and by a robust
// minimum-divergence estimator, then prints Wald intervals for both.
//
//   demo_fit_lightbulbs [data_dir]

#include <cstdio>
#include <string>

#include "psalt/asymptotics.hpp"
#include "psalt/io.hpp"
#include "psalt/simulation.hpp"

int main(int argc, char** argv) {
  using namespace psalt;
  const std::string dir = argc > 1 ? argv[1] : "data";
  const TestPlan plan = load_plan(dir + "/lightbulbs_plan.json");
  const ObservedCounts counts = load_counts(dir + "/lightbulbs.csv", plan);

  for (std::size_t i = 0; i < counts.n_groups(); ++i) {
    std::printf("group %zu:", i + 1);
    for (long c : counts.cells[i]) std::printf(" %ld", c);
    std::printf("\n");
  }

  const EstimatorSpec specs[] = {EstimatorSpec::mle(), EstimatorSpec::mepde({-6.0, 0.1, 0.16})};
  for (const auto& spec : specs) {
    const FitResult fit = fit_estimator(spec, counts, plan);
    const Mat3 cov = spec.tuning ? asym_covariance(fit.theta_hat, plan, *spec.tuning).cov
                                 : mle_covariance(fit.theta_hat, plan);
    const auto ci = confidence_intervals(fit, cov, 0.95);
    const Vec3 th = fit.theta_hat.vec();
    std::printf("\n%s  (converged %s, %d iterations)\n", spec.name.c_str(), fit.converged ? "yes" : "no",
                fit.iterations);
    const char* names[] = {"a", "b", "mu"};
    for (int l = 0; l < 3; ++l)
      std::printf("  %-2s %10.6f   [%10.6f, %10.6f]\n", names[l], th[l], ci[l].lower, ci[l].upper);
  }
  const auto ml = fit_estimator(EstimatorSpec::mle(), counts, plan);
  std::printf("\nTS = %.6f at the MLE\n", gof_statistic(counts, plan, ml.theta_hat));
}
