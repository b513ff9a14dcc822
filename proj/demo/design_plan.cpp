// Searches for an A-optimal three-group plan under the default cost model
// and prints the best design for a few seeds.
//
//   demo_design_plan [gamma] [seeds]

#include <cstdio>
#include <cstdlib>

#include "psalt/design.hpp"

int main(int argc, char** argv) {
  using namespace psalt;
  const double gamma = argc > 1 ? std::atof(argv[1]) : 0.3;
  const int seeds = argc > 2 ? std::atoi(argv[2]) : 3;
  const ModelParams theta{1.6, 1.1, 2.7};
  const TuningParams tuning{1.0, 0.0, gamma};
  const CostParams cost;
  const DesignProblem prob = DesignProblem::reference_setting();

  for (int s = 1; s <= seeds; ++s) {
    SwarmOptions opt;
    opt.seed = static_cast<std::uint64_t>(s);
    const SwarmResult res = cpso(theta, tuning, cost, prob, opt);
    std::printf("seed %d: tr V %.6g, cost %.2f, psi %.3g, %d iterations\n", s, res.best.objective,
                res.best.cost, res.best.violation, res.iterations);
    for (std::size_t i = 0; i < prob.n_groups(); ++i) {
      std::printf("  nu %5.1f  N %3ld  tau", prob.stress_rates[i], res.best.allocation[i]);
      for (double t : res.best.inspection_times[i]) std::printf(" %.3f", t);
      std::printf("\n");
    }
  }
}
