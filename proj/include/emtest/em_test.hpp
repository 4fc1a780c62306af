#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "emtest/mixture.hpp"

namespace emtest {

struct EmTestConfig {
  int K = 3;              // penalized EM iterations per grid point
  double C = 3.0;         // penalty tuning constant, > 0
  std::vector<double> beta_grid = {0.1, 0.3, 0.5};  // subset of (0, 0.5]
  double lambda = 0.0;    // coefficient-difference penalty scale (0 = off)
  int inner_restarts = 7;  // starting points per grid point
  int inner_max_iterations = 50;
  std::uint64_t seed = 0;

  // Requires C > 0, K >= 1, every grid value in (0, 0.5] and 0.5 present.
  void validate() const;
};

// Parameters of the order-2m0 alternative: component h of the null fit is
// split into a pair with weights beta_h alpha_h and (1 - beta_h) alpha_h and
// coefficient rows theta1_h, theta2_h, both of whose sums stay inside the
// h-th partition interval.
struct AltState {
  Eigen::VectorXd alphas;  // m0
  Eigen::VectorXd betas;   // m0, each in (0, 1)
  Eigen::MatrixXd theta1;  // m0 x p
  Eigen::MatrixXd theta2;  // m0 x p
  Eigen::VectorXd gamma;   // q
  double penalized_loglik = 0.0;
};

struct GridPointResult {
  Eigen::VectorXd beta0;
  std::vector<double> trace;  // M_n^(1..K)
  AltState state;
  bool failed = false;
  std::string error;
};

struct EmTestResult {
  double statistic = 0.0;  // max over grid of trace[K]
  std::vector<GridPointResult> per_grid;
  double null_loglik = 0.0;
};

// C log(1 - |1 - 2 beta|); zero at beta = 0.5, diverging at 0 and 1.
double penalty_p(double beta, double C);

// Interval cut points (eta_0 = -inf, ..., eta_m0 = +inf) from midpoints of
// consecutive coefficient sums of the canonically ordered null fit.
Eigen::VectorXd partition_eta(const NullFit& nullfit);

// Maximizer over (0,1) of W1 log(beta) + W2 log(1-beta) + penalty_p(beta, C).
double beta_update(double W1, double W2, double C);

// One full penalized EM update: split weights, then alpha, theta (with
// interval projection), beta (unless frozen) and gamma.
AltState em_iterate(const AltState& state, const Dataset& data,
                    const NullFit& nullfit, const EmTestConfig& config,
                    bool freeze_beta);

// Approximates the restricted maximizer over the order-2m0 class at fixed
// beta0 by a multistart EM with beta frozen.
AltState initialize_alternative(const NullFit& nullfit,
                                const Eigen::VectorXd& beta0,
                                const Dataset& data,
                                const EmTestConfig& config);

// Full statistic: every beta0 in the m0-fold product grid is initialized and
// iterated K times; the statistic is the largest final trace value. A grid
// point that errors is recorded and excluded provided at least one point
// succeeds.
EmTestResult em_statistic(const Dataset& data, const NullFit& nullfit, int m0,
                          const EmTestConfig& config);

}  // namespace emtest
