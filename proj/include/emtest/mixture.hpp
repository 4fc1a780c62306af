#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "emtest/glm.hpp"

namespace emtest {

// Discrete mixing distribution over component coefficient vectors: weights
// alphas (nonnegative, summing to one) and coefficient rows thetas (m x p).
struct MixingDistribution {
  Eigen::VectorXd alphas;
  Eigen::MatrixXd thetas;

  Eigen::Index components() const { return alphas.size(); }
  void validate() const;
};

// Converged null-model fit of order m0 with shared gamma.
struct NullFit {
  MixingDistribution psi;  // canonically ordered
  Eigen::VectorXd gamma;
  double loglik = 0.0;
  Eigen::MatrixXd responsibilities;  // n x m0, rows sum to one
  bool converged = false;
  int iterations = 0;
};

struct NullFitConfig {
  int restarts = 20;
  int max_iterations = 1000;
  double rel_tol = 1e-8;
  std::uint64_t seed = 0;
};

// n x m matrix of log f(y_i | x_i'theta_h + z_i'gamma).
Eigen::MatrixXd component_log_densities(const Eigen::MatrixXd& thetas,
                                        const Eigen::VectorXd& gamma,
                                        const Dataset& data);

double mixture_loglik(const MixingDistribution& psi,
                      const Eigen::VectorXd& gamma, const Dataset& data);

// Posterior component memberships r_ih = alpha_h f_ih / sum_l alpha_l f_il.
Eigen::MatrixXd responsibilities(const MixingDistribution& psi,
                                 const Eigen::VectorXd& gamma,
                                 const Dataset& data);

// Components permuted so theta_h' 1 is nondecreasing; ties broken by
// lexicographic order of theta rows, then by larger alpha first.
MixingDistribution canonical_order(const MixingDistribution& psi);

// Maximum-likelihood null fit by EM with restarts; the best non-degenerate
// run wins and is returned in canonical order.
NullFit fit_null(const Dataset& data, int m0,
                 const NullFitConfig& config = NullFitConfig{});

}  // namespace emtest
