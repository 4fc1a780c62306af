#pragma once

#include <Eigen/Dense>
#include <vector>

#include "emtest/errors.hpp"

namespace emtest {

// Maximizer of 2 v'w - v'Qv over the nonnegative orthant. By the KKT
// conditions the solution is characterized by its support S: v_S solves
// Q_SS v_S = w_S with v_S > 0, and (w - Qv)_k <= 0 off the support. The
// number of strictly positive entries drives the chi-bar-square weights.
struct NnqpSolution {
  Eigen::VectorXd v;
  std::vector<int> support;  // indices with v_k > 1e-12
  double objective = 0.0;    // 2 v'w - v'Qv
};

// Active-set solver (nonnegative least squares on the factor of Q). Q must
// be symmetric with minimum eigenvalue above 1e-10; callers regularize
// near-singular input before calling. Pivots are capped at 3 d^2.
NnqpSolution solve_nnqp(const Eigen::VectorXd& w, const Eigen::MatrixXd& Q);

// Exhaustive reference: enumerates all 2^d supports and keeps the feasible
// candidate with the largest objective. Refuses d > 16.
NnqpSolution brute_force_nnqp(const Eigen::VectorXd& w,
                              const Eigen::MatrixXd& Q);

}  // namespace emtest
