#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "emtest/mixture.hpp"

namespace emtest {

// Per-observation score ingredients evaluated at the null fit. Row i of b1
// holds the m0-1 density contrasts followed by the m0 stacked first-order
// blocks; row i of b2 holds the m0 stacked diagonal second-order blocks.
struct ScoreVectors {
  Eigen::MatrixXd b1;  // n x (m0 - 1 + m0 p)
  Eigen::MatrixXd b2;  // n x (m0 p)
};

// Chi-square mixture weights a_0..a_{m0 p} estimated by Monte Carlo over the
// nonnegative quadratic program.
struct ChiBarWeights {
  Eigen::VectorXd a;
  int mc_draws = 0;
  std::uint64_t seed = 0;
};

ScoreVectors score_vectors(const NullFit& nullfit, const Dataset& data);

// Residual covariance of b2 after projecting out b1: B22 - B21 B11^{-1} B12
// from centered sample covariances. B11 is inverted through an
// eigendecomposition with pseudo-inverse truncation below 1e-10 of the top
// eigenvalue, and the result is ridge-regularized when near-singular.
Eigen::MatrixXd tilde_b22(const ScoreVectors& scores);

// Draws N centered normal vectors with covariance b22 (symmetric square
// root), solves the nonnegative quadratic program for each, and returns the
// support-size frequencies. Draw j uses its own stream derived from
// (seed, j), so the result is independent of thread count.
ChiBarWeights estimate_chibar_weights(const Eigen::MatrixXd& b22, int N,
                                      std::uint64_t seed, int threads = 1);

// Upper tail of the chi-bar-square mixture at t; the zero-degree component
// contributes only for t <= 0.
double chibar_pvalue(double t, const ChiBarWeights& weights);

// Upper tail of a chi-square distribution with integer df >= 0.
double chisq_upper_tail(int df, double t);

}  // namespace emtest
