#pragma once

#include <Eigen/Dense>
#include <optional>

#include "emtest/errors.hpp"
#include "emtest/rng.hpp"

namespace emtest {

enum class FamilyKind { NormalKnownVariance, BernoulliLogit };

// Response family with the linear predictor eta = x'theta + z'gamma. The
// normal family carries a known standard deviation; a location-scale mixture
// (unknown sigma) is out of scope.
struct Family {
  FamilyKind kind = FamilyKind::NormalKnownVariance;
  double sigma = 1.0;  // used by the normal family only

  static Family normal(double sigma) {
    if (!(sigma > 0.0)) throw InvalidInputError("Family: sigma must be > 0");
    return Family{FamilyKind::NormalKnownVariance, sigma};
  }
  static Family logit() { return Family{FamilyKind::BernoulliLogit, 1.0}; }
};

// Observations: response y, subgroup-effect covariates X (n x p) and
// common-effect covariates Z (n x q, q may be zero).
struct Dataset {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::MatrixXd Z;
  Family family;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index q() const { return Z.cols(); }

  // Checks dimensions, finiteness and (for the logit family) that every
  // response is exactly 0 or 1.
  void validate() const;
};

// Equality constraint direction . coef == value, used to pin a coefficient
// sum to an interval boundary during constrained M-steps.
struct LinearConstraint {
  Eigen::VectorXd direction;
  double value = 0.0;
};

// First and second derivative of the density with respect to eta, each
// divided by the density itself.
struct EtaRatios {
  double score;      // f'/f
  double curvature;  // f''/f
};

double log_density(const Family& family, double y, double eta);

// Vectorized log-density; y and eta must have equal length.
Eigen::VectorXd log_density_vec(const Family& family, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& eta);

EtaRatios eta_derivative_ratios(const Family& family, double y, double eta);

// Numerically stable logistic(eta).
double logistic(double eta);

// Quadratic coefficient tilt 0.5 * sum_k weight_k * (coef_k - target_k)^2,
// subtracted from the weighted log-likelihood. Used by the penalized theta
// update; not part of the plain fitting surface.
struct QuadraticPenalty {
  Eigen::VectorXd weight;
  Eigen::VectorXd target;
};

// Maximizes sum_i weights_i * log f(y_i | design_i . coef + offsets_i),
// optionally subject to an equality constraint. Normal family is solved in
// closed form (one Lagrange multiplier when constrained); the logit family by
// IRLS with step halving, reparametrized onto the constraint's affine
// subspace when constrained. Observations with weight below 1e-12 (after
// normalizing weights by their mean) are dropped from the working set.
Eigen::VectorXd fit_weighted_glm(
    const Family& family, const Eigen::VectorXd& y,
    const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
    const Eigen::VectorXd& offsets,
    const std::optional<LinearConstraint>& constraint = std::nullopt);

// Same maximization with an additional quadratic coefficient penalty.
Eigen::VectorXd fit_weighted_glm_penalized(
    const Family& family, const Eigen::VectorXd& y,
    const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
    const Eigen::VectorXd& offsets, const QuadraticPenalty& penalty,
    const std::optional<LinearConstraint>& constraint = std::nullopt);

Eigen::VectorXd simulate_response(const Family& family,
                                  const Eigen::VectorXd& eta, Rng& rng);

}  // namespace emtest
