#include "emtest/glm.hpp"

#include <cmath>
#include <vector>

namespace emtest {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
constexpr double kWeightFloor = 1e-12;
constexpr double kIrlsGradTol = 1e-8;
constexpr int kIrlsMaxIter = 100;
constexpr double kSeparationNorm = 1e6;

// log(1 + exp(eta)) without overflow for large |eta|.
double softplus(double eta) {
  if (eta > 0.0) return eta + std::log1p(std::exp(-eta));
  return std::log1p(std::exp(eta));
}

void check_logit_response(double y) {
  if (y != 0.0 && y != 1.0)
    throw InvalidInputError("logit family: response must be 0 or 1, got " +
                            std::to_string(y));
}

struct WorkingSet {
  Eigen::VectorXd y;
  Eigen::MatrixXd design;
  Eigen::VectorXd w;  // normalized so the kept weights average ~1
  Eigen::VectorXd off;
  double scale;  // mean of the raw weights; penalties divide by this
};

WorkingSet make_working_set(const Eigen::VectorXd& y,
                            const Eigen::MatrixXd& design,
                            const Eigen::VectorXd& weights,
                            const Eigen::VectorXd& offsets) {
  const Eigen::Index n = y.size();
  if (design.rows() != n || weights.size() != n || offsets.size() != n)
    throw InvalidInputError("fit_weighted_glm: inconsistent dimensions");
  if (weights.minCoeff() < 0.0)
    throw InvalidInputError("fit_weighted_glm: negative weight");
  const double mean_w = weights.mean();
  if (!(mean_w > 0.0))
    throw InvalidInputError("fit_weighted_glm: weights sum to zero");

  std::vector<Eigen::Index> keep;
  keep.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (weights[i] / mean_w >= kWeightFloor) keep.push_back(i);

  WorkingSet ws;
  ws.scale = mean_w;
  ws.y.resize(keep.size());
  ws.design.resize(keep.size(), design.cols());
  ws.w.resize(keep.size());
  ws.off.resize(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    ws.y[r] = y[keep[r]];
    ws.design.row(r) = design.row(keep[r]);
    ws.w[r] = weights[keep[r]] / mean_w;
    ws.off[r] = offsets[keep[r]];
  }
  return ws;
}

// Solves A x = b for symmetric positive semi-definite A, throwing when A is
// rank deficient.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                          const char* what) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw SingularFitError(std::string(what) + ": factorization failed");
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() <= 1e-12 * dmax)
    throw SingularFitError(std::string(what) +
                           ": design rank-deficient on weight support");
  return ldlt.solve(b);
}

Eigen::VectorXd fit_normal(const WorkingSet& ws, double sigma2,
                           const QuadraticPenalty* pen,
                           const std::optional<LinearConstraint>& constraint) {
  const Eigen::Index p = ws.design.cols();
  Eigen::MatrixXd A = ws.design.transpose() * ws.w.asDiagonal() * ws.design;
  Eigen::VectorXd b =
      ws.design.transpose() * (ws.w.array() * (ws.y - ws.off).array()).matrix();
  if (pen) {
    // The Gaussian log-likelihood carries a 1/sigma^2 factor the penalty
    // does not, hence the sigma2 scaling.
    A.diagonal() += sigma2 * pen->weight / ws.scale;
    b += sigma2 * (pen->weight.array() * pen->target.array()).matrix() /
         ws.scale;
  }
  if (!constraint) return solve_spd(A, b, "fit_weighted_glm[normal]");

  // One Lagrange multiplier: [A c; c' 0] [coef; mu] = [b; value].
  const Eigen::VectorXd& c = constraint->direction;
  if (c.size() != p || c.norm() == 0.0)
    throw InvalidInputError("LinearConstraint: bad direction");
  Eigen::MatrixXd K(p + 1, p + 1);
  K.setZero();
  K.topLeftCorner(p, p) = A;
  K.topRightCorner(p, 1) = c;
  K.bottomLeftCorner(1, p) = c.transpose();
  Eigen::VectorXd rhs(p + 1);
  rhs.head(p) = b;
  rhs[p] = constraint->value;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible())
    throw SingularFitError("fit_weighted_glm[normal]: singular KKT system");
  return lu.solve(rhs).head(p);
}

double logit_objective(const WorkingSet& ws, const Eigen::VectorXd& eta,
                       const Eigen::VectorXd& coef, const QuadraticPenalty* pen,
                       double scale) {
  double obj = 0.0;
  for (Eigen::Index i = 0; i < ws.y.size(); ++i)
    obj += ws.w[i] * (ws.y[i] * eta[i] - softplus(eta[i]));
  if (pen)
    obj -= 0.5 *
           (pen->weight.array() * (coef - pen->target).array().square()).sum() /
           scale;
  return obj;
}

// IRLS (damped Newton) over the free coordinates u; coef(u) = base + B u.
// With no constraint, base = 0 and B = I.
Eigen::VectorXd fit_logit(const WorkingSet& ws, const QuadraticPenalty* pen,
                          const std::optional<LinearConstraint>& constraint) {
  const Eigen::Index p = ws.design.cols();

  Eigen::VectorXd base = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd B = Eigen::MatrixXd::Identity(p, p);
  if (constraint) {
    const Eigen::VectorXd& c = constraint->direction;
    if (c.size() != p || c.norm() == 0.0)
      throw InvalidInputError("LinearConstraint: bad direction");
    if (p == 1) {
      // Fully determined; nothing to optimize.
      return Eigen::VectorXd::Constant(1, constraint->value / c[0]);
    }
    base = c * (constraint->value / c.squaredNorm());
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(c);
    Eigen::MatrixXd Q = qr.householderQ();
    B = Q.rightCols(p - 1);  // orthonormal basis of the null space of c'
  }

  const Eigen::MatrixXd D = ws.design * B;
  const Eigen::VectorXd off0 = ws.off + ws.design * base;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(D.cols());
  Eigen::VectorXd eta = off0 + D * u;
  double obj = logit_objective(ws, eta, base + B * u, pen, ws.scale);

  for (int iter = 0; iter < kIrlsMaxIter; ++iter) {
    Eigen::VectorXd mu(eta.size()), var(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu[i] = logistic(eta[i]);
      var[i] = mu[i] * (1.0 - mu[i]);
    }
    Eigen::VectorXd grad =
        D.transpose() * (ws.w.array() * (ws.y - mu).array()).matrix();
    Eigen::MatrixXd H =
        D.transpose() * (ws.w.array() * var.array()).matrix().asDiagonal() * D;
    if (pen) {
      const Eigen::VectorXd coef = base + B * u;
      const Eigen::VectorXd pg =
          (pen->weight.array() * (coef - pen->target).array()).matrix() /
          ws.scale;
      grad -= B.transpose() * pg;
      H += B.transpose() * (pen->weight / ws.scale).asDiagonal() * B;
    }
    if (grad.norm() <= kIrlsGradTol) break;

    Eigen::VectorXd step;
    {
      Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
      const Eigen::VectorXd d = ldlt.vectorD();
      const double dmax = d.size() ? d.maxCoeff() : 0.0;
      if (ldlt.info() != Eigen::Success || !(dmax > 0.0) ||
          d.minCoeff() <= 1e-12 * dmax) {
        if (iter == 0)
          throw SingularFitError(
              "fit_weighted_glm[logit]: design rank-deficient on weight "
              "support");
        // Curvature vanished away from the start: the fit saturated. The
        // gradient is already below any practical resolution relative to the
        // objective plateau, so keep the current iterate.
        break;
      }
      step = ldlt.solve(grad);
    }

    // Step halving keeps Newton ascent monotone.
    double t = 1.0;
    for (int half = 0; half < 40; ++half) {
      Eigen::VectorXd u_try = u + t * step;
      Eigen::VectorXd eta_try = off0 + D * u_try;
      const double obj_try =
          logit_objective(ws, eta_try, base + B * u_try, pen, ws.scale);
      if (obj_try >= obj - 1e-14 * std::abs(obj)) {
        u = u_try;
        eta = eta_try;
        obj = obj_try;
        break;
      }
      t *= 0.5;
    }
    if ((base + B * u).norm() > kSeparationNorm)
      throw SeparationError(
          "fit_weighted_glm[logit]: coefficients diverged (separation)");
  }
  return base + B * u;
}

}  // namespace

void Dataset::validate() const {
  if (n() < 1) throw InvalidInputError("Dataset: empty response");
  if (X.rows() != n() || (Z.cols() > 0 && Z.rows() != n()))
    throw InvalidInputError("Dataset: covariate row count mismatch");
  if (!y.allFinite() || !X.allFinite() || !Z.allFinite())
    throw InvalidInputError("Dataset: non-finite entry");
  if (family.kind == FamilyKind::BernoulliLogit)
    for (Eigen::Index i = 0; i < n(); ++i) check_logit_response(y[i]);
  if (family.kind == FamilyKind::NormalKnownVariance && !(family.sigma > 0.0))
    throw InvalidInputError("Dataset: sigma must be > 0");
}

double logistic(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

double log_density(const Family& family, double y, double eta) {
  if (!std::isfinite(eta)) throw InvalidInputError("log_density: eta not finite");
  switch (family.kind) {
    case FamilyKind::NormalKnownVariance: {
      const double r = (y - eta) / family.sigma;
      return -0.5 * kLogTwoPi - std::log(family.sigma) - 0.5 * r * r;
    }
    case FamilyKind::BernoulliLogit:
      check_logit_response(y);
      return y * eta - softplus(eta);
  }
  throw InvalidInputError("log_density: unknown family");
}

Eigen::VectorXd log_density_vec(const Family& family, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& eta) {
  if (y.size() != eta.size())
    throw InvalidInputError("log_density_vec: size mismatch");
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    out[i] = log_density(family, y[i], eta[i]);
  return out;
}

EtaRatios eta_derivative_ratios(const Family& family, double y, double eta) {
  if (!std::isfinite(eta))
    throw InvalidInputError("eta_derivative_ratios: eta not finite");
  switch (family.kind) {
    case FamilyKind::NormalKnownVariance: {
      const double inv_var = 1.0 / (family.sigma * family.sigma);
      const double s = (y - eta) * inv_var;
      return {s, s * s - inv_var};
    }
    case FamilyKind::BernoulliLogit: {
      check_logit_response(y);
      const double pi = logistic(eta);
      const double s = y - pi;
      return {s, s * s - pi * (1.0 - pi)};
    }
  }
  throw InvalidInputError("eta_derivative_ratios: unknown family");
}

Eigen::VectorXd fit_weighted_glm(
    const Family& family, const Eigen::VectorXd& y,
    const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
    const Eigen::VectorXd& offsets,
    const std::optional<LinearConstraint>& constraint) {
  const WorkingSet ws = make_working_set(y, design, weights, offsets);
  if (family.kind == FamilyKind::NormalKnownVariance)
    return fit_normal(ws, family.sigma * family.sigma, nullptr, constraint);
  for (Eigen::Index i = 0; i < ws.y.size(); ++i) check_logit_response(ws.y[i]);
  return fit_logit(ws, nullptr, constraint);
}

Eigen::VectorXd fit_weighted_glm_penalized(
    const Family& family, const Eigen::VectorXd& y,
    const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
    const Eigen::VectorXd& offsets, const QuadraticPenalty& penalty,
    const std::optional<LinearConstraint>& constraint) {
  if (penalty.weight.size() != design.cols() ||
      penalty.target.size() != design.cols())
    throw InvalidInputError("QuadraticPenalty: dimension mismatch");
  const WorkingSet ws = make_working_set(y, design, weights, offsets);
  if (family.kind == FamilyKind::NormalKnownVariance)
    return fit_normal(ws, family.sigma * family.sigma, &penalty, constraint);
  for (Eigen::Index i = 0; i < ws.y.size(); ++i) check_logit_response(ws.y[i]);
  return fit_logit(ws, &penalty, constraint);
}

Eigen::VectorXd simulate_response(const Family& family,
                                  const Eigen::VectorXd& eta, Rng& rng) {
  if (!eta.allFinite())
    throw InvalidInputError("simulate_response: eta not finite");
  Eigen::VectorXd y(eta.size());
  switch (family.kind) {
    case FamilyKind::NormalKnownVariance:
      for (Eigen::Index i = 0; i < eta.size(); ++i)
        y[i] = eta[i] + family.sigma * rng.normal();
      break;
    case FamilyKind::BernoulliLogit:
      for (Eigen::Index i = 0; i < eta.size(); ++i)
        y[i] = rng.bernoulli(logistic(eta[i])) ? 1.0 : 0.0;
      break;
  }
  return y;
}

}  // namespace emtest
