#include "emtest/em_test.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iostream>
#include <limits>

#include "emtest/rng.hpp"

namespace emtest {

namespace {

constexpr double kBoundaryInset = 1e-8;
constexpr double kInnerRelTol = 1e-8;
constexpr double kSmoothEps = 1e-12;

double logsumexp_row(const Eigen::RowVectorXd& row) {
  const double m = row.maxCoeff();
  if (!std::isfinite(m))
    throw DegenerateLikelihoodError(
        "mixture density underflowed at an observation");
  return m + std::log((row.array() - m).exp().sum());
}

double penalty_sum(const Eigen::VectorXd& betas, double C) {
  double s = 0.0;
  for (Eigen::Index h = 0; h < betas.size(); ++h)
    s += penalty_p(betas[h], C);
  return s;
}

struct AltDensities {
  Eigen::MatrixXd logf1, logf2;  // n x m0
  Eigen::VectorXd logmix;        // n
  double loglik = 0.0;
};

AltDensities eval_alt(const AltState& state, const Dataset& data) {
  AltDensities d;
  d.logf1 = component_log_densities(state.theta1, state.gamma, data);
  d.logf2 = component_log_densities(state.theta2, state.gamma, data);
  const Eigen::Index n = data.n(), m0 = state.alphas.size();
  Eigen::RowVectorXd lw(2 * m0);
  for (Eigen::Index h = 0; h < m0; ++h) {
    lw[h] = std::log(state.alphas[h]) + std::log(state.betas[h]);
    lw[m0 + h] = std::log(state.alphas[h]) + std::log1p(-state.betas[h]);
  }
  d.logmix.resize(n);
  Eigen::RowVectorXd row(2 * m0);
  for (Eigen::Index i = 0; i < n; ++i) {
    row.head(m0) = d.logf1.row(i) + lw.head(m0);
    row.tail(m0) = d.logf2.row(i) + lw.tail(m0);
    d.logmix[i] = logsumexp_row(row);
  }
  d.loglik = d.logmix.sum();
  return d;
}

double penalized_loglik_of(const AltDensities& dens, const AltState& state,
                           double C) {
  return dens.loglik + penalty_sum(state.betas, C);
}

// MM anchor for the coupled coefficient-difference penalty: the group norm
// per covariate k collects the spread of every component row around the
// first row of theta1.
Eigen::VectorXd penalty_group_norms(const Eigen::MatrixXd& theta1,
                                    const Eigen::MatrixXd& theta2) {
  const Eigen::Index m0 = theta1.rows(), p = theta1.cols();
  Eigen::VectorXd s(p);
  for (Eigen::Index k = 0; k < p; ++k) {
    double g = 0.0;
    for (Eigen::Index h = 1; h < m0; ++h) {
      const double dlt = theta1(h, k) - theta1(0, k);
      g += dlt * dlt;
    }
    for (Eigen::Index h = 0; h < m0; ++h) {
      const double dlt = theta2(h, k) - theta1(0, k);
      g += dlt * dlt;
    }
    s[k] = std::sqrt(kSmoothEps + g);
  }
  return s;
}

// Quadratic majorizer of n * q_lambda for the (j, h) block, anchored at the
// current state. j = 0 updates theta1 row h, j = 1 updates theta2 row h.
QuadraticPenalty block_penalty(const AltState& cur, int j, int h, double n,
                               double lambda) {
  const Eigen::Index m0 = cur.theta1.rows(), p = cur.theta1.cols();
  const Eigen::VectorXd s = penalty_group_norms(cur.theta1, cur.theta2);
  QuadraticPenalty pen;
  pen.weight.resize(p);
  pen.target.resize(p);
  if (j == 0 && h == 0) {
    // The anchor row appears in every term of the group norm.
    const double terms = static_cast<double>(2 * m0 - 1);
    for (Eigen::Index k = 0; k < p; ++k) {
      double mu = 0.0;
      for (Eigen::Index l = 1; l < m0; ++l) mu += cur.theta1(l, k);
      for (Eigen::Index l = 0; l < m0; ++l) mu += cur.theta2(l, k);
      pen.weight[k] = n * lambda * terms / s[k];
      pen.target[k] = mu / terms;
    }
  } else {
    for (Eigen::Index k = 0; k < p; ++k) {
      pen.weight[k] = n * lambda / s[k];
      pen.target[k] = cur.theta1(0, k);
    }
  }
  return pen;
}

struct IterateResult {
  AltState state;
  AltDensities dens;
};

IterateResult em_iterate_impl(const AltState& state, const AltDensities& dens,
                              const Dataset& data, const NullFit& nullfit,
                              const EmTestConfig& cfg, bool freeze_beta) {
  const Eigen::Index n = data.n(), p = data.p(), q = data.q();
  const Eigen::Index m0 = state.alphas.size();
  const Eigen::VectorXd eta = partition_eta(nullfit);

  // E-step: split-pair membership weights.
  Eigen::MatrixXd w1(n, m0), w2(n, m0);
  for (Eigen::Index h = 0; h < m0; ++h) {
    const double la = std::log(state.alphas[h]);
    const double lb1 = la + std::log(state.betas[h]);
    const double lb2 = la + std::log1p(-state.betas[h]);
    w1.col(h) = (dens.logf1.col(h).array() + lb1 - dens.logmix.array()).exp();
    w2.col(h) = (dens.logf2.col(h).array() + lb2 - dens.logmix.array()).exp();
  }

  AltState next = state;
  next.alphas = (w1 + w2).colwise().mean();

  const Eigen::VectorXd z_off =
      q > 0 ? Eigen::VectorXd(data.Z * state.gamma) : Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p);

  auto update_theta = [&](int j, Eigen::Index h) {
    const Eigen::VectorXd& w = (j == 0) ? w1.col(h) : w2.col(h);
    Eigen::VectorXd theta;
    if (cfg.lambda > 0.0) {
      const QuadraticPenalty pen = block_penalty(
          state, j, static_cast<int>(h), static_cast<double>(n), cfg.lambda);
      theta = fit_weighted_glm_penalized(data.family, data.y, data.X, w, z_off,
                                         pen);
    } else {
      theta = fit_weighted_glm(data.family, data.y, data.X, w, z_off);
    }
    // Project back into the interval slab when the unconstrained optimum
    // leaves it; the equality refit at the violated boundary is the exact
    // slab-constrained maximizer of a concave objective.
    const double lo = std::isfinite(eta[h]) ? eta[h] + kBoundaryInset
                                            : -std::numeric_limits<double>::infinity();
    const double hi = eta[h + 1];
    const double s = theta.sum();
    double target = s;
    if (s > hi)
      target = hi;
    else if (s < lo)
      target = lo;
    if (target != s) {
      const LinearConstraint cons{ones, target};
      if (cfg.lambda > 0.0) {
        const QuadraticPenalty pen = block_penalty(
            state, j, static_cast<int>(h), static_cast<double>(n), cfg.lambda);
        theta = fit_weighted_glm_penalized(data.family, data.y, data.X, w,
                                           z_off, pen, cons);
      } else {
        theta = fit_weighted_glm(data.family, data.y, data.X, w, z_off, cons);
      }
    }
    if (j == 0)
      next.theta1.row(h) = theta.transpose();
    else
      next.theta2.row(h) = theta.transpose();
  };

  for (Eigen::Index h = 0; h < m0; ++h) {
    update_theta(0, h);
    update_theta(1, h);
  }

  if (!freeze_beta)
    for (Eigen::Index h = 0; h < m0; ++h)
      next.betas[h] = beta_update(w1.col(h).sum(), w2.col(h).sum(), cfg.C);

  if (q > 0) {
    Eigen::VectorXd y_rep(2 * m0 * n), w_rep(2 * m0 * n), off_rep(2 * m0 * n);
    Eigen::MatrixXd z_rep(2 * m0 * n, q);
    for (Eigen::Index h = 0; h < m0; ++h) {
      const Eigen::Index r1 = 2 * h * n, r2 = (2 * h + 1) * n;
      y_rep.segment(r1, n) = data.y;
      y_rep.segment(r2, n) = data.y;
      w_rep.segment(r1, n) = w1.col(h);
      w_rep.segment(r2, n) = w2.col(h);
      off_rep.segment(r1, n) = data.X * next.theta1.row(h).transpose();
      off_rep.segment(r2, n) = data.X * next.theta2.row(h).transpose();
      z_rep.middleRows(r1, n) = data.Z;
      z_rep.middleRows(r2, n) = data.Z;
    }
    next.gamma = fit_weighted_glm(data.family, y_rep, z_rep, w_rep, off_rep);
  }

  IterateResult out;
  out.dens = eval_alt(next, data);
  next.penalized_loglik = penalized_loglik_of(out.dens, next, cfg.C);
  out.state = std::move(next);
  return out;
}

std::uint64_t beta0_stream(std::uint64_t seed, const Eigen::VectorXd& beta0) {
  std::uint64_t s = seed;
  for (Eigen::Index h = 0; h < beta0.size(); ++h)
    s = derive_seed(s, std::bit_cast<std::uint64_t>(beta0[h]));
  return s;
}

}  // namespace

void EmTestConfig::validate() const {
  if (K < 1) throw InvalidInputError("EmTestConfig: K must be >= 1");
  if (!(C > 0.0)) throw InvalidInputError("EmTestConfig: C must be > 0");
  if (lambda < 0.0) throw InvalidInputError("EmTestConfig: lambda must be >= 0");
  if (inner_restarts < 1 || inner_max_iterations < 1)
    throw InvalidInputError("EmTestConfig: inner restart settings must be >= 1");
  if (beta_grid.empty())
    throw InvalidInputError("EmTestConfig: beta grid is empty");
  bool has_half = false;
  for (double b : beta_grid) {
    if (!(b > 0.0 && b <= 0.5))
      throw InvalidInputError("EmTestConfig: beta grid values must lie in (0, 0.5]");
    if (b == 0.5) has_half = true;
  }
  if (!has_half)
    throw InvalidInputError("EmTestConfig: beta grid must contain 0.5");
}

double penalty_p(double beta, double C) {
  if (!(C > 0.0)) throw InvalidInputError("penalty_p: C must be > 0");
  if (!(beta > 0.0 && beta < 1.0))
    throw InvalidInputError("penalty_p: beta must lie in (0, 1)");
  return C * std::log1p(-std::abs(1.0 - 2.0 * beta));
}

Eigen::VectorXd partition_eta(const NullFit& nullfit) {
  const Eigen::Index m0 = nullfit.psi.components();
  const Eigen::VectorXd sums = nullfit.psi.thetas.rowwise().sum();
  for (Eigen::Index h = 0; h + 1 < m0; ++h)
    if (sums[h] > sums[h + 1])
      throw InvalidInputError("partition_eta: null fit not canonically ordered");
  Eigen::VectorXd eta(m0 + 1);
  eta[0] = -std::numeric_limits<double>::infinity();
  eta[m0] = std::numeric_limits<double>::infinity();
  for (Eigen::Index h = 0; h + 1 < m0; ++h) {
    const double gap = sums[h + 1] - sums[h];
    const double scale = std::max({1.0, std::abs(sums[h]), std::abs(sums[h + 1])});
    if (gap <= 1e-7 * scale)
      throw DegeneratePartitionError(
          "partition_eta: components share a coefficient sum; intervals would "
          "be empty");
    eta[h + 1] = 0.5 * (sums[h] + sums[h + 1]);
  }
  return eta;
}

double beta_update(double W1, double W2, double C) {
  if (W1 < 0.0 || W2 < 0.0 || !(W1 + W2 > 0.0))
    throw InvalidInputError("beta_update: weights must be nonnegative with positive sum");
  const double low = (W1 + C) / (W1 + W2 + C);
  if (low <= 0.5) return low;
  const double high = W1 / (W1 + W2 + C);
  if (high >= 0.5) return high;
  return 0.5;
}

AltState em_iterate(const AltState& state, const Dataset& data,
                    const NullFit& nullfit, const EmTestConfig& config,
                    bool freeze_beta) {
  const AltDensities dens = eval_alt(state, data);
  return em_iterate_impl(state, dens, data, nullfit, config, freeze_beta).state;
}

AltState initialize_alternative(const NullFit& nullfit,
                                const Eigen::VectorXd& beta0,
                                const Dataset& data,
                                const EmTestConfig& config) {
  config.validate();
  const Eigen::Index m0 = nullfit.psi.components();
  const Eigen::Index p = data.p();
  if (beta0.size() != m0)
    throw InvalidInputError("initialize_alternative: beta0 size mismatch");
  for (Eigen::Index h = 0; h < m0; ++h)
    if (!(beta0[h] > 0.0 && beta0[h] <= 0.5))
      throw InvalidInputError("initialize_alternative: beta0 outside (0, 0.5]");

  const Eigen::VectorXd eta = partition_eta(nullfit);
  const Eigen::VectorXd sums = nullfit.psi.thetas.rowwise().sum();

  // Perturbation scale per component: half-width of the interval along the
  // all-ones direction, or the distance to the single finite boundary, or a
  // magnitude-based default when unbounded on both sides.
  Eigen::VectorXd width(m0), head(m0), tail(m0);
  for (Eigen::Index h = 0; h < m0; ++h) {
    head[h] = eta[h + 1] - sums[h];
    tail[h] = sums[h] - eta[h];
    if (std::isfinite(eta[h]) && std::isfinite(eta[h + 1]))
      width[h] = 0.5 * (eta[h + 1] - eta[h]);
    else if (std::isfinite(eta[h]))
      width[h] = tail[h];
    else if (std::isfinite(eta[h + 1]))
      width[h] = head[h];
    else
      width[h] = std::max(1.0, std::abs(sums[h]));
  }

  static const double kDeltaFactors[3] = {0.02, 0.1, 0.3};
  Rng rng(beta0_stream(config.seed, beta0));

  AltState base;
  base.alphas = nullfit.psi.alphas;
  base.betas = beta0;
  base.theta1 = nullfit.psi.thetas;
  base.theta2 = nullfit.psi.thetas;
  base.gamma = nullfit.gamma;

  bool have_best = false;
  AltState best;
  std::exception_ptr first_error;

  for (int j = 0; j < config.inner_restarts; ++j) {
    AltState start = base;
    if (j > 0) {
      const double factor = kDeltaFactors[(j - 1) % 3];
      for (Eigen::Index h = 0; h < m0; ++h) {
        const Eigen::VectorXd e = rng.unit_sphere(static_cast<int>(p));
        double delta = factor * width[h];
        const double move = std::abs(e.sum());
        if (move > 1e-12) {
          const double room = 0.9 * std::min(head[h], tail[h]);
          if (std::isfinite(room)) delta = std::min(delta, room / move);
        }
        start.theta1.row(h) = (nullfit.psi.thetas.row(h).transpose() + delta * e)
                                  .transpose();
        start.theta2.row(h) = (nullfit.psi.thetas.row(h).transpose() - delta * e)
                                  .transpose();
      }
    }
    try {
      AltDensities dens = eval_alt(start, data);
      start.penalized_loglik = penalized_loglik_of(dens, start, config.C);
      for (int it = 0; it < config.inner_max_iterations; ++it) {
        IterateResult res =
            em_iterate_impl(start, dens, data, nullfit, config, true);
        const double change =
            std::abs(res.state.penalized_loglik - start.penalized_loglik);
        start = std::move(res.state);
        dens = std::move(res.dens);
        if (change < kInnerRelTol * (1.0 + std::abs(start.penalized_loglik)))
          break;
      }
      if (!have_best || start.penalized_loglik > best.penalized_loglik) {
        best = start;
        have_best = true;
      }
    } catch (const Error&) {
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (!have_best) {
    if (first_error) std::rethrow_exception(first_error);
    throw NumericalError("initialize_alternative: no start succeeded");
  }
  return best;
}

EmTestResult em_statistic(const Dataset& data, const NullFit& nullfit, int m0,
                          const EmTestConfig& config) {
  config.validate();
  if (nullfit.psi.components() != m0)
    throw InvalidInputError("em_statistic: null fit order mismatch");
  const Eigen::VectorXd eta = partition_eta(nullfit);  // fail fast
  (void)eta;

  std::vector<double> grid = config.beta_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const std::size_t B = grid.size();
  std::size_t total = 1;
  for (int h = 0; h < m0; ++h) total *= B;

  EmTestResult result;
  result.null_loglik = nullfit.loglik;
  result.per_grid.reserve(total);

  std::vector<std::size_t> odo(m0, 0);
  for (std::size_t g = 0; g < total; ++g) {
    GridPointResult pt;
    pt.beta0.resize(m0);
    for (int h = 0; h < m0; ++h) pt.beta0[h] = grid[odo[h]];
    try {
      AltState state = initialize_alternative(nullfit, pt.beta0, data, config);
      pt.trace.push_back(2.0 * (state.penalized_loglik - nullfit.loglik));
      for (int k = 2; k <= config.K; ++k) {
        state = em_iterate(state, data, nullfit, config, false);
        pt.trace.push_back(2.0 * (state.penalized_loglik - nullfit.loglik));
      }
      pt.state = std::move(state);
    } catch (const Error& e) {
      pt.failed = true;
      pt.error = e.what();
      std::cerr << "warning: em_statistic grid point failed: " << e.what()
                << "\n";
    }
    result.per_grid.push_back(std::move(pt));

    for (int h = 0; h < m0; ++h) {
      if (++odo[h] < B) break;
      odo[h] = 0;
    }
  }

  bool any = false;
  double stat = -std::numeric_limits<double>::infinity();
  for (const GridPointResult& pt : result.per_grid)
    if (!pt.failed) {
      any = true;
      stat = std::max(stat, pt.trace.back());
    }
  if (!any)
    throw NumericalError("em_statistic: every grid point failed (" +
                         result.per_grid.front().error + ")");
  result.statistic = stat;
  return result;
}

}  // namespace emtest
